#include "facet/polychoric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>

#include "facet/error.hpp"

namespace facet {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();
constexpr double kTail = 9.0;  // Phi(-9) ~ 1e-19

double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

double bivariate_normal_cdf(double h, double k, double rho) {
    if (h == -kInfinity || k == -kInfinity) return 0.0;
    if (h == kInfinity) return phi_cdf(k);
    if (k == kInfinity) return phi_cdf(h);
    if (h < -kTail || k < -kTail) return 0.0;
    const double s = std::sqrt(std::max(0.0, (1.0 - rho) * (1.0 + rho)));
    if (s == 0.0) return rho > 0 ? phi_cdf(std::min(h, k)) : std::max(0.0, phi_cdf(h) - phi_cdf(-k));
    const double upper = std::min(h, kTail);
    auto integrand = [&](double x) {
        return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI) * phi_cdf((k - rho * x) / s);
    };
    double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, -kTail, upper, 15, 1e-13);
    if (h > kTail) value += (1.0 - phi_cdf(kTail)) * phi_cdf(k);
    return std::clamp(value, 0.0, 1.0);
}

double polychoric_correlation(std::span<const std::pair<int, int>> pairs) {
    if (pairs.empty()) throw InputError("polychoric: no pairs");
    int ka = 0, kb = 0;
    for (const auto& [a, b] : pairs) {
        if (a < 0 || b < 0) throw InputError("polychoric: negative category");
        ka = std::max(ka, a + 1);
        kb = std::max(kb, b + 1);
    }
    std::vector<std::vector<double>> counts(static_cast<std::size_t>(ka), std::vector<double>(static_cast<std::size_t>(kb), 0.0));
    std::vector<double> ma(static_cast<std::size_t>(ka), 0.0), mb(static_cast<std::size_t>(kb), 0.0);
    for (const auto& [a, b] : pairs) {
        counts[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] += 1.0;
        ma[static_cast<std::size_t>(a)] += 1.0;
        mb[static_cast<std::size_t>(b)] += 1.0;
    }
    const double n = static_cast<double>(pairs.size());
    const boost::math::normal normal;
    auto thresholds = [&](const std::vector<double>& margin) {
        std::vector<double> t(margin.size() + 1);
        t.front() = -kInfinity;
        t.back() = kInfinity;
        double cum = 0.0;
        for (std::size_t c = 0; c + 1 < margin.size(); ++c) {
            cum += margin[c] / n;
            t[c + 1] = cum <= 0.0 ? -kInfinity : cum >= 1.0 ? kInfinity : boost::math::quantile(normal, cum);
        }
        return t;
    };
    const auto ta = thresholds(ma);
    const auto tb = thresholds(mb);

    auto negative_loglik = [&](double rho) {
        // Cumulative grid, then cell probabilities by inclusion-exclusion.
        std::vector<std::vector<double>> grid(ta.size(), std::vector<double>(tb.size()));
        for (std::size_t i = 0; i < ta.size(); ++i) {
            for (std::size_t j = 0; j < tb.size(); ++j) grid[i][j] = bivariate_normal_cdf(ta[i], tb[j], rho);
        }
        double ll = 0.0;
        for (std::size_t a = 0; a < counts.size(); ++a) {
            for (std::size_t b = 0; b < counts[a].size(); ++b) {
                if (counts[a][b] == 0.0) continue;
                const double p = grid[a + 1][b + 1] - grid[a][b + 1] - grid[a + 1][b] + grid[a][b];
                ll += counts[a][b] * std::log(std::max(p, 1e-300));
            }
        }
        return -ll;
    };
    const auto best = boost::math::tools::brent_find_minima(negative_loglik, -0.9999, 0.9999, 24);
    return best.first;
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const auto [xlo, xhi] = std::minmax_element(x.begin(), x.end());
    const auto [ylo, yhi] = std::minmax_element(y.begin(), y.end());
    if (*xlo == *xhi || *ylo == *yhi) return std::numeric_limits<double>::quiet_NaN();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace facet
