#include "facet/multitask.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "facet/error.hpp"

namespace facet {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Working copy of the network in Eigen form.
struct Net {
    HeadKind kind = HeadKind::Ordinal;
    Eigen::VectorXd mean, scale;
    RowMatrix W;             // H x (D+1)
    Eigen::VectorXd b;       // H
    RowMatrix V;             // ordinal: items x (H+1); unused for categorical
    std::vector<Eigen::VectorXd> thresholds_raw;  // ordinal: base then gap params
    std::vector<RowMatrix> C;                      // categorical weights
    std::vector<Eigen::VectorXd> c;                // categorical biases
    std::vector<int> categories;
};

Eigen::VectorXd input_vector(const Net& net, std::span<const double> features, double severity) {
    const auto d = static_cast<Eigen::Index>(features.size());
    Eigen::VectorXd u(d + 1);
    for (Eigen::Index j = 0; j < d; ++j) u[j] = (features[static_cast<std::size_t>(j)] - net.mean[j]) / net.scale[j];
    u[d] = severity;
    return u;
}

std::vector<double> ordinal_thresholds(const Eigen::VectorXd& raw) {
    std::vector<double> b(static_cast<std::size_t>(raw.size()));
    b[0] = raw[0];
    for (Eigen::Index k = 1; k < raw.size(); ++k) b[static_cast<std::size_t>(k)] = b[static_cast<std::size_t>(k - 1)] - softplus(raw[k]);
    return b;
}

void softmax_inplace(Eigen::VectorXd& v) {
    const double m = v.maxCoeff();
    v = (v.array() - m).exp();
    v /= v.sum();
}

Net to_net(const MultitaskHead& h) {
    Net n;
    n.kind = h.kind;
    n.categories = h.categories;
    const auto D = static_cast<Eigen::Index>(h.feature_dim);
    const auto H = static_cast<Eigen::Index>(h.hidden_units);
    n.mean = Eigen::Map<const Eigen::VectorXd>(h.feature_mean.data(), D);
    n.scale = Eigen::Map<const Eigen::VectorXd>(h.feature_scale.data(), D);
    n.W = Eigen::Map<const RowMatrix>(h.hidden_weight.data(), H, D + 1);
    n.b = Eigen::Map<const Eigen::VectorXd>(h.hidden_bias.data(), H);
    const auto items = static_cast<Eigen::Index>(h.item_ids.size());
    if (h.kind == HeadKind::Ordinal) {
        n.V.resize(items, H + 1);
        for (Eigen::Index i = 0; i < items; ++i) {
            const auto& o = h.ordinal[static_cast<std::size_t>(i)];
            n.V.row(i) = Eigen::Map<const Eigen::RowVectorXd>(o.weight.data(), H + 1);
            Eigen::VectorXd raw(static_cast<Eigen::Index>(o.gap_params.size()) + 1);
            raw[0] = o.base_bias;
            for (std::size_t k = 0; k < o.gap_params.size(); ++k) raw[static_cast<Eigen::Index>(k) + 1] = o.gap_params[k];
            n.thresholds_raw.push_back(raw);
        }
    } else {
        for (Eigen::Index i = 0; i < items; ++i) {
            const auto& ch = h.categorical[static_cast<std::size_t>(i)];
            n.C.emplace_back(Eigen::Map<const RowMatrix>(ch.weight.data(), ch.categories, H + 1));
            n.c.emplace_back(Eigen::Map<const Eigen::VectorXd>(ch.bias.data(), ch.categories));
        }
    }
    return n;
}

void from_net(const Net& n, MultitaskHead& h) {
    h.hidden_weight.assign(n.W.data(), n.W.data() + n.W.size());
    h.hidden_bias.assign(n.b.data(), n.b.data() + n.b.size());
    h.ordinal.clear();
    h.categorical.clear();
    if (n.kind == HeadKind::Ordinal) {
        for (Eigen::Index i = 0; i < n.V.rows(); ++i) {
            OrdinalHead o;
            o.weight.assign(n.V.row(i).data(), n.V.row(i).data() + n.V.cols());
            const auto& raw = n.thresholds_raw[static_cast<std::size_t>(i)];
            o.base_bias = raw[0];
            o.gap_params.assign(raw.data() + 1, raw.data() + raw.size());
            h.ordinal.push_back(std::move(o));
        }
    } else {
        for (std::size_t i = 0; i < n.C.size(); ++i) {
            CategoricalHead ch;
            ch.categories = static_cast<int>(n.C[i].rows());
            ch.weight.assign(n.C[i].data(), n.C[i].data() + n.C[i].size());
            ch.bias.assign(n.c[i].data(), n.c[i].data() + n.c[i].size());
            h.categorical.push_back(std::move(ch));
        }
    }
}

// Head input [relu(W u + b); severity] without dropout.
Eigen::VectorXd head_input(const Net& net, const Eigen::VectorXd& u) {
    const auto H = net.W.rows();
    Eigen::VectorXd v(H + 1);
    v.head(H) = (net.W * u + net.b).cwiseMax(0.0);
    v[H] = u[u.size() - 1];
    return v;
}

std::vector<double> item_distribution(const Net& net, std::size_t item, const Eigen::VectorXd& v) {
    if (net.kind == HeadKind::Ordinal) {
        const double z = net.V.row(static_cast<Eigen::Index>(item)).dot(v);
        return ordinal_activation(z, ordinal_thresholds(net.thresholds_raw[item])).categorical;
    }
    Eigen::VectorXd logits = net.C[item] * v + net.c[item];
    softmax_inplace(logits);
    return {logits.data(), logits.data() + logits.size()};
}

double item_weight(const std::vector<double>& weights, std::size_t i) { return weights.empty() ? 1.0 : weights[i]; }

// Loss of one row given head input v; accumulates gradients into g (same
// shape as net) and dv when g is non-null.
double row_loss(const Net& net, const TrainingRow& row, const Eigen::VectorXd& v, const std::vector<double>& weights,
                Net* g, Eigen::VectorXd* dv) {
    double loss = 0.0;
    for (std::size_t i = 0; i < row.labels.size(); ++i) {
        if (!row.labels[i]) continue;
        const int y = *row.labels[i];
        const double w = item_weight(weights, i);
        const auto ii = static_cast<Eigen::Index>(i);
        if (net.kind == HeadKind::Ordinal) {
            const auto& raw = net.thresholds_raw[i];
            const auto b = ordinal_thresholds(raw);
            const double z = net.V.row(ii).dot(v);
            std::vector<double> slopes(b.size());
            loss += w * ordinal_loss_and_slopes(z, b, y, {}, slopes);
            if (!g) continue;
            double total = 0.0;
            for (double s : slopes) total += s;
            total *= w;
            g->V.row(ii) += total * v.transpose();
            *dv += total * net.V.row(ii).transpose();
            auto& graw = g->thresholds_raw[i];
            graw[0] += total;
            double tail = 0.0;
            for (std::size_t k = b.size(); k-- > 1;) {
                tail += w * slopes[k];
                graw[static_cast<Eigen::Index>(k)] -= logistic(raw[static_cast<Eigen::Index>(k)]) * tail;
            }
        } else {
            Eigen::VectorXd p = net.C[i] * v + net.c[i];
            softmax_inplace(p);
            loss -= w * std::log(std::max(p[y], 1e-12));
            if (!g) continue;
            p[y] -= 1.0;
            p *= w;
            g->C[i] += p * v.transpose();
            g->c[i] += p;
            *dv += net.C[i].transpose() * p;
        }
    }
    return loss;
}

Net zero_like(const Net& n) {
    Net z = n;
    z.W.setZero();
    z.b.setZero();
    if (n.kind == HeadKind::Ordinal) {
        z.V.setZero();
        for (auto& t : z.thresholds_raw) t.setZero();
    } else {
        for (auto& m : z.C) m.setZero();
        for (auto& v : z.c) v.setZero();
    }
    return z;
}

void check_rows(const std::vector<TrainingRow>& rows, std::size_t dim, const std::vector<int>& categories) {
    for (const auto& r : rows) {
        if (r.features.size() != dim) {
            throw InputError("training row for comment '" + r.comment_id + "': expected " + std::to_string(dim) +
                             " features, got " + std::to_string(r.features.size()));
        }
        if (r.labels.size() != categories.size()) {
            throw InputError("training row for comment '" + r.comment_id + "': label count mismatch");
        }
        if (!std::isfinite(r.severity)) throw InputError("training row for comment '" + r.comment_id + "': non-finite severity");
        for (double f : r.features) {
            if (!std::isfinite(f)) throw InputError("training row for comment '" + r.comment_id + "': non-finite feature");
        }
        for (std::size_t i = 0; i < r.labels.size(); ++i) {
            if (r.labels[i] && (*r.labels[i] < 0 || *r.labels[i] >= categories[i])) {
                throw InputError("training row for comment '" + r.comment_id + "': label out of range");
            }
        }
    }
}

}  // namespace

void MultitaskConfig::validate() const {
    if (hidden_units < 1) throw ConfigError("multitask: hidden_units must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("multitask: dropout must lie in [0, 1)");
    if (!(learning_rate > 0.0)) throw ConfigError("multitask: learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("multitask: batch_size must be positive");
    if (epochs < 1) throw ConfigError("multitask: epochs must be positive");
    for (double w : item_weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("multitask: item weights must be finite and nonnegative");
    }
}

MultitaskHead train_multitask(const std::vector<TrainingRow>& rows, const std::vector<std::string>& item_ids,
                              const std::vector<int>& categories, const MultitaskConfig& config,
                              const std::vector<TrainingRow>* validation, TrainingLog* log) {
    config.validate();
    if (rows.empty()) throw InputError("train_multitask: no training rows");
    if (item_ids.empty() || item_ids.size() != categories.size()) throw InputError("train_multitask: item list mismatch");
    for (int k : categories) {
        if (k < 2) throw InputError("train_multitask: every item needs at least two categories");
    }
    if (!config.item_weights.empty() && config.item_weights.size() != item_ids.size()) {
        throw ConfigError("multitask: item_weights must have one entry per item");
    }
    const std::size_t D = rows.front().features.size();
    check_rows(rows, D, categories);
    if (validation) {
        check_rows(*validation, D, categories);
        std::unordered_set<std::string> train_ids;
        for (const auto& r : rows) train_ids.insert(r.comment_id);
        for (const auto& r : *validation) {
            if (train_ids.count(r.comment_id)) {
                throw SplitError("comment '" + r.comment_id + "' appears in both training and validation rows");
            }
        }
    }

    const auto H = static_cast<Eigen::Index>(config.hidden_units);
    const auto Di = static_cast<Eigen::Index>(D);
    std::mt19937_64 rng(config.seed);
    Net net;
    net.kind = config.head;
    net.categories = categories;
    net.mean = Eigen::VectorXd::Zero(Di);
    net.scale = Eigen::VectorXd::Ones(Di);
    if (config.standardize_features) {
        for (const auto& r : rows) net.mean += Eigen::Map<const Eigen::VectorXd>(r.features.data(), Di);
        net.mean /= static_cast<double>(rows.size());
        Eigen::VectorXd ss = Eigen::VectorXd::Zero(Di);
        for (const auto& r : rows) {
            ss += (Eigen::Map<const Eigen::VectorXd>(r.features.data(), Di) - net.mean).array().square().matrix();
        }
        for (Eigen::Index j = 0; j < Di; ++j) {
            const double sd = std::sqrt(ss[j] / static_cast<double>(rows.size()));
            net.scale[j] = sd > 1e-12 ? sd : 1.0;
        }
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    net.W.resize(H, Di + 1);
    const double w_scale = std::sqrt(2.0 / static_cast<double>(Di + 1));
    for (Eigen::Index a = 0; a < net.W.size(); ++a) net.W.data()[a] = w_scale * normal(rng);
    net.b = Eigen::VectorXd::Zero(H);
    const double v_scale = std::sqrt(1.0 / static_cast<double>(H + 1));

    // Start thresholds / biases at the observed marginal distribution.
    const std::size_t items = item_ids.size();
    std::vector<std::vector<double>> counts(items);
    for (std::size_t i = 0; i < items; ++i) counts[i].assign(static_cast<std::size_t>(categories[i]), 0.5);
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < items; ++i) {
            if (r.labels[i]) counts[i][static_cast<std::size_t>(*r.labels[i])] += 1.0;
        }
    }
    if (config.head == HeadKind::Ordinal) {
        net.V.resize(static_cast<Eigen::Index>(items), H + 1);
        for (Eigen::Index a = 0; a < net.V.size(); ++a) net.V.data()[a] = v_scale * normal(rng);
        for (std::size_t i = 0; i < items; ++i) {
            const double total = std::accumulate(counts[i].begin(), counts[i].end(), 0.0);
            std::vector<double> b;
            double above = total;
            for (std::size_t k = 0; k + 1 < counts[i].size(); ++k) {
                above -= counts[i][k];
                const double p = above / total;
                b.push_back(std::log(p / (1.0 - p)));
            }
            const auto head = OrdinalHead::from_thresholds({}, b);
            Eigen::VectorXd raw(static_cast<Eigen::Index>(b.size()));
            raw[0] = head.base_bias;
            for (std::size_t k = 0; k < head.gap_params.size(); ++k) raw[static_cast<Eigen::Index>(k) + 1] = head.gap_params[k];
            net.thresholds_raw.push_back(raw);
        }
    } else {
        for (std::size_t i = 0; i < items; ++i) {
            RowMatrix m(categories[i], H + 1);
            for (Eigen::Index a = 0; a < m.size(); ++a) m.data()[a] = v_scale * normal(rng);
            net.C.push_back(m);
            Eigen::VectorXd bias(categories[i]);
            for (int k = 0; k < categories[i]; ++k) bias[k] = std::log(counts[i][static_cast<std::size_t>(k)]);
            net.c.push_back(bias.array() - bias.mean());
        }
    }

    std::vector<Eigen::VectorXd> inputs;
    inputs.reserve(rows.size());
    for (const auto& r : rows) inputs.push_back(input_vector(net, r.features, r.severity));

    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::bernoulli_distribution keep(1.0 - config.dropout);
    const double keep_scale = 1.0 / (1.0 - config.dropout);
    Net grad = zero_like(net);
    Eigen::VectorXd dv(H + 1);
    Eigen::VectorXd mask(H);

    MultitaskHead out;
    out.kind = config.head;
    out.item_ids = item_ids;
    out.categories = categories;
    out.feature_dim = D;
    out.hidden_units = config.hidden_units;
    out.feature_mean.assign(net.mean.data(), net.mean.data() + Di);
    out.feature_scale.assign(net.scale.data(), net.scale.data() + Di);

    const auto batch = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            grad = zero_like(net);
            for (std::size_t pos = start; pos < end; ++pos) {
                const std::size_t r = order[pos];
                const auto& u = inputs[r];
                const Eigen::VectorXd a = net.W * u + net.b;
                for (Eigen::Index j = 0; j < H; ++j) mask[j] = keep(rng) ? keep_scale : 0.0;
                Eigen::VectorXd v(H + 1);
                v.head(H) = a.cwiseMax(0.0).cwiseProduct(mask);
                v[H] = u[Di];
                dv.setZero();
                epoch_loss += row_loss(net, rows[r], v, config.item_weights, &grad, &dv);
                Eigen::VectorXd da = dv.head(H).cwiseProduct(mask);
                for (Eigen::Index j = 0; j < H; ++j) {
                    if (a[j] <= 0.0) da[j] = 0.0;
                }
                grad.W += da * u.transpose();
                grad.b += da;
            }
            const double step = config.learning_rate / static_cast<double>(end - start);
            net.W -= step * grad.W;
            net.b -= step * grad.b;
            if (net.kind == HeadKind::Ordinal) {
                net.V -= step * grad.V;
                for (std::size_t i = 0; i < items; ++i) net.thresholds_raw[i] -= step * grad.thresholds_raw[i];
            } else {
                for (std::size_t i = 0; i < items; ++i) {
                    net.C[i] -= step * grad.C[i];
                    net.c[i] -= step * grad.c[i];
                }
            }
        }
        if (log) {
            log->train_loss.push_back(epoch_loss / static_cast<double>(rows.size()));
            if (validation && !validation->empty()) {
                from_net(net, out);
                log->validation_loss.push_back(multitask_loss(out, *validation, config.item_weights));
            }
        }
    }
    from_net(net, out);
    return out;
}

double multitask_loss(const MultitaskHead& head, const std::vector<TrainingRow>& rows,
                      const std::vector<double>& item_weights) {
    if (rows.empty()) return 0.0;
    const Net net = to_net(head);
    check_rows(rows, head.feature_dim, head.categories);
    double total = 0.0;
    for (const auto& r : rows) {
        const auto v = head_input(net, input_vector(net, r.features, r.severity));
        total += row_loss(net, r, v, item_weights, nullptr, nullptr);
    }
    return total / static_cast<double>(rows.size());
}

std::vector<RatingDistribution> predict_distributions(const MultitaskHead& head, std::span<const PredictionRow> rows) {
    const Net net = to_net(head);
    std::vector<RatingDistribution> out;
    out.reserve(rows.size() * head.item_ids.size());
    for (const auto& r : rows) {
        if (r.features.size() != head.feature_dim) {
            throw InputError("prediction row for comment '" + r.comment_id + "': expected " +
                             std::to_string(head.feature_dim) + " features");
        }
        const auto v = head_input(net, input_vector(net, r.features, r.severity));
        for (std::size_t i = 0; i < head.item_ids.size(); ++i) {
            out.push_back(RatingDistribution{r.comment_id, head.item_ids[i], item_distribution(net, i, v)});
        }
    }
    return out;
}

UnimodalityAudit unimodality_audit(const std::vector<RatingDistribution>& distributions) {
    UnimodalityAudit audit;
    for (const auto& d : distributions) {
        ++audit.checked;
        if (is_unimodal(d.probabilities)) ++audit.unimodal;
    }
    return audit;
}

}  // namespace facet
