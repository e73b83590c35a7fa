#include "aslice/slice_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aslice/errors.hpp"
#include "aslice/rng.hpp"
#include "binary_io.hpp"
#include "file_util.hpp"
#include "json.hpp"

namespace aslice {

using nlohmann::json;

std::string_view to_string(ClassWeight w) { return w == ClassWeight::none ? "none" : "balanced"; }

ClassWeight parse_class_weight(std::string_view name) {
    if (name == "none") return ClassWeight::none;
    if (name == "balanced") return ClassWeight::balanced;
    throw ConfigError("unknown class weighting: " + std::string(name));
}

std::string_view to_string(ClassifierKind kind) { return kind == ClassifierKind::svm ? "svm" : "mlp"; }

ClassifierKind parse_classifier_kind(std::string_view name) {
    if (name == "svm") return ClassifierKind::svm;
    if (name == "mlp") return ClassifierKind::mlp;
    throw ConfigError("unknown classifier: " + std::string(name));
}

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
    if (!(l2 >= 0.0) || !std::isfinite(l2)) throw ConfigError("l2 must be non-negative");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
}

TrainConfig TrainConfig::svm_defaults() { return TrainConfig{30, 0.1, 1e-4, 1, ClassWeight::balanced, 0}; }

TrainConfig TrainConfig::mlp_defaults() { return TrainConfig{100, 1e-3, 1e-4, 32, ClassWeight::balanced, 0}; }

void ClassifierSpec::validate() const {
    train.validate();
    if (kind == ClassifierKind::mlp) {
        if (hidden.empty()) throw ConfigError("an MLP needs at least one hidden layer; use the SVM otherwise");
        for (auto h : hidden)
            if (h == 0) throw ConfigError("hidden layer sizes must be positive");
    }
}

double sigmoid(double z) noexcept {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

namespace {

double softplus(double z) noexcept { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

void check_view(const TrainingView& data) {
    if (data.rows.size() != data.labels.size()) throw ConfigError("rows and labels differ in length");
    std::size_t pos = 0;
    for (auto l : data.labels) {
        if (l > 1) throw ConfigError("labels must be 0 or 1");
        pos += l;
    }
    if (pos == 0 || pos == data.labels.size())
        throw DegenerateLabels("training labels contain a single class (" + std::to_string(pos) + " positive of " +
                               std::to_string(data.labels.size()) + ")");
}

std::vector<double> class_weights(std::span<const std::uint8_t> labels, ClassWeight mode) {
    std::vector<double> w(labels.size(), 1.0);
    if (mode == ClassWeight::none) return w;
    const double n = static_cast<double>(labels.size());
    const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
    const double neg = n - pos;
    for (std::size_t i = 0; i < labels.size(); ++i) w[i] = labels[i] ? n / (2.0 * pos) : n / (2.0 * neg);
    return w;
}

// Maximum-likelihood slope of sigmoid(alpha * m) against Platt's smoothed targets.
double fit_alpha(std::span<const double> margins, std::span<const std::uint8_t> labels) {
    const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
    const double neg = static_cast<double>(labels.size()) - pos;
    const double t_pos = (pos + 1.0) / (pos + 2.0);
    const double t_neg = 1.0 / (neg + 2.0);
    auto derivative = [&](double a) {
        double g = 0.0;
        double h = 0.0;
        for (std::size_t i = 0; i < margins.size(); ++i) {
            const double p = sigmoid(a * margins[i]);
            const double t = labels[i] ? t_pos : t_neg;
            g += (p - t) * margins[i];
            h += p * (1.0 - p) * margins[i] * margins[i];
        }
        return std::pair{g, h};
    };
    constexpr double kMin = 1e-6;
    constexpr double kMax = 1e6;
    double lo = kMin;
    if (derivative(lo).first >= 0.0) return kMin;
    double hi = 1.0;
    while (derivative(hi).first < 0.0) {
        lo = hi;
        hi *= 4.0;
        if (hi >= kMax) return kMax;
    }
    double a = 0.5 * (lo + hi);
    for (int it = 0; it < 100; ++it) {
        auto [g, h] = derivative(a);
        if (g < 0.0)
            lo = a;
        else
            hi = a;
        if (std::abs(g) < 1e-12 || hi - lo < 1e-12 * hi) break;
        double next = h > 0.0 ? a - g / h : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        a = next;
    }
    return a;
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear SVM

double svm_objective(const LinearModel& model, const TrainingView& data, const TrainConfig& cfg) {
    const auto cw = class_weights(data.labels, cfg.class_weight);
    double hinge = 0.0;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
        const double y = data.labels[i] ? 1.0 : -1.0;
        hinge += cw[i] * std::max(0.0, 1.0 - y * model.margin(data.X, data.rows[i]));
    }
    double wsq = 0.0;
    for (double w : model.weights) wsq += w * w;
    return 0.5 * cfg.l2 * wsq + hinge / static_cast<double>(data.rows.size());
}

LinearModel train_linear_svm(const TrainingView& data, const TrainConfig& cfg, std::vector<double>* epoch_objective) {
    cfg.validate();
    check_view(data);
    const std::size_t n = data.rows.size();
    const std::size_t d = data.X.cols();
    const auto cw = class_weights(data.labels, cfg.class_weight);

    // w = scale * v keeps the shrinkage step O(1) for sparse rows.
    std::vector<double> v(d, 0.0);
    double scale = 1.0;
    double bias = 0.0;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> coef;
    Rng rng(cfg.seed);
    std::uint64_t t = 0;
    LinearModel model;
    if (epoch_objective) epoch_objective->clear();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            ++t;
            const double eta = cfg.learning_rate / std::sqrt(static_cast<double>(t));
            coef.clear();
            double bias_grad = 0.0;
            for (std::size_t p = start; p < end; ++p) {
                const std::size_t i = order[p];
                const double y = data.labels[i] ? 1.0 : -1.0;
                const double m = scale * data.X.dot(data.rows[i], v) + bias;
                const double c = (y * m < 1.0) ? cw[i] * y * inv_batch : 0.0;
                coef.push_back(c);
                bias_grad -= c;
            }
            // Proximal L2 step: w <- (w - eta * g) / (1 + eta * lambda).
            for (std::size_t p = start; p < end; ++p)
                if (coef[p - start] != 0.0) data.X.axpy(data.rows[order[p]], eta * coef[p - start] / scale, v);
            scale /= 1.0 + eta * cfg.l2;
            bias -= eta * bias_grad;
            if (scale < 1e-9) {
                for (auto& x : v) x *= scale;
                scale = 1.0;
            }
        }
        if (epoch_objective) {
            model.weights = v;
            for (auto& x : model.weights) x *= scale;
            model.bias = bias;
            epoch_objective->push_back(svm_objective(model, data, cfg));
        }
    }

    model.weights = std::move(v);
    for (auto& x : model.weights) x *= scale;
    model.bias = bias;
    for (double w : model.weights)
        if (!std::isfinite(w)) throw TrainingDiverged("SVM weights are not finite");
    if (!std::isfinite(model.bias)) throw TrainingDiverged("SVM bias is not finite");

    std::vector<double> margins(n);
    for (std::size_t i = 0; i < n; ++i) margins[i] = model.margin(data.X, data.rows[i]);
    model.alpha = fit_alpha(margins, data.labels);
    return model;
}

// ---------------------------------------------------------------------------
// MLP

std::vector<std::size_t> MlpModel::layer_sizes() const {
    std::vector<std::size_t> sizes;
    if (layers.empty()) return sizes;
    sizes.push_back(layers.front().inputs);
    for (const auto& l : layers) sizes.push_back(l.outputs);
    return sizes;
}

std::size_t MlpModel::parameter_count() const {
    std::size_t c = 0;
    for (const auto& l : layers) c += l.weights.size() + l.bias.size();
    return c;
}

MlpModel MlpModel::zeros(std::span<const std::size_t> sizes) {
    if (sizes.size() < 3) throw ConfigError("an MLP needs at least one hidden layer");
    if (sizes.back() != 1) throw ConfigError("MLP output layer must have one unit");
    MlpModel m;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        if (sizes[l] == 0 || sizes[l + 1] == 0) throw ConfigError("MLP layer sizes must be positive");
        DenseLayer layer;
        layer.inputs = sizes[l];
        layer.outputs = sizes[l + 1];
        layer.weights.assign(layer.inputs * layer.outputs, 0.0);
        layer.bias.assign(layer.outputs, 0.0);
        m.layers.push_back(std::move(layer));
    }
    return m;
}

namespace {

// Per-example forward pass keeping pre-activations for backprop.
struct Forward {
    std::vector<std::vector<double>> pre;   // z_l for every layer
    std::vector<std::vector<double>> post;  // relu(z_l) for hidden layers
};

double forward(const MlpModel& m, const FeatureMatrix& X, std::size_t row, Forward* trace) {
    std::vector<double> act;
    std::vector<double> z;
    if (trace) {
        trace->pre.resize(m.layers.size());
        trace->post.resize(m.layers.size());
    }
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& L = m.layers[l];
        z.assign(L.outputs, 0.0);
        for (std::size_t o = 0; o < L.outputs; ++o) {
            std::span<const double> wrow(L.weights.data() + o * L.inputs, L.inputs);
            double acc = L.bias[o];
            if (l == 0) {
                acc += X.dot(row, wrow);
            } else {
                for (std::size_t i = 0; i < L.inputs; ++i) acc += wrow[i] * act[i];
            }
            z[o] = acc;
        }
        if (trace) trace->pre[l] = z;
        if (l + 1 == m.layers.size()) return z[0];
        act.resize(z.size());
        for (std::size_t o = 0; o < z.size(); ++o) act[o] = z[o] > 0.0 ? z[o] : 0.0;
        if (trace) trace->post[l] = act;
    }
    return 0.0;
}

double weight_of(const MlpBatch& b, std::size_t i) { return b.weights.empty() ? 1.0 : b.weights[i]; }

void check_batch(const MlpModel& m, const MlpBatch& b) {
    if (m.layers.empty()) throw ConfigError("empty MLP");
    if (b.X.cols() != m.dim())
        throw DimensionMismatch("MLP expects " + std::to_string(m.dim()) + " features, got " + std::to_string(b.X.cols()));
    if (b.targets.size() != b.rows.size()) throw ConfigError("MLP batch targets differ in length from rows");
    if (!b.weights.empty() && b.weights.size() != b.rows.size()) throw ConfigError("MLP batch weights differ in length");
    if (b.rows.empty()) throw ConfigError("empty MLP batch");
}

double l2_penalty(const MlpModel& m, double l2) {
    double s = 0.0;
    for (const auto& L : m.layers)
        for (double w : L.weights) s += w * w;
    return 0.5 * l2 * s;
}

}  // namespace

double MlpModel::logit(const FeatureMatrix& X, std::size_t row) const { return forward(*this, X, row, nullptr); }

double mlp_loss(const MlpModel& model, const MlpBatch& batch) {
    check_batch(model, batch);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.rows.size(); ++i) {
        const double z = forward(model, batch.X, batch.rows[i], nullptr);
        loss += weight_of(batch, i) * (softplus(z) - batch.targets[i] * z);
    }
    return loss / static_cast<double>(batch.rows.size()) + l2_penalty(model, batch.l2);
}

MlpGradient mlp_gradient(const MlpModel& model, const MlpBatch& batch) {
    check_batch(model, batch);
    MlpGradient g;
    g.layers = model.layers;
    for (auto& L : g.layers) {
        std::fill(L.weights.begin(), L.weights.end(), 0.0);
        std::fill(L.bias.begin(), L.bias.end(), 0.0);
    }
    const double inv_n = 1.0 / static_cast<double>(batch.rows.size());
    const std::size_t depth = model.layers.size();
    Forward fw;
    std::vector<double> delta;
    std::vector<double> prev_delta;
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.rows.size(); ++i) {
        const std::size_t row = batch.rows[i];
        const double z = forward(model, batch.X, row, &fw);
        const double w = weight_of(batch, i);
        loss += w * (softplus(z) - batch.targets[i] * z);
        delta.assign(1, w * (sigmoid(z) - batch.targets[i]) * inv_n);
        for (std::size_t l = depth; l-- > 0;) {
            const auto& L = model.layers[l];
            auto& G = g.layers[l];
            for (std::size_t o = 0; o < L.outputs; ++o) {
                const double dl = delta[o];
                if (dl == 0.0) continue;
                G.bias[o] += dl;
                std::span<double> grow(G.weights.data() + o * L.inputs, L.inputs);
                if (l == 0) {
                    batch.X.axpy(row, dl, grow);
                } else {
                    const auto& a = fw.post[l - 1];
                    for (std::size_t in = 0; in < L.inputs; ++in) grow[in] += dl * a[in];
                }
            }
            if (l == 0) break;
            prev_delta.assign(L.inputs, 0.0);
            const auto& zprev = fw.pre[l - 1];
            for (std::size_t in = 0; in < L.inputs; ++in) {
                if (zprev[in] <= 0.0) continue;  // ReLU derivative is 0 for z <= 0
                double acc = 0.0;
                for (std::size_t o = 0; o < L.outputs; ++o) acc += L.weights[o * L.inputs + in] * delta[o];
                prev_delta[in] = acc;
            }
            delta.swap(prev_delta);
        }
    }
    for (std::size_t l = 0; l < depth; ++l)
        for (std::size_t p = 0; p < model.layers[l].weights.size(); ++p)
            g.layers[l].weights[p] += batch.l2 * model.layers[l].weights[p];
    g.loss = loss * inv_n + l2_penalty(model, batch.l2);
    return g;
}

MlpModel train_mlp(const TrainingView& data, const TrainConfig& cfg, std::span<const std::size_t> hidden_sizes,
                   std::vector<double>* epoch_loss) {
    cfg.validate();
    if (hidden_sizes.empty()) throw ConfigError("an MLP needs at least one hidden layer; use the SVM otherwise");
    check_view(data);
    const std::size_t n = data.rows.size();

    std::vector<std::size_t> sizes{data.X.cols()};
    sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
    sizes.push_back(1);
    MlpModel model = MlpModel::zeros(sizes);

    Rng rng(cfg.seed);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& L = model.layers[l];
        // He initialisation for ReLU layers, Glorot-style for the logistic output.
        const double fan_in = static_cast<double>(L.inputs);
        const double sd = (l + 1 < model.layers.size()) ? std::sqrt(2.0 / fan_in) : std::sqrt(1.0 / fan_in);
        for (auto& w : L.weights) w = sd * rng.normal();
    }

    std::vector<double> targets(n);
    for (std::size_t i = 0; i < n; ++i) targets[i] = data.labels[i];
    const auto weights = class_weights(data.labels, cfg.class_weight);

    // Adam moments.
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    std::vector<DenseLayer> m1 = model.layers;
    std::vector<DenseLayer> m2 = model.layers;
    for (auto* set : {&m1, &m2})
        for (auto& L : *set) {
            std::fill(L.weights.begin(), L.weights.end(), 0.0);
            std::fill(L.bias.begin(), L.bias.end(), 0.0);
        }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> brows;
    std::vector<double> btargets;
    std::vector<double> bweights;
    std::uint64_t step = 0;
    if (epoch_loss) epoch_loss->clear();
    auto full_loss = [&] {
        return mlp_loss(model, MlpBatch{data.X, data.rows, targets, weights, cfg.l2});
    };
    if (epoch_loss) epoch_loss->push_back(full_loss());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            brows.clear();
            btargets.clear();
            bweights.clear();
            for (std::size_t p = start; p < end; ++p) {
                brows.push_back(data.rows[order[p]]);
                btargets.push_back(targets[order[p]]);
                bweights.push_back(weights[order[p]]);
            }
            const auto g = mlp_gradient(model, MlpBatch{data.X, brows, btargets, bweights, cfg.l2});
            if (!std::isfinite(g.loss)) throw TrainingDiverged("MLP loss is not finite at epoch " + std::to_string(epoch));
            ++step;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            auto update = [&](std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& mom1,
                              std::vector<double>& mom2) {
                for (std::size_t p = 0; p < param.size(); ++p) {
                    mom1[p] = beta1 * mom1[p] + (1.0 - beta1) * grad[p];
                    mom2[p] = beta2 * mom2[p] + (1.0 - beta2) * grad[p] * grad[p];
                    param[p] -= cfg.learning_rate * (mom1[p] / c1) / (std::sqrt(mom2[p] / c2) + eps);
                }
            };
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                update(model.layers[l].weights, g.layers[l].weights, m1[l].weights, m2[l].weights);
                update(model.layers[l].bias, g.layers[l].bias, m1[l].bias, m2[l].bias);
            }
        }
        if (epoch_loss) {
            const double loss = full_loss();
            if (!std::isfinite(loss)) throw TrainingDiverged("MLP loss is not finite at epoch " + std::to_string(epoch));
            epoch_loss->push_back(loss);
        }
    }
    for (const auto& L : model.layers)
        for (double w : L.weights)
            if (!std::isfinite(w)) throw TrainingDiverged("MLP parameters are not finite");
    return model;
}

// ---------------------------------------------------------------------------
// Prediction

std::size_t classifier_dim(const BinaryClassifier& clf) {
    return std::visit(
        [](const auto& m) -> std::size_t {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ConstantModel>)
                return m.dimension;
            else
                return m.dim();
        },
        clf);
}

std::string_view classifier_kind(const BinaryClassifier& clf) {
    switch (clf.index()) {
        case 0: return "linear";
        case 1: return "mlp";
        default: return "constant";
    }
}

double predict_proba(const BinaryClassifier& clf, const FeatureMatrix& X, std::size_t row) {
    return std::visit(
        [&](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, LinearModel>)
                return sigmoid(m.alpha * m.margin(X, row));
            else if constexpr (std::is_same_v<T, MlpModel>)
                return sigmoid(m.logit(X, row));
            else
                return m.probability;
        },
        clf);
}

namespace {
void check_dim(const BinaryClassifier& clf, const FeatureMatrix& X) {
    if (classifier_dim(clf) != X.cols())
        throw DimensionMismatch("model expects " + std::to_string(classifier_dim(clf)) + " features, got " +
                                std::to_string(X.cols()));
}
}  // namespace

std::vector<double> predict_proba(const BinaryClassifier& clf, const FeatureMatrix& X) {
    check_dim(clf, X);
    std::vector<double> p(X.rows());
    for (std::size_t r = 0; r < X.rows(); ++r) p[r] = predict_proba(clf, X, r);
    return p;
}

std::vector<std::uint8_t> predict_membership(const BinaryClassifier& clf, const FeatureMatrix& X, double threshold) {
    const auto p = predict_proba(clf, X);
    std::vector<std::uint8_t> out(p.size());
    for (std::size_t r = 0; r < p.size(); ++r) out[r] = p[r] >= threshold ? 1 : 0;
    return out;
}

std::size_t SliceModel::dim() const { return classifiers.empty() ? 0 : classifier_dim(classifiers.front()); }

SliceModel train_slice_model(const ClassifierSpec& spec, const FeatureMatrix& X, std::span<const std::size_t> rows,
                             std::span<const SliceVector> answers, const std::vector<std::string>& slice_names,
                             std::uint64_t seed) {
    spec.validate();
    if (rows.size() != answers.size()) throw ConfigError("rows and answers differ in length");
    SliceModel model;
    model.slice_names = slice_names;
    std::vector<std::uint8_t> labels(rows.size());
    for (std::size_t j = 0; j < slice_names.size(); ++j) {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            labels[i] = answers[i].at(j);
            pos += labels[i];
        }
        if (pos == 0 || pos == rows.size()) {
            model.classifiers.emplace_back(ConstantModel{pos == 0 ? 0.0 : 1.0, X.cols()});
            continue;
        }
        TrainConfig cfg = spec.train;
        cfg.seed = derive_seed(seed, {j});
        TrainingView view{X, rows, labels};
        if (spec.kind == ClassifierKind::svm)
            model.classifiers.emplace_back(train_linear_svm(view, cfg));
        else
            model.classifiers.emplace_back(train_mlp(view, cfg, spec.hidden));
    }
    return model;
}

ProbMatrix predict_proba(const SliceModel& model, const FeatureMatrix& X, std::span<const std::size_t> rows) {
    for (const auto& c : model.classifiers) check_dim(c, X);
    ProbMatrix P{rows.size(), model.k(), std::vector<double>(rows.size() * model.k())};
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < model.k(); ++j) P.values[i * P.cols + j] = predict_proba(model.classifiers[j], X, rows[i]);
    return P;
}

ProbMatrix predict_proba(const SliceModel& model, const FeatureMatrix& X) {
    std::vector<std::size_t> rows(X.rows());
    std::iota(rows.begin(), rows.end(), 0);
    return predict_proba(model, X, rows);
}

std::vector<SliceVector> predict_membership(const SliceModel& model, const FeatureMatrix& X, double threshold) {
    const auto P = predict_proba(model, X);
    std::vector<SliceVector> out(P.rows, SliceVector(P.cols));
    for (std::size_t r = 0; r < P.rows; ++r)
        for (std::size_t j = 0; j < P.cols; ++j) out[r][j] = P.at(r, j) >= threshold ? 1 : 0;
    return out;
}

// ---------------------------------------------------------------------------
// Persistence

void save_model(const SliceModel& model, const std::filesystem::path& path) {
    json header;
    header["version"] = 1;
    header["dim"] = model.dim();
    header["slices"] = json::array();
    std::string payload;
    for (std::size_t j = 0; j < model.k(); ++j) {
        json s;
        s["name"] = j < model.slice_names.size() ? model.slice_names[j] : "";
        const auto& clf = model.classifiers[j];
        s["type"] = std::string(classifier_kind(clf));
        std::size_t params = 0;
        if (const auto* lin = std::get_if<LinearModel>(&clf)) {
            s["alpha"] = lin->alpha;
            for (double w : lin->weights) detail::put_f64(payload, w);
            detail::put_f64(payload, lin->bias);
            params = lin->weights.size() + 1;
        } else if (const auto* mlp = std::get_if<MlpModel>(&clf)) {
            s["layers"] = mlp->layer_sizes();
            for (const auto& L : mlp->layers) {
                for (double w : L.weights) detail::put_f64(payload, w);
                for (double b : L.bias) detail::put_f64(payload, b);
            }
            params = mlp->parameter_count();
        } else {
            s["probability"] = std::get<ConstantModel>(clf).probability;
        }
        s["params"] = params;
        header["slices"].push_back(std::move(s));
    }
    const std::string h = header.dump();
    std::string out = "ASLM";
    detail::put_u32(out, static_cast<std::uint32_t>(h.size()));
    out += h;
    out += payload;
    detail::write_file(path, out);
}

SliceModel load_model(const std::filesystem::path& path) {
    const std::string bytes = detail::read_file(path);
    if (bytes.size() < 8 || bytes.compare(0, 4, "ASLM") != 0) throw DataError("not a slice model file: " + path.string());
    const std::uint32_t hlen = detail::get_u32(bytes, 4);
    if (8ull + hlen > bytes.size()) throw DataError("truncated model header");
    json header;
    try {
        header = json::parse(bytes.substr(8, hlen));
    } catch (const json::parse_error&) {
        throw DataError("model header is not valid JSON");
    }
    const std::size_t dim = header.at("dim").get<std::size_t>();
    std::size_t pos = 8 + hlen;
    auto take = [&]() {
        if (pos + 8 > bytes.size()) throw DataError("truncated model payload");
        const double v = detail::get_f64(bytes, pos);
        pos += 8;
        return v;
    };
    SliceModel model;
    for (const auto& s : header.at("slices")) {
        model.slice_names.push_back(s.at("name").get<std::string>());
        const auto type = s.at("type").get<std::string>();
        if (type == "linear") {
            LinearModel lin;
            lin.alpha = s.at("alpha").get<double>();
            lin.weights.resize(dim);
            for (auto& w : lin.weights) w = take();
            lin.bias = take();
            model.classifiers.emplace_back(std::move(lin));
        } else if (type == "mlp") {
            const auto sizes = s.at("layers").get<std::vector<std::size_t>>();
            MlpModel mlp = MlpModel::zeros(sizes);
            for (auto& L : mlp.layers) {
                for (auto& w : L.weights) w = take();
                for (auto& b : L.bias) b = take();
            }
            model.classifiers.emplace_back(std::move(mlp));
        } else if (type == "constant") {
            model.classifiers.emplace_back(ConstantModel{s.at("probability").get<double>(), dim});
        } else {
            throw DataError("unknown classifier type in model file: " + type);
        }
    }
    if (pos != bytes.size()) throw DataError("model payload has trailing bytes");
    return model;
}

}  // namespace aslice
