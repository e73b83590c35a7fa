#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "aslice/corpus.hpp"
#include "aslice/errors.hpp"
#include "aslice/slice_model.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace aslice;

namespace {

double ref_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Independent scalar forward pass for the MLP.
double ref_logit(const MlpModel& m, const std::vector<double>& x) {
    std::vector<double> a = x;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& L = m.layers[l];
        std::vector<double> z(L.outputs);
        for (std::size_t o = 0; o < L.outputs; ++o) {
            double s = L.bias[o];
            for (std::size_t i = 0; i < L.inputs; ++i) s += L.weights[o * L.inputs + i] * a[i];
            z[o] = (l + 1 < m.layers.size()) ? std::max(0.0, s) : s;
        }
        a = z;
    }
    return a[0];
}

double ref_loss(const MlpModel& m, const FeatureMatrix& X, const std::vector<std::size_t>& rows,
                const std::vector<double>& t, const std::vector<double>& w, double l2) {
    double loss = 0;
    std::vector<double> x(X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        X.copy_row(rows[i], x);
        const double p = ref_sigmoid(ref_logit(m, x));
        loss -= w[i] * (t[i] * std::log(p) + (1 - t[i]) * std::log(1 - p));
    }
    loss /= static_cast<double>(rows.size());
    double reg = 0;
    for (const auto& L : m.layers)
        for (double v : L.weights) reg += v * v;
    return loss + 0.5 * l2 * reg;
}

MlpModel random_mlp(std::vector<std::size_t> sizes, std::mt19937_64& gen) {
    MlpModel m = MlpModel::zeros(sizes);
    std::normal_distribution<double> nd(0.0, 0.7);
    for (auto& L : m.layers) {
        for (auto& v : L.weights) v = nd(gen);
        for (auto& v : L.bias) v = nd(gen);
    }
    return m;
}

Dataset separated(std::size_t n, double sep, std::uint64_t seed) {
    return generate_synthetic(SynthConfig::separated(n, 6, 1, 0.3, sep, 0.0, seed));
}

std::vector<std::uint8_t> labels_of(const Dataset& ds) {
    std::vector<std::uint8_t> y;
    for (const auto& r : ds.records()) y.push_back((*r.s)[0]);
    return y;
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = i;
    return r;
}

}  // namespace

TEST_CASE("svm separates a two-point problem") {
    const FeatureMatrix X = FeatureMatrix::dense(2, 1, {1.0f, -1.0f});
    const std::vector<std::size_t> rows{0, 1};
    const std::vector<std::uint8_t> y{1, 0};
    const LinearModel m = train_linear_svm({X, rows, y}, TrainConfig::svm_defaults());
    CHECK(m.margin(X, 0) > 0);
    CHECK(m.margin(X, 1) < 0);
    CHECK(m.alpha > 0);
}

TEST_CASE("svm reaches full training accuracy at 10 sigma") {
    const Dataset ds = separated(1000, 10.0, 4);
    const auto rows = all_rows(ds.size());
    const auto y = labels_of(ds);
    const LinearModel m = train_linear_svm({ds.features(), rows, y}, TrainConfig::svm_defaults());
    const auto pred = predict_membership(BinaryClassifier{m}, ds.features());
    std::size_t right = 0;
    for (std::size_t i = 0; i < y.size(); ++i) right += pred[i] == y[i];
    CHECK(right == y.size());
}

TEST_CASE("svm with huge lambda collapses the weights") {
    const Dataset ds = separated(300, 6.0, 2);
    const auto rows = all_rows(ds.size());
    const auto y = labels_of(ds);
    TrainConfig cfg = TrainConfig::svm_defaults();
    cfg.l2 = 1e6;
    const LinearModel m = train_linear_svm({ds.features(), rows, y}, cfg);
    double norm = 0;
    for (double w : m.weights) norm += w * w;
    CHECK(std::sqrt(norm) < 1e-2);
    for (double w : m.weights) CHECK(std::isfinite(w));
}

TEST_CASE("svm objective is non-increasing after warm-up within slack") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Dataset ds = separated(400, 3.0, seed);
        const auto rows = all_rows(ds.size());
        const auto y = labels_of(ds);
        TrainConfig cfg = TrainConfig::svm_defaults();
        cfg.seed = seed;
        std::vector<double> trace;
        const LinearModel m = train_linear_svm({ds.features(), rows, y}, cfg, &trace);
        REQUIRE(trace.size() == cfg.epochs);
        const std::size_t warm = (cfg.epochs + 9) / 10;
        const double slack = 1e-3 * static_cast<double>(rows.size());
        for (std::size_t e = warm + 1; e < trace.size(); ++e) CHECK(trace[e] <= trace[e - 1] + slack);
        CHECK(svm_objective(m, {ds.features(), rows, y}, cfg) == doctest::Approx(trace.back()));
    }
}

TEST_CASE("svm objective matches a scalar evaluation") {
    const Dataset ds = separated(50, 2.0, 9);
    const auto rows = all_rows(ds.size());
    const auto y = labels_of(ds);
    LinearModel m;
    m.weights = {0.3, -0.2, 0.1, 0.5, -0.4, 0.05};
    m.bias = -0.1;
    TrainConfig cfg = TrainConfig::svm_defaults();
    cfg.class_weight = ClassWeight::none;
    double hinge = 0, reg = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double s = y[i] ? 1.0 : -1.0;
        hinge += std::max(0.0, 1 - s * m.margin(ds.features(), i));
    }
    for (double w : m.weights) reg += w * w;
    const double ref = hinge / static_cast<double>(rows.size()) + 0.5 * cfg.l2 * reg;
    CHECK(svm_objective(m, {ds.features(), rows, y}, cfg) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("svm training errors and determinism") {
    const FeatureMatrix X = FeatureMatrix::dense(3, 1, {1, 2, 3});
    const std::vector<std::size_t> rows{0, 1, 2};
    const std::vector<std::uint8_t> ones{1, 1, 1};
    CHECK_THROWS_AS(train_linear_svm({X, rows, ones}, TrainConfig::svm_defaults()), DegenerateLabels);
    const Dataset ds = separated(200, 4.0, 1);
    const auto r = all_rows(ds.size());
    const auto y = labels_of(ds);
    CHECK(train_linear_svm({ds.features(), r, y}, TrainConfig::svm_defaults()) ==
          train_linear_svm({ds.features(), r, y}, TrainConfig::svm_defaults()));
}

TEST_CASE("svm probabilities: logistic link on the margin") {
    LinearModel m;
    m.weights = {1.0};
    m.bias = 0.0;
    m.alpha = 1.0;
    const FeatureMatrix X = FeatureMatrix::dense(3, 1, {0.0f, 50.0f, -2.0f});
    const BinaryClassifier c{m};
    CHECK(predict_proba(c, X, 0) == 0.5);
    CHECK(predict_proba(c, X, 1) > 0.999);
    CHECK(predict_membership(c, X) == std::vector<std::uint8_t>{1, 1, 0});

    std::mt19937_64 gen(1);
    std::normal_distribution<double> nd;
    LinearModel r;
    r.weights = {nd(gen), nd(gen), nd(gen)};
    r.bias = nd(gen);
    r.alpha = 2.5;
    std::vector<float> v(300);
    for (auto& x : v) x = static_cast<float>(nd(gen) * 4);
    const FeatureMatrix Y = FeatureMatrix::dense(100, 3, v);
    const auto p = predict_proba(BinaryClassifier{r}, Y);
    const auto mem = predict_membership(BinaryClassifier{r}, Y);
    for (std::size_t i = 0; i < 100; ++i) {
        double z = r.bias;
        for (std::size_t c2 = 0; c2 < 3; ++c2) z += r.weights[c2] * static_cast<double>(v[i * 3 + c2]);
        CHECK(std::abs(p[i] - ref_sigmoid(r.alpha * z)) < 1e-12);
        CHECK(mem[i] == (z >= 0 ? 1 : 0));
        CHECK(p[i] > 0.0);
        CHECK(p[i] < 1.0);
    }
    CHECK_THROWS_AS(predict_proba(BinaryClassifier{m}, Y), DimensionMismatch);
}

TEST_CASE("predict_membership tie rule and constant model") {
    ConstantModel half{0.5, 2};
    const FeatureMatrix X = FeatureMatrix::dense(1, 2, {0, 0});
    CHECK(predict_membership(BinaryClassifier{half}, X)[0] == 1);
    CHECK(predict_membership(BinaryClassifier{ConstantModel{0.49, 2}}, X)[0] == 0);
}

TEST_CASE("calibrated probability is strictly monotone in the margin") {
    const Dataset ds = separated(300, 3.0, 6);
    const auto rows = all_rows(ds.size());
    const auto y = labels_of(ds);
    const LinearModel m = train_linear_svm({ds.features(), rows, y}, TrainConfig::svm_defaults());
    std::vector<std::pair<double, double>> mp;
    for (std::size_t i = 0; i < ds.size(); ++i) mp.emplace_back(m.margin(ds.features(), i), predict_proba(BinaryClassifier{m}, ds.features(), i));
    std::sort(mp.begin(), mp.end());
    for (std::size_t i = 1; i < mp.size(); ++i)
        if (mp[i].first > mp[i - 1].first) CHECK(mp[i].second >= mp[i - 1].second);
}

TEST_CASE("mlp learns XOR") {
    const FeatureMatrix X = FeatureMatrix::dense(4, 2, {0, 0, 0, 1, 1, 0, 1, 1});
    const std::vector<std::size_t> rows{0, 1, 2, 3};
    const std::vector<std::uint8_t> y{0, 1, 1, 0};
    TrainConfig cfg = TrainConfig::mlp_defaults();
    cfg.epochs = 2000;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 4;
    cfg.l2 = 0;
    const std::vector<std::size_t> hidden{8};
    std::vector<double> losses;
    const MlpModel m = train_mlp({X, rows, y}, cfg, hidden, &losses);
    CHECK(predict_membership(BinaryClassifier{m}, X) == y);
    CHECK(losses.back() <= losses.front());
}

TEST_CASE("mlp contract errors and determinism") {
    const FeatureMatrix X = FeatureMatrix::dense(4, 2, {0, 0, 0, 1, 1, 0, 1, 1});
    const std::vector<std::size_t> rows{0, 1, 2, 3};
    const std::vector<std::uint8_t> y{0, 1, 1, 0};
    CHECK_THROWS_AS(train_mlp({X, rows, y}, TrainConfig::mlp_defaults(), std::vector<std::size_t>{}), ConfigError);
    const std::vector<std::uint8_t> zeros{0, 0, 0, 0};
    CHECK_THROWS_AS(train_mlp({X, rows, zeros}, TrainConfig::mlp_defaults(), std::vector<std::size_t>{4}), DegenerateLabels);
    const std::vector<std::size_t> h{4};
    CHECK(train_mlp({X, rows, y}, TrainConfig::mlp_defaults(), h) == train_mlp({X, rows, y}, TrainConfig::mlp_defaults(), h));
}

TEST_CASE("mlp training cross-entropy does not increase overall") {
    const Dataset ds = separated(300, 3.0, 12);
    const auto rows = all_rows(ds.size());
    const auto y = labels_of(ds);
    std::vector<double> losses;
    const std::vector<std::size_t> h{16};
    train_mlp({ds.features(), rows, y}, TrainConfig::mlp_defaults(), h, &losses);
    REQUIRE_FALSE(losses.empty());
    CHECK(losses.back() <= losses.front());
}

TEST_CASE("mlp gradient: zero net, balanced targets give zero output bias gradient") {
    const std::vector<std::size_t> sizes{3, 4, 1};
    const MlpModel m = MlpModel::zeros(sizes);
    const FeatureMatrix X = FeatureMatrix::dense(2, 3, {1, 2, 3, -1, 0.5, 2});
    const std::vector<std::size_t> rows{0, 1};
    const std::vector<double> t{1.0, 0.0};
    const auto g = mlp_gradient(m, {X, rows, t, {}, 0.0});
    CHECK(g.layers.back().bias[0] == doctest::Approx(0.0));
    CHECK(g.loss == doctest::Approx(std::log(2.0)));
}

TEST_CASE("relu gradient is zero at negative preactivation") {
    MlpModel m = MlpModel::zeros(std::vector<std::size_t>{1, 1, 1});
    m.layers[0].weights = {1.0};
    m.layers[0].bias = {-5.0};  // preactivation x - 5 < 0 for x = 1
    m.layers[1].weights = {2.0};
    const FeatureMatrix X = FeatureMatrix::dense(1, 1, {1.0f});
    const std::vector<std::size_t> rows{0};
    const std::vector<double> t{1.0};
    const auto g = mlp_gradient(m, {X, rows, t, {}, 0.0});
    CHECK(g.layers[0].weights[0] == 0.0);
    CHECK(g.layers[0].bias[0] == 0.0);
    CHECK(g.layers[1].weights[0] == 0.0);
}

TEST_CASE("mlp gradient vs central differences of an independent loss") {
    std::mt19937_64 gen(77);
    const std::vector<std::vector<std::size_t>> archs{{3, 5, 1}, {4, 3, 2, 1}, {2, 8, 1}, {5, 4, 4, 3, 1}, {6, 2, 1}};
    for (const auto& sizes : archs) {
        MlpModel m = random_mlp(sizes, gen);
        const std::size_t d = sizes.front(), n = 7;
        std::normal_distribution<float> nf;
        std::vector<float> v(n * d);
        for (auto& x : v) x = nf(gen);
        const FeatureMatrix X = FeatureMatrix::dense(n, d, v);
        const auto rows = all_rows(n);
        std::vector<double> t(n), w(n);
        std::uniform_real_distribution<double> u(0.1, 2.0);
        for (std::size_t i = 0; i < n; ++i) {
            t[i] = static_cast<double>(gen() % 2);
            w[i] = u(gen);
        }
        const double l2 = 0.01;
        const auto g = mlp_gradient(m, {X, rows, t, w, l2});
        CHECK(g.loss == doctest::Approx(ref_loss(m, X, rows, t, w, l2)).epsilon(1e-12));
        const double h = 1e-5;
        auto check_param = [&](double& p, double analytic) {
            const double saved = p;
            p = saved + h;
            const double up = ref_loss(m, X, rows, t, w, l2);
            p = saved - h;
            const double down = ref_loss(m, X, rows, t, w, l2);
            p = saved;
            const double numeric = (up - down) / (2 * h);
            const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
            CHECK(rel < 1e-4);
        };
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
            for (std::size_t i = 0; i < m.layers[l].weights.size(); ++i) check_param(m.layers[l].weights[i], g.layers[l].weights[i]);
            for (std::size_t i = 0; i < m.layers[l].bias.size(); ++i) check_param(m.layers[l].bias[i], g.layers[l].bias[i]);
        }
    }
}

TEST_CASE("slice model: constant fallback, per-slice training, save/load") {
    const Dataset ds = generate_synthetic(SynthConfig::separated(200, 5, 2, 0.3, 6.0, 0.0, 3));
    const auto rows = all_rows(ds.size());
    std::vector<SliceVector> answers;
    for (const auto& r : ds.records()) answers.push_back(SliceVector{(*r.s)[0], 0});
    ClassifierSpec spec;
    const SliceModel m = train_slice_model(spec, ds.features(), rows, answers, ds.slice_names(), 5);
    REQUIRE(m.k() == 2);
    CHECK(std::holds_alternative<LinearModel>(m.classifiers[0]));
    REQUIRE(std::holds_alternative<ConstantModel>(m.classifiers[1]));
    CHECK(std::get<ConstantModel>(m.classifiers[1]).probability == 0.0);

    const ProbMatrix p = predict_proba(m, ds.features());
    CHECK(p.rows == 200);
    CHECK(p.cols == 2);

    test::TempDir dir("model");
    save_model(m, dir / "m.aslm");
    CHECK(load_model(dir / "m.aslm") == m);

    ClassifierSpec mlp;
    mlp.kind = ClassifierKind::mlp;
    mlp.train = TrainConfig::mlp_defaults();
    mlp.train.epochs = 5;
    mlp.hidden = {6, 3};
    const SliceModel mm = train_slice_model(mlp, ds.features(), rows, answers, ds.slice_names(), 5);
    save_model(mm, dir / "mm.aslm");
    CHECK(load_model(dir / "mm.aslm") == mm);

    std::ofstream(dir / "bad.aslm") << "ASLMxx";
    CHECK_THROWS_AS(load_model(dir / "bad.aslm"), DataError);
}

TEST_CASE("train config validation") {
    TrainConfig cfg = TrainConfig::svm_defaults();
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig::svm_defaults();
    cfg.learning_rate = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(parse_class_weight("balanced") == ClassWeight::balanced);
    CHECK_THROWS_AS(parse_class_weight("auto"), ConfigError);
}
