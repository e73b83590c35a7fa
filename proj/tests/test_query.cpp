#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "aslice/errors.hpp"
#include "aslice/query.hpp"
#include "doctest.h"

using namespace aslice;

namespace {

std::vector<double> random_rows(std::mt19937_64& gen, std::size_t rows, std::size_t classes) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(rows * classes);
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < classes; ++c) s += p[r * classes + c] = u(gen);
        for (std::size_t c = 0; c < classes; ++c) p[r * classes + c] /= s;
    }
    return p;
}

std::vector<std::size_t> iota_vec(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

// Brute-force top-b: stable sort by descending score.
std::vector<std::size_t> full_sort_top(const std::vector<double>& s, std::size_t b) {
    auto idx = iota_vec(s.size());
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) { return s[a] > s[c]; });
    idx.resize(std::min(b, idx.size()));
    return idx;
}

}  // namespace

TEST_CASE("uncertainty score examples") {
    const std::vector<double> rows{0.5, 0.5, 1.0, 0.0, 0.9, 0.1};
    const auto lc = score_least_confidence(rows, 2);
    CHECK(lc[0] == 0.5);
    CHECK(lc[1] == 0.0);
    CHECK(lc[2] == doctest::Approx(0.1).epsilon(1e-12));
    const auto en = score_entropy(rows, 2);
    CHECK(en[0] == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(en[1] == 0.0);
    const auto bt = score_breaking_ties(rows, 2);
    CHECK(bt[0] == 1.0);
    CHECK(bt[2] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("uncertainty scores match scalar oracles on random rows") {
    std::mt19937_64 gen(1);
    for (std::size_t classes : {2u, 3u, 5u}) {
        const auto p = random_rows(gen, 300, classes);
        const auto lc = score_least_confidence(p, classes);
        const auto en = score_entropy(p, classes);
        const auto bt = score_breaking_ties(p, classes);
        for (std::size_t r = 0; r < 300; ++r) {
            double mx = -1, second = -1, h = 0;
            for (std::size_t c = 0; c < classes; ++c) {
                const double v = p[r * classes + c];
                if (v > mx) {
                    second = mx;
                    mx = v;
                } else if (v > second) {
                    second = v;
                }
                if (v > 0) h -= v * std::log(v);
            }
            CHECK(std::abs(lc[r] - (1 - mx)) < 1e-12);
            CHECK(std::abs(en[r] - h) < 1e-12);
            CHECK(std::abs(bt[r] - (1 - (mx - second))) < 1e-12);
            CHECK(lc[r] <= 1.0 - 1.0 / static_cast<double>(classes) + 1e-12);
            CHECK(en[r] <= std::log(static_cast<double>(classes)) + 1e-12);
        }
    }
}

TEST_CASE("malformed distributions are rejected") {
    CHECK_THROWS_AS(score_least_confidence(std::vector<double>{0.5, 0.6}, 2), MalformedDistribution);
    CHECK_THROWS_AS(score_entropy(std::vector<double>{1.2, -0.2}, 2), MalformedDistribution);
    CHECK_THROWS_AS(score_breaking_ties(std::vector<double>{1.0}, 1), MalformedDistribution);
    CHECK_THROWS_AS(score_least_confidence(std::vector<double>{0.5, 0.5, 0.5}, 2), MalformedDistribution);
}

TEST_CASE("scores are permutation-equivariant") {
    std::mt19937_64 gen(2);
    const auto p = random_rows(gen, 50, 3);
    auto perm = iota_vec(50);
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<double> q(150);
    for (std::size_t r = 0; r < 50; ++r)
        for (std::size_t c = 0; c < 3; ++c) q[r * 3 + c] = p[perm[r] * 3 + c];
    const auto a = score_entropy(p, 3);
    const auto b = score_entropy(q, 3);
    for (std::size_t r = 0; r < 50; ++r) CHECK(b[r] == a[perm[r]]);
}

TEST_CASE("binary LC and BT rankings survive monotone recalibration") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> nd;
    std::vector<double> margins(200);
    for (auto& m : margins) m = nd(gen) * 3;
    auto probs = [&](double alpha) {
        std::vector<double> p;
        for (double m : margins) p.push_back(1 / (1 + std::exp(-alpha * m)));
        return binary_distribution(p);
    };
    for (auto* fn : {&score_least_confidence, &score_breaking_ties}) {
        const auto a = fn(probs(0.5), 2);
        const auto b = fn(probs(4.0), 2);
        CHECK(full_sort_top(a, 200) == full_sort_top(b, 200));
    }
}

TEST_CASE("select_top_b") {
    CHECK(select_top_b(std::vector<double>{0.1, 0.9, 0.5}, 2).indices == std::vector<std::size_t>{1, 2});
    CHECK(select_top_b(std::vector<double>{0.3, 0.3, 0.3}, 2).indices == std::vector<std::size_t>{0, 1});
    CHECK(select_top_b(std::vector<double>{0.3}, 5).indices == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(select_top_b(std::vector<double>{}, 1), ConfigError);
    std::mt19937_64 gen(4);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> s(1 + gen() % 60);
        for (auto& v : s) v = static_cast<double>(gen() % 7) / 7.0;  // plenty of ties
        const std::size_t b = 1 + gen() % 70;
        const auto batch = select_top_b(s, b);
        CHECK(batch.indices == full_sort_top(s, b));
        for (std::size_t i = 0; i < batch.indices.size(); ++i) CHECK(batch.scores[i] == s[batch.indices[i]]);
    }
}

TEST_CASE("select_random: clamping and inclusion frequency") {
    CHECK(select_random(1, 1, 9).indices == std::vector<std::size_t>{0});
    auto all = select_random(5, 10, 9).indices;
    std::sort(all.begin(), all.end());
    CHECK(all == iota_vec(5));
    CHECK(select_random(30, 4, 77) == select_random(30, 4, 77));

    const std::size_t n = 10, b = 3, trials = 10000;
    std::vector<int> hits(n, 0);
    for (std::size_t s = 0; s < trials; ++s) {
        const auto idx = select_random(n, b, s).indices;
        CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == b);
        for (auto i : idx) ++hits[i];
    }
    const double p = static_cast<double>(b) / n;
    const double mean = p * trials;
    const double sigma = std::sqrt(trials * p * (1 - p));
    for (int h : hits) CHECK(std::abs(h - mean) <= 3 * sigma);
}

TEST_CASE("k-means: two far clusters, identical points, b equals pool") {
    std::mt19937_64 gen(5);
    std::normal_distribution<float> nf(0.0f, 0.3f);
    std::vector<float> v;
    for (int i = 0; i < 40; ++i) {
        const float off = i < 20 ? 0.0f : 50.0f;
        v.push_back(off + nf(gen));
        v.push_back(off + nf(gen));
    }
    const FeatureMatrix X = FeatureMatrix::dense(40, 2, v);
    const auto pool = iota_vec(40);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto batch = select_kmeans(X, pool, 2, StrategySpec{StrategyKind::embedding_kmeans}, seed);
        REQUIRE(batch.indices.size() == 2);
        CHECK((batch.indices[0] < 20) != (batch.indices[1] < 20));
    }

    const FeatureMatrix same = FeatureMatrix::dense(6, 2, std::vector<float>(12, 1.0f));
    const auto idx = select_kmeans(same, iota_vec(6), 2, StrategySpec{StrategyKind::embedding_kmeans}, 3).indices;
    CHECK(std::vector<std::size_t>(idx.begin(), idx.end()) == std::vector<std::size_t>{0, 1});

    auto full = select_kmeans(X, pool, 40, StrategySpec{StrategyKind::embedding_kmeans}, 1).indices;
    std::sort(full.begin(), full.end());
    CHECK(full == pool);
    CHECK_THROWS_AS(select_kmeans(X, std::vector<std::size_t>{0, 1}, 3, StrategySpec{}, 1), ConfigError);
}

TEST_CASE("k-means picks are nearest to their centroids and unique") {
    std::mt19937_64 gen(6);
    std::normal_distribution<float> nf;
    std::vector<float> v(200 * 3);
    for (auto& x : v) x = nf(gen);
    const FeatureMatrix X = FeatureMatrix::dense(200, 3, v);
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < 200; i += 2) pool.push_back(i);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto batch = select_kmeans(X, pool, 7, StrategySpec{StrategyKind::embedding_kmeans}, seed);
        CHECK(batch.indices.size() == 7);
        CHECK(std::set<std::size_t>(batch.indices.begin(), batch.indices.end()).size() == 7);
        for (auto i : batch.indices) CHECK(i < pool.size());
        CHECK(batch == select_kmeans(X, pool, 7, StrategySpec{StrategyKind::embedding_kmeans}, seed));
    }
}

TEST_CASE("coreset probabilities: exact q, uniform degenerate case") {
    std::mt19937_64 gen(7);
    std::normal_distribution<float> nf;
    std::vector<float> v(20 * 2);
    for (auto& x : v) x = nf(gen);
    const FeatureMatrix X = FeatureMatrix::dense(20, 2, v);
    const auto pool = iota_vec(20);
    const auto q = coreset_probabilities(X, pool);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < 20; ++i) {
        mx += v[2 * i] / 20.0;
        my += v[2 * i + 1] / 20.0;
    }
    std::vector<double> d2(20);
    double total = 0;
    for (std::size_t i = 0; i < 20; ++i) total += d2[i] = std::pow(v[2 * i] - mx, 2) + std::pow(v[2 * i + 1] - my, 2);
    double sum = 0;
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(std::abs(q[i] - (0.5 / 20 + 0.5 * d2[i] / total)) < 1e-12);
        sum += q[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);

    const FeatureMatrix same = FeatureMatrix::dense(4, 1, {2, 2, 2, 2});
    for (double p : coreset_probabilities(same, iota_vec(4))) CHECK(p == 0.25);
}

TEST_CASE("coreset: outlier frequency matches its exact probability") {
    std::mt19937_64 gen(8);
    std::normal_distribution<float> nf;
    std::vector<float> v(100 * 2);
    for (auto& x : v) x = nf(gen);
    v[0] = 1000.0f;
    v[1] = 1000.0f;
    const FeatureMatrix X = FeatureMatrix::dense(100, 2, v);
    const auto pool = iota_vec(100);
    const auto q = coreset_probabilities(X, pool);
    // Distance share of the outlier is almost 1, so q ~ 1/200 + 1/2.
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        mx += v[2 * i] / 100.0;
        my += v[2 * i + 1] / 100.0;
    }
    double total = 0, d0 = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        const double d = std::pow(v[2 * i] - mx, 2) + std::pow(v[2 * i + 1] - my, 2);
        total += d;
        if (i == 0) d0 = d;
    }
    CHECK(q[0] > 0.5 * d0 / total);
    const int trials = 10000;
    int hits = 0;
    for (int s = 0; s < trials; ++s) hits += select_lightweight_coreset(X, pool, 1, static_cast<std::uint64_t>(s)).indices[0] == 0;
    const double sigma = std::sqrt(trials * q[0] * (1 - q[0]));
    CHECK(std::abs(hits - trials * q[0]) <= 3 * sigma);
}

TEST_CASE("coreset sampling: distinct, deterministic, pool-size guard") {
    std::vector<float> v(30);
    for (std::size_t i = 0; i < 30; ++i) v[i] = static_cast<float>(i * i % 7);
    const FeatureMatrix X = FeatureMatrix::dense(30, 1, v);
    const auto pool = iota_vec(30);
    const auto a = select_lightweight_coreset(X, pool, 10, 3);
    CHECK(std::set<std::size_t>(a.indices.begin(), a.indices.end()).size() == 10);
    CHECK(a == select_lightweight_coreset(X, pool, 10, 3));
    CHECK_THROWS_AS(select_lightweight_coreset(X, pool, 31, 3), ConfigError);
}

TEST_CASE("discriminative picks from the unexplored cluster") {
    std::mt19937_64 gen(9);
    std::normal_distribution<float> nf(0.0f, 0.5f);
    std::vector<float> v;
    // rows 0..29: cluster A (labeled 0..14, pool 15..29); rows 30..39: far cluster B (pool)
    for (int i = 0; i < 40; ++i) {
        const float off = i < 30 ? 0.0f : 20.0f;
        for (int c = 0; c < 3; ++c) v.push_back(off + nf(gen));
    }
    const FeatureMatrix X = FeatureMatrix::dense(40, 3, v);
    std::vector<std::size_t> labeled, pool;
    for (std::size_t i = 0; i < 40; ++i) (i < 15 ? labeled : pool).push_back(i);
    StrategySpec spec{StrategyKind::discriminative};
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto one = select_discriminative(X, labeled, pool, 1, spec, seed);
        REQUIRE(one.indices.size() == 1);
        CHECK(pool[one.indices[0]] >= 30);
    }
    spec.dal_rounds = 3;
    const auto many = select_discriminative(X, labeled, pool, 8, spec, 1);
    CHECK(many.indices.size() == 8);
    CHECK(std::set<std::size_t>(many.indices.begin(), many.indices.end()).size() == 8);
    CHECK_THROWS_AS(select_discriminative(X, std::vector<std::size_t>{}, pool, 1, spec, 1), ConfigError);
}

TEST_CASE("binary batch-1 agreement of LC, entropy and BT") {
    std::mt19937_64 gen(10);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> p(1 + gen() % 30);
        for (auto& x : p) x = (gen() % 4 == 0) ? 0.5 : u(gen);
        const auto dist = binary_distribution(p);
        const auto a = select_top_b(score_least_confidence(dist, 2), 1).indices;
        CHECK(select_top_b(score_entropy(dist, 2), 1).indices == a);
        CHECK(select_top_b(score_breaking_ties(dist, 2), 1).indices == a);
    }
}

TEST_CASE("multi-slice uncertainty is the slice mean; dispatcher guards") {
    ProbMatrix m{2, 2, {0.5, 0.9, 1.0, 0.5}};
    const auto s = uncertainty_scores(StrategyKind::least_confidence, m);
    CHECK(s[0] == doctest::Approx((0.5 + 0.1) / 2));
    CHECK(s[1] == doctest::Approx((0.0 + 0.5) / 2));
    CHECK_THROWS_AS(uncertainty_scores(StrategyKind::random, m), ConfigError);

    const FeatureMatrix X = FeatureMatrix::dense(3, 1, {0, 1, 2});
    const std::vector<std::size_t> pool{0, 1, 2};
    QueryContext ctx{X, {}, pool, nullptr, 1, 0};
    CHECK_THROWS_AS(select_batch(StrategySpec{StrategyKind::least_confidence}, ctx), ConfigError);
    CHECK(select_batch(StrategySpec{StrategyKind::random}, ctx).indices.size() == 1);
    CHECK(parse_strategy_kind("lightweight_coreset") == StrategyKind::lightweight_coreset);
    CHECK_THROWS_AS(parse_strategy_kind("qbc"), ConfigError);
}
