#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "aslice/corpus.hpp"
#include "aslice/slice_model.hpp"

namespace aslice {

enum class StrategyKind {
    least_confidence,
    prediction_entropy,
    breaking_ties,
    random,
    embedding_kmeans,
    lightweight_coreset,
    discriminative,
};

std::string_view to_string(StrategyKind kind);
StrategyKind parse_strategy_kind(std::string_view name);
bool is_uncertainty(StrategyKind kind) noexcept;

struct StrategySpec {
    StrategyKind kind = StrategyKind::least_confidence;
    std::size_t kmeans_max_iter = 100;
    // Discriminative active learning: number of refits per batch and sub-classifier epochs.
    std::size_t dal_rounds = 1;
    std::size_t dal_epochs = 10;
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const StrategySpec&, const StrategySpec&) = default;
};

// Selected positions within the candidate pool passed to a selector, in
// selection order. `scores` is parallel to `indices` when the strategy
// defines a score, empty otherwise.
struct QueryBatch {
    std::vector<std::size_t> indices;
    std::vector<double> scores;

    friend bool operator==(const QueryBatch&, const QueryBatch&) = default;
};

// Uncertainty scores over row-major per-class distributions with `classes` columns.
// Rows must be non-negative and sum to 1 within 1e-6.
std::vector<double> score_least_confidence(std::span<const double> probs, std::size_t classes);
std::vector<double> score_entropy(std::span<const double> probs, std::size_t classes);
std::vector<double> score_breaking_ties(std::span<const double> probs, std::size_t classes);

// (1 - p, p) rows for binary membership probabilities.
std::vector<double> binary_distribution(std::span<const double> p);

// Uncertainty score per pool row: the strategy's binary score for each slice,
// averaged over the k slices.
std::vector<double> uncertainty_scores(StrategyKind kind, const ProbMatrix& membership);

// The b highest scores; ties go to the lower index.
QueryBatch select_top_b(std::span<const double> scores, std::size_t b);
QueryBatch select_random(std::size_t pool_size, std::size_t b, std::uint64_t seed);

// Lloyd's algorithm with k-means++ seeding over the pool rows; returns the
// pool member nearest each centroid.
QueryBatch select_kmeans(const FeatureMatrix& X, std::span<const std::size_t> pool, std::size_t b,
                         const StrategySpec& opts, std::uint64_t seed);

// q(x) = 1/(2n) + ||x - mean||^2 / (2 * sum ||x' - mean||^2); uniform when all points coincide.
std::vector<double> coreset_probabilities(const FeatureMatrix& X, std::span<const std::size_t> pool);
QueryBatch select_lightweight_coreset(const FeatureMatrix& X, std::span<const std::size_t> pool, std::size_t b,
                                      std::uint64_t seed);

// Labeled rows are class 0, pool rows class 1; each round picks the pool rows
// the sub-classifier finds most confidently unlabeled.
QueryBatch select_discriminative(const FeatureMatrix& X, std::span<const std::size_t> labeled,
                                 std::span<const std::size_t> pool, std::size_t b, const StrategySpec& opts,
                                 std::uint64_t seed);

struct QueryContext {
    const FeatureMatrix& X;
    std::span<const std::size_t> labeled;
    std::span<const std::size_t> pool;
    const ProbMatrix* membership = nullptr;  // rows parallel to `pool`; uncertainty strategies only
    std::size_t b = 1;
    std::uint64_t seed = 0;
};

QueryBatch select_batch(const StrategySpec& spec, const QueryContext& ctx);

}  // namespace aslice
