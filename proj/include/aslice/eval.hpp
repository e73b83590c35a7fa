#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aslice/corpus.hpp"
#include "aslice/loop.hpp"

namespace aslice {

// Fraction of positions where pred == truth.
double slice_accuracy(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);
// Mean of true-positive and true-negative rates; a class absent from `truth` is skipped.
double balanced_accuracy(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

// (labels used, accuracy) view of a learning curve.
struct CurveSample {
    std::size_t labels = 0;
    double accuracy = 0.0;
};

// Smallest labels count whose accuracy reaches the target, or nullopt.
std::optional<std::size_t> labels_to_reach(std::span<const CurveSample> curve, double target);

enum class CurveMetric { accuracy, balanced_accuracy };

std::vector<CurveSample> curve_samples(const LearningCurve& curve, std::size_t slice, CurveMetric metric);

struct Summary {
    double best = 0.0;
    std::size_t labels_at_best = 0;
    double final_value = 0.0;
};

// Max over the curve; ties resolved to the fewest labels.
Summary summarize(std::span<const CurveSample> curve);

struct Spread {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
};

// Median and interquartile range (linear interpolation between order statistics).
Spread spread_of(std::vector<double> values);

struct ComparisonSpec {
    std::string label;           // row label in reports, e.g. "least_confidence"
    std::string representation;  // "Setup" column, e.g. "embedding" or "sae"
    DiscoveryConfig config;
};

struct Replicate {
    std::uint64_t seed = 0;
    std::vector<Summary> accuracy;           // per slice
    std::vector<Summary> balanced_accuracy;  // per slice
    RunResult result;
};

struct SliceAggregate {
    Spread best_accuracy;
    Spread labels_at_best;
    Spread final_accuracy;
    Spread best_balanced_accuracy;
    Spread labels_at_best_balanced;
    Spread final_balanced_accuracy;
};

struct ReportCell {
    ComparisonSpec spec;
    std::vector<Replicate> replicates;
    std::vector<SliceAggregate> slices;
};

struct ComparisonReport {
    std::vector<std::string> slice_names;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<ReportCell> cells;
};

// One run per (spec, seed); the seed overrides DiscoveryConfig::seed. Runs may
// execute on up to `jobs` threads; the report does not depend on `jobs`.
ComparisonReport compare_strategies(const Dataset& train, const Dataset& test, std::span<const ComparisonSpec> specs,
                                    std::span<const std::uint64_t> seeds, std::size_t jobs = 1);

// Setup | Slice Classifier | Best Accuracy | Labeled Examples
std::string report_markdown(const ComparisonReport& report);

}  // namespace aslice
