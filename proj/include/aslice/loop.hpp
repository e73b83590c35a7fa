#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aslice/corpus.hpp"
#include "aslice/query.hpp"
#include "aslice/slice_model.hpp"

namespace aslice {

// Annotated set D_s (rows of the training dataset, in annotation order, with
// their slice answers) and unannotated pool D (ascending rows). `pending` is
// the batch handed to the oracle and not yet applied.
struct PoolState {
    std::vector<std::size_t> annotated;
    std::vector<SliceVector> answers;
    std::vector<std::size_t> unannotated;
    std::vector<std::size_t> pending;
    std::size_t budget_initial = 0;
    std::size_t budget_remaining = 0;
    std::size_t round = 0;

    std::size_t oracle_answers() const noexcept { return budget_initial - budget_remaining; }
    std::size_t labels_used() const noexcept { return annotated.size(); }
    bool finished() const noexcept { return budget_remaining == 0 || unannotated.empty(); }

    friend bool operator==(const PoolState&, const PoolState&) = default;
};

// Answers slice-membership questions for example ids, one vector per id.
class Oracle {
public:
    virtual ~Oracle() = default;
    virtual std::vector<SliceVector> answer(std::span<const std::string> ids) = 0;
};

// Looks answers up in a fixed table (dataset ground truth or a replayed log).
class SimulatedOracle final : public Oracle {
public:
    explicit SimulatedOracle(std::unordered_map<std::string, SliceVector> truth) : truth_(std::move(truth)) {}

    std::vector<SliceVector> answer(std::span<const std::string> ids) override;
    std::size_t calls() const noexcept { return calls_; }

private:
    std::unordered_map<std::string, SliceVector> truth_;
    std::size_t calls_ = 0;
};

// Every record must carry ground truth.
SimulatedOracle simulated_oracle(const Dataset& ds);

struct DiscoveryConfig {
    StrategySpec strategy;
    ClassifierSpec classifier;
    std::size_t seed_size = 20;
    std::size_t batch_size = 20;
    std::size_t budget = 200;
    bool eval_every_round = true;
    std::uint64_t seed = 0;

    void validate() const;
};

struct CurvePoint {
    std::size_t round = 0;
    std::size_t labels_used = 0;
    std::vector<double> accuracy;           // per slice
    std::vector<double> balanced_accuracy;  // per slice

    friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

using LearningCurve = std::vector<CurvePoint>;

struct QueryLogEntry {
    std::size_t round = 0;
    std::vector<std::string> ids;
    std::vector<double> scores;

    friend bool operator==(const QueryLogEntry&, const QueryLogEntry&) = default;
};

struct RunResult {
    DiscoveryConfig config;
    std::vector<std::string> slice_names;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::vector<std::string> seed_ids;
    LearningCurve curve;
    SliceModel model;
    std::vector<QueryLogEntry> query_log;
    std::size_t oracle_answers = 0;
    std::size_t budget_remaining = 0;
};

// One answer for one pending example.
struct LabelAnswer {
    std::string id;
    SliceVector s;
};

// Seed set rows drawn uniformly (without replacement) from the training set.
std::vector<std::size_t> draw_seed_set(const Dataset& train, const DiscoveryConfig& cfg);

// Initial state once the seed rows have their answers. Seed answers do not
// consume the query budget.
PoolState make_pool(const Dataset& train, const DiscoveryConfig& cfg, std::span<const std::size_t> seed_rows,
                    std::span<const SliceVector> seed_answers);

// Retrains every slice classifier from scratch on the annotated set.
SliceModel train_round_model(const Dataset& train, const PoolState& state, const DiscoveryConfig& cfg);

CurvePoint evaluate_round(const SliceModel& model, const Dataset& test, const PoolState& state);

// Selects the next batch (train rows, size min(b, budget, |D|)) and records it
// as pending on `state`. Returns an empty batch when the state is finished.
QueryBatch step_next_batch(PoolState& state, const Dataset& train, const SliceModel& model,
                           const DiscoveryConfig& cfg);

// Moves the pending batch into the annotated set. `answers` must cover the
// pending ids exactly once each; on error the input state is untouched.
PoolState apply_answers(const PoolState& state, const Dataset& train, std::span<const LabelAnswer> answers);

RunResult run_discovery(const Dataset& train, const Dataset& test, const DiscoveryConfig& cfg, Oracle& oracle);

// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view text);

// round,labels_used,slice,accuracy,balanced_accuracy
std::string curve_csv(const RunResult& result);

}  // namespace aslice
