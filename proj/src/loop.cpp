#include "aslice/loop.hpp"

#include <algorithm>
#include <unordered_set>

#include "aslice/errors.hpp"
#include "aslice/eval.hpp"
#include "aslice/rng.hpp"
#include "json.hpp"

namespace aslice {

namespace {

// Sub-seed tags; keep stable, they define the documented random streams.
constexpr std::uint64_t kSeedSetStream = 1;
constexpr std::uint64_t kTrainStream = 2;
constexpr std::uint64_t kQueryStream = 3;

}  // namespace

std::vector<SliceVector> SimulatedOracle::answer(std::span<const std::string> ids) {
    std::vector<SliceVector> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = truth_.find(id);
        if (it == truth_.end()) throw OracleError("oracle has no ground truth for id " + id);
        out.push_back(it->second);
    }
    calls_ += ids.size();
    return out;
}

SimulatedOracle simulated_oracle(const Dataset& ds) {
    std::unordered_map<std::string, SliceVector> truth;
    truth.reserve(ds.size());
    for (const auto& rec : ds.records()) {
        if (!rec.s) throw OracleError("record " + rec.id + " has no ground-truth slice vector");
        truth.emplace(rec.id, *rec.s);
    }
    return SimulatedOracle(std::move(truth));
}

void DiscoveryConfig::validate() const {
    strategy.validate();
    classifier.validate();
    if (seed_size < 2) throw ConfigError("seed set size must be at least 2");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
}

std::vector<std::size_t> draw_seed_set(const Dataset& train, const DiscoveryConfig& cfg) {
    if (cfg.seed_size > train.size())
        throw ConfigError("seed set size " + std::to_string(cfg.seed_size) + " exceeds training set size " +
                          std::to_string(train.size()));
    auto batch = select_random(train.size(), cfg.seed_size, derive_seed(cfg.seed, {kSeedSetStream}));
    return batch.indices;
}

PoolState make_pool(const Dataset& train, const DiscoveryConfig& cfg, std::span<const std::size_t> seed_rows,
                    std::span<const SliceVector> seed_answers) {
    if (seed_rows.size() != seed_answers.size()) throw OracleError("seed answers do not match the seed set");
    PoolState s;
    std::vector<char> in_seed(train.size(), 0);
    for (std::size_t i = 0; i < seed_rows.size(); ++i) {
        const auto r = seed_rows[i];
        if (r >= train.size() || in_seed[r]) throw ConfigError("seed rows must be unique training rows");
        if (seed_answers[i].size() != train.k()) throw OracleError("seed answer has wrong slice count");
        in_seed[r] = 1;
    }
    s.annotated.assign(seed_rows.begin(), seed_rows.end());
    s.answers.assign(seed_answers.begin(), seed_answers.end());
    for (std::size_t r = 0; r < train.size(); ++r)
        if (!in_seed[r]) s.unannotated.push_back(r);
    s.budget_initial = cfg.budget;
    s.budget_remaining = cfg.budget;
    return s;
}

SliceModel train_round_model(const Dataset& train, const PoolState& state, const DiscoveryConfig& cfg) {
    return train_slice_model(cfg.classifier, train.features(), state.annotated, state.answers, train.slice_names(),
                             derive_seed(cfg.seed, {kTrainStream, state.round}));
}

CurvePoint evaluate_round(const SliceModel& model, const Dataset& test, const PoolState& state) {
    if (!test.has_ground_truth()) throw DataError("test set records need ground-truth slice vectors");
    const auto pred = predict_membership(model, test.features());
    CurvePoint pt;
    pt.round = state.round;
    pt.labels_used = state.labels_used();
    std::vector<std::uint8_t> p(test.size());
    std::vector<std::uint8_t> t(test.size());
    for (std::size_t j = 0; j < model.k(); ++j) {
        for (std::size_t i = 0; i < test.size(); ++i) {
            p[i] = pred[i][j];
            t[i] = (*test.record(i).s)[j];
        }
        pt.accuracy.push_back(slice_accuracy(p, t));
        pt.balanced_accuracy.push_back(balanced_accuracy(p, t));
    }
    return pt;
}

QueryBatch step_next_batch(PoolState& state, const Dataset& train, const SliceModel& model,
                           const DiscoveryConfig& cfg) {
    if (!state.pending.empty()) throw OracleError("a batch is already pending for round " + std::to_string(state.round));
    if (state.finished()) return {};
    const std::size_t b = std::min({cfg.batch_size, state.budget_remaining, state.unannotated.size()});
    ProbMatrix membership;
    const bool needs_probs = is_uncertainty(cfg.strategy.kind);
    if (needs_probs) membership = predict_proba(model, train.features(), state.unannotated);
    QueryContext ctx{train.features(),
                     state.annotated,
                     state.unannotated,
                     needs_probs ? &membership : nullptr,
                     b,
                     derive_seed(cfg.seed, {kQueryStream, cfg.strategy.seed, state.round})};
    QueryBatch batch = select_batch(cfg.strategy, ctx);
    for (auto& idx : batch.indices) idx = state.unannotated[idx];
    state.pending = batch.indices;
    return batch;
}

PoolState apply_answers(const PoolState& state, const Dataset& train, std::span<const LabelAnswer> answers) {
    if (state.pending.empty()) throw OracleError("no pending batch to apply (already applied?)");
    std::vector<const SliceVector*> by_pending(state.pending.size(), nullptr);
    for (const auto& a : answers) {
        const auto row = train.find(a.id);
        if (!row) throw OracleError("answer for unknown id " + a.id);
        const auto it = std::find(state.pending.begin(), state.pending.end(), *row);
        if (it == state.pending.end()) throw OracleError("answer for non-pending id " + a.id);
        const auto pos = static_cast<std::size_t>(it - state.pending.begin());
        if (by_pending[pos]) throw OracleError("duplicate answer for id " + a.id);
        if (a.s.size() != train.k())
            throw OracleError("answer for " + a.id + " has " + std::to_string(a.s.size()) + " slice bits, expected " +
                              std::to_string(train.k()));
        for (auto bit : a.s)
            if (bit > 1) throw OracleError("answer for " + a.id + " is not binary");
        by_pending[pos] = &a.s;
    }
    for (std::size_t i = 0; i < by_pending.size(); ++i)
        if (!by_pending[i]) throw OracleError("missing answer for pending id " + train.record(state.pending[i]).id);

    PoolState next = state;
    std::unordered_set<std::size_t> moved(state.pending.begin(), state.pending.end());
    for (std::size_t i = 0; i < state.pending.size(); ++i) {
        next.annotated.push_back(state.pending[i]);
        next.answers.push_back(*by_pending[i]);
    }
    std::erase_if(next.unannotated, [&](std::size_t r) { return moved.contains(r); });
    next.budget_remaining -= state.pending.size();
    next.pending.clear();
    ++next.round;
    return next;
}

RunResult run_discovery(const Dataset& train, const Dataset& test, const DiscoveryConfig& cfg, Oracle& oracle) {
    cfg.validate();
    if (train.k() != test.k()) throw ConfigError("train and test declare different slice counts");
    RunResult result;
    result.config = cfg;
    result.slice_names = train.slice_names();
    result.train_size = train.size();
    result.test_size = test.size();

    const auto seed_rows = draw_seed_set(train, cfg);
    for (auto r : seed_rows) result.seed_ids.push_back(train.record(r).id);
    std::vector<SliceVector> seed_answers;
    try {
        seed_answers = oracle.answer(result.seed_ids);
    } catch (const Error& e) {
        throw OracleError("oracle failed on the seed set: " + std::string(e.what()));
    }
    PoolState state = make_pool(train, cfg, seed_rows, seed_answers);

    for (;;) {
        SliceModel model = train_round_model(train, state, cfg);
        const bool done = state.finished();
        if (cfg.eval_every_round || done) result.curve.push_back(evaluate_round(model, test, state));
        if (done) {
            result.model = std::move(model);
            break;
        }
        QueryBatch batch = step_next_batch(state, train, model, cfg);
        QueryLogEntry entry{state.round, {}, batch.scores};
        for (auto r : batch.indices) entry.ids.push_back(train.record(r).id);
        std::vector<SliceVector> replies;
        try {
            replies = oracle.answer(entry.ids);
        } catch (const Error& e) {
            throw OracleError("oracle failed in round " + std::to_string(state.round) + ": " + e.what());
        }
        if (replies.size() != entry.ids.size())
            throw OracleError("oracle returned " + std::to_string(replies.size()) + " answers for " +
                              std::to_string(entry.ids.size()) + " ids in round " + std::to_string(state.round));
        std::vector<LabelAnswer> answers;
        for (std::size_t i = 0; i < replies.size(); ++i) answers.push_back({entry.ids[i], std::move(replies[i])});
        state = apply_answers(state, train, answers);
        result.query_log.push_back(std::move(entry));
    }
    result.oracle_answers = state.oracle_answers();
    result.budget_remaining = state.budget_remaining;
    return result;
}

std::string csv_field(std::string_view text) {
    if (text.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(text);
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::string curve_csv(const RunResult& result) {
    std::string out = "round,labels_used,slice,accuracy,balanced_accuracy\n";
    for (const auto& pt : result.curve) {
        for (std::size_t j = 0; j < pt.accuracy.size(); ++j) {
            out += std::to_string(pt.round) + ',' + std::to_string(pt.labels_used) + ',' + csv_field(result.slice_names.at(j)) +
                   ',' + nlohmann::json(pt.accuracy[j]).dump() + ',' + nlohmann::json(pt.balanced_accuracy[j]).dump() +
                   '\n';
        }
    }
    return out;
}

}  // namespace aslice
