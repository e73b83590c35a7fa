#pragma once

#include <string>

#include "aslice/corpus.hpp"
#include "aslice/eval.hpp"
#include "aslice/loop.hpp"
#include "aslice/query.hpp"
#include "aslice/slice_model.hpp"
#include "json.hpp"

namespace aslice {

using Json = nlohmann::json;

// Decoders reject unknown keys and wrong types with ConfigError naming the
// JSON path (e.g. "runs[1].strategy.kind").
Json to_json(const StrategySpec& spec);
StrategySpec strategy_from_json(const Json& j, const std::string& path = "strategy");

Json to_json(const ClassifierSpec& spec);
ClassifierSpec classifier_from_json(const Json& j, const std::string& path = "classifier");

Json to_json(const DiscoveryConfig& cfg);
DiscoveryConfig discovery_from_json(const Json& j, const std::string& path = "run");

Json to_json(const SynthConfig& cfg);
// Either a full {"slices": [...]} description or the shorthand
// {"n","d","k","prevalence","separation","noise","seed"}.
SynthConfig synth_from_json(const Json& j, const std::string& path = "synthetic");

Json to_json(const CurvePoint& pt);
CurvePoint curve_point_from_json(const Json& j);
Json to_json(const QueryLogEntry& e);
QueryLogEntry query_log_from_json(const Json& j);

// Curve, config echo and query log; the model is stored separately.
Json to_json(const RunResult& r);
// Everything except the model.
RunResult run_result_from_json(const Json& j);

Json to_json(const ComparisonReport& report);

}  // namespace aslice
