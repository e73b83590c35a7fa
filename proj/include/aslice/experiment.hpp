#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aslice/corpus.hpp"
#include "aslice/eval.hpp"
#include "aslice/json_io.hpp"

namespace aslice {

// One experiment file: where the data comes from, how it is prepared, which
// discovery configurations to run, and with which seeds.
struct ExperimentConfig {
    std::optional<std::filesystem::path> dataset_path;  // SLFX manifest
    std::optional<SynthConfig> synthetic;
    double test_fraction = 0.2;
    std::uint64_t split_seed = 0;
    NormScheme normalize = NormScheme::none;
    bool append_task_label = false;
    bool append_correct = false;
    std::string setup;  // representation label used in reports
    std::vector<ComparisonSpec> runs;
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path out = "out";

    void validate() const;
};

// Parses an experiment file. Relative dataset paths resolve against base_dir.
// Syntax errors report line and column; schema errors report the JSON path.
ExperimentConfig parse_experiment(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment(const std::filesystem::path& path);
ExperimentConfig experiment_from_json(const Json& j, const std::filesystem::path& base_dir = {});
Json to_json(const ExperimentConfig& cfg);

struct PreparedData {
    Dataset train;
    Dataset test;
    bool stratified = true;
    std::vector<std::string> warnings;
};

// load or generate -> optional task columns -> normalize -> split
PreparedData prepare_data(const ExperimentConfig& cfg);

// 16 hex digits of FNV-1a over the bytes.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace aslice
