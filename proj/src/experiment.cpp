#include "aslice/experiment.hpp"

#include <cstdio>

#include "aslice/errors.hpp"
#include "file_util.hpp"

namespace aslice {

void ExperimentConfig::validate() const {
    if (dataset_path.has_value() == synthetic.has_value())
        throw ConfigError("dataset: exactly one of \"path\" or \"synthetic\" is required");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction: must lie in (0, 1)");
    if (runs.empty()) throw ConfigError("runs: at least one run configuration is required");
    if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
    if (synthetic) synthetic->validate();
    for (const auto& r : runs) r.config.validate();
}

namespace {

std::string line_context(std::string_view text, std::size_t byte) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

ComparisonSpec run_from_json(const Json& j, const std::string& path, const std::string& default_setup) {
    if (!j.is_object()) throw ConfigError(path + ": expected a JSON object");
    Json body = j;
    ComparisonSpec spec;
    if (body.contains("label")) {
        if (!body["label"].is_string()) throw ConfigError(path + ".label: expected a string");
        spec.label = body["label"].get<std::string>();
        body.erase("label");
    }
    if (body.contains("representation")) {
        if (!body["representation"].is_string()) throw ConfigError(path + ".representation: expected a string");
        spec.representation = body["representation"].get<std::string>();
        body.erase("representation");
    } else {
        spec.representation = default_setup;
    }
    spec.config = discovery_from_json(body, path);
    if (spec.label.empty()) spec.label = std::string(to_string(spec.config.strategy.kind));
    return spec;
}

}  // namespace

ExperimentConfig experiment_from_json(const Json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    static const char* const known[] = {"dataset",       "test_fraction", "split_seed", "normalize", "append_task_label",
                                        "append_correct", "setup",         "runs",       "run",       "seeds",
                                        "out"};
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("config." + key + ": unknown field");
    }

    ExperimentConfig cfg;
    auto number = [&](const char* key, auto fallback) {
        using T = decltype(fallback);
        if (!j.contains(key)) return fallback;
        const auto& v = j.at(key);
        if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) throw ConfigError(std::string("config.") + key + ": expected a non-negative integer");
        } else {
            if (!v.is_number()) throw ConfigError(std::string("config.") + key + ": expected a number");
        }
        return v.get<T>();
    };
    auto flag = [&](const char* key) {
        if (!j.contains(key)) return false;
        if (!j.at(key).is_boolean()) throw ConfigError(std::string("config.") + key + ": expected a boolean");
        return j.at(key).get<bool>();
    };
    auto text = [&](const char* key, std::string fallback) {
        if (!j.contains(key)) return fallback;
        if (!j.at(key).is_string()) throw ConfigError(std::string("config.") + key + ": expected a string");
        return j.at(key).get<std::string>();
    };

    if (!j.contains("dataset") || !j.at("dataset").is_object())
        throw ConfigError("config.dataset: required object with \"path\" or \"synthetic\"");
    const auto& ds = j.at("dataset");
    for (const auto& [key, value] : ds.items())
        if (key != "path" && key != "synthetic") throw ConfigError("config.dataset." + key + ": unknown field");
    if (ds.contains("path")) {
        if (!ds.at("path").is_string()) throw ConfigError("config.dataset.path: expected a string");
        std::filesystem::path p = ds.at("path").get<std::string>();
        cfg.dataset_path = (p.is_absolute() ? p : base_dir / p).lexically_normal();
    }
    if (ds.contains("synthetic")) cfg.synthetic = synth_from_json(ds.at("synthetic"), "config.dataset.synthetic");

    cfg.test_fraction = number("test_fraction", cfg.test_fraction);
    cfg.split_seed = number("split_seed", cfg.split_seed);
    try {
        cfg.normalize = parse_norm_scheme(text("normalize", "none"));
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("config.normalize: ") + e.what());
    }
    cfg.append_task_label = flag("append_task_label");
    cfg.append_correct = flag("append_correct");
    cfg.setup = text("setup", cfg.synthetic ? "synthetic" : "features");

    if (j.contains("runs") && j.contains("run")) throw ConfigError("config: give either \"run\" or \"runs\", not both");
    if (j.contains("runs")) {
        const auto& runs = j.at("runs");
        if (!runs.is_array()) throw ConfigError("config.runs: expected an array");
        for (std::size_t i = 0; i < runs.size(); ++i)
            cfg.runs.push_back(run_from_json(runs[i], "config.runs[" + std::to_string(i) + "]", cfg.setup));
    } else if (j.contains("run")) {
        cfg.runs.push_back(run_from_json(j.at("run"), "config.run", cfg.setup));
    } else {
        throw ConfigError("config.runs: at least one run configuration is required");
    }

    if (j.contains("seeds")) {
        const auto& seeds = j.at("seeds");
        if (!seeds.is_array()) throw ConfigError("config.seeds: expected an array");
        cfg.seeds.clear();
        for (const auto& s : seeds) {
            if (!s.is_number_unsigned()) throw ConfigError("config.seeds: entries must be non-negative integers");
            cfg.seeds.push_back(s.get<std::uint64_t>());
        }
    }
    cfg.out = text("out", cfg.out.string());
    cfg.validate();
    return cfg;
}

ExperimentConfig parse_experiment(std::string_view text, const std::filesystem::path& base_dir) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError("config is not valid JSON at " + line_context(text, e.byte > 0 ? e.byte - 1 : 0) + ": " +
                          e.what());
    }
    return experiment_from_json(j, base_dir);
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
    std::string text;
    try {
        text = detail::read_file(path);
    } catch (const DataError&) {
        throw ConfigError("cannot read config file: " + path.string());
    }
    return parse_experiment(text, path.parent_path());
}

Json to_json(const ExperimentConfig& cfg) {
    Json ds;
    if (cfg.dataset_path) ds["path"] = cfg.dataset_path->generic_string();
    if (cfg.synthetic) ds["synthetic"] = to_json(*cfg.synthetic);
    Json runs = Json::array();
    for (const auto& r : cfg.runs) {
        Json rj = to_json(r.config);
        rj["label"] = r.label;
        rj["representation"] = r.representation;
        runs.push_back(std::move(rj));
    }
    return Json{{"dataset", std::move(ds)},
                {"test_fraction", cfg.test_fraction},
                {"split_seed", cfg.split_seed},
                {"normalize", std::string(to_string(cfg.normalize))},
                {"append_task_label", cfg.append_task_label},
                {"append_correct", cfg.append_correct},
                {"setup", cfg.setup},
                {"runs", std::move(runs)},
                {"seeds", cfg.seeds},
                {"out", cfg.out.generic_string()}};
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
    cfg.validate();
    Dataset ds = cfg.dataset_path ? load_dataset(*cfg.dataset_path) : generate_synthetic(*cfg.synthetic);
    if (cfg.append_task_label || cfg.append_correct) ds = append_task_columns(ds, cfg.append_correct);
    ds = normalize(ds, cfg.normalize);
    auto parts = split(ds, cfg.test_fraction, cfg.split_seed);
    return PreparedData{std::move(parts.train), std::move(parts.test), parts.stratified, std::move(parts.warnings)};
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace aslice
