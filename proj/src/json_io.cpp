#include "aslice/json_io.hpp"

#include <set>

#include "aslice/errors.hpp"

namespace aslice {

namespace {

// Typed access to a JSON object that remembers which keys were consumed, so
// that leftovers can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected a JSON object");
    }

    bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    template <typename T>
    T required(const char* key) {
        if (!has(key)) throw ConfigError(path_ + "." + key + ": required field missing");
        return get<T>(key);
    }

    template <typename T>
    T optional(const char* key, T fallback) {
        if (!has(key)) {
            seen_.insert(key);
            return fallback;
        }
        return get<T>(key);
    }

    void mark(const char* key) { seen_.insert(key); }

    const Json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    std::string child(const char* key) const { return path_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.contains(key)) throw ConfigError(path_ + "." + key + ": unknown field");
    }

private:
    template <typename T>
    T get(const char* key) {
        seen_.insert(key);
        const Json& v = j_.at(key);
        const auto where = path_ + "." + key;
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(where + ": expected a string");
        } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) throw ConfigError(where + ": expected a non-negative integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(where + ": expected a number");
        }
        try {
            return v.get<T>();
        } catch (const Json::exception&) {
            throw ConfigError(where + ": wrong type");
        }
    }

    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename Fn>
auto rethrow_with_path(const std::string& path, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace

Json to_json(const StrategySpec& spec) {
    return Json{{"kind", std::string(to_string(spec.kind))},
                {"kmeans_max_iter", spec.kmeans_max_iter},
                {"dal_rounds", spec.dal_rounds},
                {"dal_epochs", spec.dal_epochs},
                {"seed", spec.seed}};
}

StrategySpec strategy_from_json(const Json& j, const std::string& path) {
    if (j.is_string()) return rethrow_with_path(path, [&] { return StrategySpec{parse_strategy_kind(j.get<std::string>())}; });
    ObjectReader r(j, path);
    StrategySpec s;
    s.kind = rethrow_with_path(r.child("kind"), [&] { return parse_strategy_kind(r.required<std::string>("kind")); });
    s.kmeans_max_iter = r.optional<std::size_t>("kmeans_max_iter", s.kmeans_max_iter);
    s.dal_rounds = r.optional<std::size_t>("dal_rounds", s.dal_rounds);
    s.dal_epochs = r.optional<std::size_t>("dal_epochs", s.dal_epochs);
    s.seed = r.optional<std::uint64_t>("seed", s.seed);
    r.finish();
    rethrow_with_path(path, [&] {
        s.validate();
        return 0;
    });
    return s;
}

Json to_json(const ClassifierSpec& spec) {
    Json j{{"kind", std::string(to_string(spec.kind))},
           {"epochs", spec.train.epochs},
           {"learning_rate", spec.train.learning_rate},
           {"l2", spec.train.l2},
           {"batch_size", spec.train.batch_size},
           {"class_weight", std::string(to_string(spec.train.class_weight))}};
    if (spec.kind == ClassifierKind::mlp) j["hidden"] = spec.hidden;
    return j;
}

ClassifierSpec classifier_from_json(const Json& j, const std::string& path) {
    if (j.is_string()) return classifier_from_json(Json{{"kind", j}}, path);
    ObjectReader r(j, path);
    ClassifierSpec c;
    c.kind = rethrow_with_path(r.child("kind"), [&] { return parse_classifier_kind(r.optional<std::string>("kind", "svm")); });
    c.train = c.kind == ClassifierKind::svm ? TrainConfig::svm_defaults() : TrainConfig::mlp_defaults();
    c.train.epochs = r.optional<std::size_t>("epochs", c.train.epochs);
    c.train.learning_rate = r.optional<double>("learning_rate", c.train.learning_rate);
    c.train.l2 = r.optional<double>("l2", c.train.l2);
    c.train.batch_size = r.optional<std::size_t>("batch_size", c.train.batch_size);
    c.train.class_weight = rethrow_with_path(r.child("class_weight"), [&] {
        return parse_class_weight(r.optional<std::string>("class_weight", std::string(to_string(c.train.class_weight))));
    });
    c.hidden = r.optional<std::vector<std::size_t>>("hidden", c.hidden);
    r.finish();
    rethrow_with_path(path, [&] {
        c.validate();
        return 0;
    });
    return c;
}

Json to_json(const DiscoveryConfig& cfg) {
    return Json{{"strategy", to_json(cfg.strategy)},
                {"classifier", to_json(cfg.classifier)},
                {"seed_size", cfg.seed_size},
                {"batch_size", cfg.batch_size},
                {"budget", cfg.budget},
                {"eval_every_round", cfg.eval_every_round},
                {"seed", cfg.seed}};
}

DiscoveryConfig discovery_from_json(const Json& j, const std::string& path) {
    ObjectReader r(j, path);
    DiscoveryConfig c;
    r.mark("strategy");
    r.mark("classifier");
    if (r.has("strategy")) c.strategy = strategy_from_json(r.raw("strategy"), r.child("strategy"));
    if (r.has("classifier")) c.classifier = classifier_from_json(r.raw("classifier"), r.child("classifier"));
    c.seed_size = r.optional<std::size_t>("seed_size", c.seed_size);
    c.batch_size = r.optional<std::size_t>("batch_size", c.batch_size);
    c.budget = r.optional<std::size_t>("budget", c.budget);
    c.eval_every_round = r.optional<bool>("eval_every_round", c.eval_every_round);
    c.seed = r.optional<std::uint64_t>("seed", c.seed);
    r.finish();
    rethrow_with_path(path, [&] {
        c.validate();
        return 0;
    });
    return c;
}

Json to_json(const SynthConfig& cfg) {
    Json slices = Json::array();
    for (const auto& s : cfg.slices)
        slices.push_back(Json{{"name", s.name}, {"center", s.center}, {"spread", s.spread}, {"prevalence", s.prevalence}});
    return Json{{"n", cfg.n},
                {"d", cfg.d},
                {"slices", std::move(slices)},
                {"background_spread", cfg.background_spread},
                {"noise", cfg.noise},
                {"task_positive_rate", cfg.task_positive_rate},
                {"seed", cfg.seed}};
}

SynthConfig synth_from_json(const Json& j, const std::string& path) {
    ObjectReader r(j, path);
    SynthConfig cfg;
    if (r.has("slices")) {
        cfg.n = r.required<std::size_t>("n");
        cfg.d = r.required<std::size_t>("d");
        const Json& arr = r.raw("slices");
        if (!arr.is_array()) throw ConfigError(path + ".slices: expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            ObjectReader sr(arr[i], path + ".slices[" + std::to_string(i) + "]");
            SynthSlice s;
            s.name = sr.optional<std::string>("name", "slice_" + std::to_string(i));
            s.center = sr.required<std::vector<double>>("center");
            s.spread = sr.optional<double>("spread", 1.0);
            s.prevalence = sr.required<double>("prevalence");
            sr.finish();
            cfg.slices.push_back(std::move(s));
        }
        cfg.background_spread = r.optional<double>("background_spread", cfg.background_spread);
        cfg.noise = r.optional<double>("noise", cfg.noise);
        cfg.task_positive_rate = r.optional<double>("task_positive_rate", cfg.task_positive_rate);
        cfg.seed = r.optional<std::uint64_t>("seed", cfg.seed);
    } else {
        const auto n = r.required<std::size_t>("n");
        const auto d = r.required<std::size_t>("d");
        const auto k = r.optional<std::size_t>("k", 1);
        const auto prevalence = r.optional<double>("prevalence", 0.2);
        const auto separation = r.optional<double>("separation", 6.0);
        const auto noise = r.optional<double>("noise", 0.0);
        const auto seed = r.optional<std::uint64_t>("seed", 0);
        const auto task_rate = r.optional<double>("task_positive_rate", 0.5);
        cfg = SynthConfig::separated(n, d, k, prevalence, separation, noise, seed);
        cfg.task_positive_rate = task_rate;
    }
    r.finish();
    rethrow_with_path(path, [&] {
        cfg.validate();
        return 0;
    });
    return cfg;
}

Json to_json(const CurvePoint& pt) {
    return Json{{"round", pt.round},
                {"labels_used", pt.labels_used},
                {"accuracy", pt.accuracy},
                {"balanced_accuracy", pt.balanced_accuracy}};
}

CurvePoint curve_point_from_json(const Json& j) {
    CurvePoint pt;
    pt.round = j.at("round").get<std::size_t>();
    pt.labels_used = j.at("labels_used").get<std::size_t>();
    pt.accuracy = j.at("accuracy").get<std::vector<double>>();
    pt.balanced_accuracy = j.at("balanced_accuracy").get<std::vector<double>>();
    return pt;
}

Json to_json(const QueryLogEntry& e) { return Json{{"round", e.round}, {"ids", e.ids}, {"scores", e.scores}}; }

QueryLogEntry query_log_from_json(const Json& j) {
    return QueryLogEntry{j.at("round").get<std::size_t>(), j.at("ids").get<std::vector<std::string>>(),
                         j.at("scores").get<std::vector<double>>()};
}

Json to_json(const RunResult& r) {
    Json curve = Json::array();
    for (const auto& pt : r.curve) curve.push_back(to_json(pt));
    Json log = Json::array();
    for (const auto& e : r.query_log) log.push_back(to_json(e));
    Json models = Json::array();
    for (std::size_t j = 0; j < r.model.k(); ++j) models.push_back(std::string(classifier_kind(r.model.classifiers[j])));
    return Json{{"config", to_json(r.config)},
                {"slice_names", r.slice_names},
                {"train_size", r.train_size},
                {"test_size", r.test_size},
                {"seed_ids", r.seed_ids},
                {"curve", std::move(curve)},
                {"query_log", std::move(log)},
                {"oracle_answers", r.oracle_answers},
                {"budget_remaining", r.budget_remaining},
                {"final_models", std::move(models)}};
}

RunResult run_result_from_json(const Json& j) {
    RunResult r;
    try {
        r.config = discovery_from_json(j.at("config"), "config");
        r.slice_names = j.at("slice_names").get<std::vector<std::string>>();
        r.train_size = j.at("train_size").get<std::size_t>();
        r.test_size = j.at("test_size").get<std::size_t>();
        r.seed_ids = j.at("seed_ids").get<std::vector<std::string>>();
        for (const auto& pt : j.at("curve")) r.curve.push_back(curve_point_from_json(pt));
        for (const auto& e : j.at("query_log")) r.query_log.push_back(query_log_from_json(e));
        r.oracle_answers = j.at("oracle_answers").get<std::size_t>();
        r.budget_remaining = j.at("budget_remaining").get<std::size_t>();
    } catch (const Json::exception& e) {
        throw DataError(std::string("result JSON does not match the schema: ") + e.what());
    }
    return r;
}

namespace {

Json to_json(const Spread& s) { return Json{{"median", s.median}, {"q1", s.q1}, {"q3", s.q3}}; }
Json to_json(const Summary& s) {
    return Json{{"best", s.best}, {"labels_at_best", s.labels_at_best}, {"final", s.final_value}};
}

}  // namespace

Json to_json(const ComparisonReport& report) {
    Json cells = Json::array();
    for (const auto& cell : report.cells) {
        Json reps = Json::array();
        for (const auto& rep : cell.replicates) {
            Json acc = Json::array();
            Json bal = Json::array();
            for (const auto& s : rep.accuracy) acc.push_back(to_json(s));
            for (const auto& s : rep.balanced_accuracy) bal.push_back(to_json(s));
            Json curve = Json::array();
            for (const auto& pt : rep.result.curve) curve.push_back(to_json(pt));
            reps.push_back(Json{{"seed", rep.seed},
                                {"accuracy", std::move(acc)},
                                {"balanced_accuracy", std::move(bal)},
                                {"curve", std::move(curve)},
                                {"oracle_answers", rep.result.oracle_answers}});
        }
        Json slices = Json::array();
        for (std::size_t j = 0; j < cell.slices.size(); ++j) {
            const auto& a = cell.slices[j];
            slices.push_back(Json{{"slice", report.slice_names.at(j)},
                                  {"best_accuracy", to_json(a.best_accuracy)},
                                  {"labels_at_best", to_json(a.labels_at_best)},
                                  {"final_accuracy", to_json(a.final_accuracy)},
                                  {"best_balanced_accuracy", to_json(a.best_balanced_accuracy)},
                                  {"labels_at_best_balanced", to_json(a.labels_at_best_balanced)},
                                  {"final_balanced_accuracy", to_json(a.final_balanced_accuracy)}});
        }
        cells.push_back(Json{{"label", cell.spec.label},
                             {"representation", cell.spec.representation},
                             {"config", to_json(cell.spec.config)},
                             {"slices", std::move(slices)},
                             {"replicates", std::move(reps)}});
    }
    return Json{{"slice_names", report.slice_names},
                {"train_size", report.train_size},
                {"test_size", report.test_size},
                {"seeds", report.seeds},
                {"cells", std::move(cells)}};
}

}  // namespace aslice
