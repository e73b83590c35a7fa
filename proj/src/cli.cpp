#include "aslice/cli.hpp"

#include <csignal>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "aslice/annotation.hpp"
#include "aslice/errors.hpp"
#include "aslice/experiment.hpp"
#include "file_util.hpp"

namespace aslice {

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonFlags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
};

ExperimentConfig load_with_overrides(const CommonFlags& f) {
    if (f.config.empty()) throw UsageError("--config is required");
    ExperimentConfig cfg = load_experiment(f.config);
    if (!f.out.empty()) cfg.out = f.out;
    if (f.seed) cfg.seeds = {*f.seed};
    if (cfg.dataset_path && !std::filesystem::exists(*cfg.dataset_path))
        throw ConfigError("dataset path does not exist: " + cfg.dataset_path->string());
    return cfg;
}

void print_warnings(const PreparedData& data, std::ostream& err) {
    for (const auto& w : data.warnings) err << "warning: " << w << '\n';
}

// The run id hashes everything that determines the run's output.
std::string run_id(const ExperimentConfig& cfg, const ComparisonSpec& spec, std::uint64_t seed) {
    ExperimentConfig one = cfg;
    one.runs = {spec};
    one.seeds = {seed};
    Json j = to_json(one);
    j.erase("out");
    return fnv1a_hex(j.dump());
}

int cmd_generate(const CommonFlags& f, const SynthConfig& flags_cfg, const std::vector<std::string>& set_flags,
                 const std::string& layout, std::ostream& out) {
    if (f.out.empty()) throw UsageError("--out is required");
    SynthConfig cfg = flags_cfg;
    if (!f.config.empty()) {
        // Synthetic config file; any explicitly given flag wins.
        Json j;
        try {
            j = Json::parse(detail::read_file(f.config));
        } catch (const Json::parse_error& e) {
            throw ConfigError("config is not valid JSON: " + std::string(e.what()));
        } catch (const DataError&) {
            throw ConfigError("cannot read config file: " + f.config);
        }
        if (j.contains("dataset") && j["dataset"].contains("synthetic")) j = j["dataset"]["synthetic"];
        cfg = synth_from_json(j, "synthetic");
        if (!set_flags.empty()) throw UsageError("shape flags cannot be combined with --config");
    }
    if (f.seed) cfg.seed = *f.seed;
    cfg.validate();
    Dataset ds = generate_synthetic(cfg);
    const Layout want = layout == "sparse" ? Layout::sparse : Layout::dense;
    if (want == Layout::sparse) ds = ds.with_features(ds.features().to_sparse());
    const auto manifest = save_dataset(ds, f.out);
    out << manifest.generic_string() << '\n';
    return kOk;
}

int cmd_run(const CommonFlags& f, std::ostream& out, std::ostream& err) {
    const ExperimentConfig cfg = load_with_overrides(f);
    const PreparedData data = prepare_data(cfg);
    print_warnings(data, err);
    if (!data.train.has_ground_truth()) throw DataError("simulated runs need ground-truth slice vectors for every record");
    for (const auto& spec : cfg.runs) {
        for (auto seed : cfg.seeds) {
            DiscoveryConfig dc = spec.config;
            dc.seed = seed;
            SimulatedOracle oracle = simulated_oracle(data.train);
            const RunResult result = run_discovery(data.train, data.test, dc, oracle);

            ExperimentConfig one = cfg;
            one.runs = {spec};
            one.seeds = {seed};
            const auto dir = cfg.out / run_id(cfg, spec, seed);
            std::filesystem::create_directories(dir);
            detail::write_file(dir / "config.json", to_json(one).dump(2) + "\n");
            detail::write_file(dir / "result.json", to_json(result).dump(2) + "\n");
            detail::write_file(dir / "curve.csv", curve_csv(result));
            save_model(result.model, dir / "model.aslm");
            out << dir.generic_string() << '\n';
        }
    }
    return kOk;
}

std::string comparison_csv(const ComparisonReport& report) {
    std::string csv = "label,representation,seed,round,labels_used,slice,accuracy,balanced_accuracy\n";
    for (const auto& cell : report.cells) {
        for (const auto& rep : cell.replicates) {
            for (const auto& pt : rep.result.curve) {
                for (std::size_t j = 0; j < pt.accuracy.size(); ++j) {
                    csv += csv_field(cell.spec.label) + ',' + csv_field(cell.spec.representation) + ',' +
                           std::to_string(rep.seed) + ',' + std::to_string(pt.round) + ',' +
                           std::to_string(pt.labels_used) + ',' + csv_field(report.slice_names.at(j)) + ',' +
                           Json(pt.accuracy[j]).dump() + ',' + Json(pt.balanced_accuracy[j]).dump() + '\n';
                }
            }
        }
    }
    return csv;
}

int cmd_compare(const CommonFlags& f, std::ostream& out, std::ostream& err) {
    if (f.jobs == 0) throw UsageError("--jobs must be at least 1");
    const ExperimentConfig cfg = load_with_overrides(f);
    const PreparedData data = prepare_data(cfg);
    print_warnings(data, err);
    const ComparisonReport report = compare_strategies(data.train, data.test, cfg.runs, cfg.seeds, f.jobs);

    Json key = to_json(cfg);
    key.erase("out");
    const auto dir = cfg.out / ("compare-" + fnv1a_hex(key.dump()));
    std::filesystem::create_directories(dir);
    detail::write_file(dir / "config.json", to_json(cfg).dump(2) + "\n");
    detail::write_file(dir / "report.json", to_json(report).dump(2) + "\n");
    detail::write_file(dir / "report.md", report_markdown(report));
    detail::write_file(dir / "curves.csv", comparison_csv(report));
    out << dir.generic_string() << '\n';
    return kOk;
}

int cmd_serve(const CommonFlags& f, const std::string& host, int port, const std::string& sessions,
              const std::string& static_dir, std::ostream& out, std::ostream& err) {
    const ExperimentConfig cfg = load_with_overrides(f);
    std::optional<std::filesystem::path> assets;
    if (!static_dir.empty()) {
        if (!std::filesystem::is_directory(static_dir)) throw ConfigError("--static is not a directory: " + static_dir);
        assets = static_dir;
    }
    const std::filesystem::path dir = sessions.empty() ? cfg.out / "sessions" : std::filesystem::path(sessions);

    // Block the shutdown signals before any server thread exists so only the
    // waiter below receives them.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    AnnotationService service(cfg, dir);
    HttpFrontend frontend(service, assets);
    if (!frontend.bind(host, port)) {
        err << "error: cannot bind " << host << ':' << port << '\n';
        return kRuntime;
    }
    out << "listening on http://" << host << ':' << frontend.port() << " (sessions in " << dir.generic_string()
        << ")" << std::endl;

    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        frontend.stop();
    });
    frontend.run();
    // run() only returns after stop(), which only the waiter calls.
    waiter.join();
    out << "shut down; " << service.session_ids().size() << " session(s) persisted" << std::endl;
    return kOk;
}

}  // namespace

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Active slice discovery"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    CommonFlags flags;
    std::uint64_t seed = 0;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config, "Experiment config (JSON)");
        sub->add_option("--out", flags.out, "Output directory");
        sub->add_option("--seed", seed, "Seed (overrides the config)");
    };

    auto* gen = app.add_subcommand("generate", "Write a synthetic SLFX dataset");
    add_common(gen);
    SynthConfig synth;
    std::size_t k = 1;
    double prevalence = 0.2;
    double separation = 6.0;
    double noise = 0.0;
    std::string layout = "dense";
    std::vector<CLI::Option*> shape = {
        gen->add_option("--n", synth.n, "Examples")->check(CLI::PositiveNumber),
        gen->add_option("--d", synth.d, "Feature dimension")->check(CLI::PositiveNumber),
        gen->add_option("--k", k, "Slices")->check(CLI::PositiveNumber),
        gen->add_option("--prevalence", prevalence, "Slice prevalence"),
        gen->add_option("--separation", separation, "Centre distance in background std-devs"),
        gen->add_option("--noise", noise, "Membership flip rate"),
    };
    synth.d = 32;
    gen->add_option("--layout", layout, "Feature storage")->check(CLI::IsMember({"dense", "sparse"}));

    auto* run = app.add_subcommand("run", "Run active slice discovery with a simulated oracle");
    add_common(run);

    auto* cmp = app.add_subcommand("compare", "Compare strategies over seeds");
    add_common(cmp);
    cmp->add_option("--jobs", flags.jobs, "Parallel runs");

    auto* srv = app.add_subcommand("serve", "Serve the annotation API");
    add_common(srv);
    std::string host = "127.0.0.1";
    int port = 8787;
    std::string sessions;
    std::string static_dir;
    srv->add_option("--host", host, "Bind address");
    srv->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
    srv->add_option("--sessions", sessions, "Session log directory (default <out>/sessions)");
    srv->add_option("--static", static_dir, "Static files served under /");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    auto any_seed = [&](CLI::App* sub) {
        if (sub->count("--seed")) flags.seed = seed;
    };

    try {
        if (*gen) {
            any_seed(gen);
            std::vector<std::string> given;
            for (auto* o : shape)
                if (o->count()) given.push_back(o->get_name());
            if (flags.config.empty()) synth = SynthConfig::separated(synth.n, synth.d, k, prevalence, separation, noise, seed);
            return cmd_generate(flags, synth, given, layout, out);
        }
        if (*run) {
            any_seed(run);
            return cmd_run(flags, out, err);
        }
        if (*cmp) {
            any_seed(cmp);
            return cmd_compare(flags, out, err);
        }
        any_seed(srv);
        return cmd_serve(flags, host, port, sessions, static_dir, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntime;
    }
}

int cli_main(int argc, char** argv) { return cli_main(argc, argv, std::cout, std::cerr); }

}  // namespace aslice
