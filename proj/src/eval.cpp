#include "aslice/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

#include "aslice/errors.hpp"

namespace aslice {

double slice_accuracy(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
    if (pred.size() != truth.size()) throw DimensionMismatch("prediction and truth differ in length");
    if (pred.empty()) throw ConfigError("accuracy of an empty set is undefined");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += (pred[i] == truth[i]) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double balanced_accuracy(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
    if (pred.size() != truth.size()) throw DimensionMismatch("prediction and truth differ in length");
    if (pred.empty()) throw ConfigError("accuracy of an empty set is undefined");
    std::size_t tp = 0, pos = 0, tn = 0, neg = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (truth[i]) {
            ++pos;
            tp += pred[i] ? 1 : 0;
        } else {
            ++neg;
            tn += pred[i] ? 0 : 1;
        }
    }
    if (pos == 0) return static_cast<double>(tn) / static_cast<double>(neg);
    if (neg == 0) return static_cast<double>(tp) / static_cast<double>(pos);
    return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) + static_cast<double>(tn) / static_cast<double>(neg));
}

std::optional<std::size_t> labels_to_reach(std::span<const CurveSample> curve, double target) {
    std::optional<std::size_t> best;
    for (const auto& s : curve)
        if (s.accuracy >= target && (!best || s.labels < *best)) best = s.labels;
    return best;
}

std::vector<CurveSample> curve_samples(const LearningCurve& curve, std::size_t slice, CurveMetric metric) {
    std::vector<CurveSample> out;
    out.reserve(curve.size());
    for (const auto& pt : curve)
        out.push_back({pt.labels_used, metric == CurveMetric::accuracy ? pt.accuracy.at(slice) : pt.balanced_accuracy.at(slice)});
    return out;
}

Summary summarize(std::span<const CurveSample> curve) {
    if (curve.empty()) throw ConfigError("cannot summarize an empty curve");
    Summary s{curve.front().accuracy, curve.front().labels, curve.back().accuracy};
    for (const auto& c : curve) {
        if (c.accuracy > s.best || (c.accuracy == s.best && c.labels < s.labels_at_best)) {
            s.best = c.accuracy;
            s.labels_at_best = c.labels;
        }
    }
    return s;
}

Spread spread_of(std::vector<double> values) {
    if (values.empty()) return {};
    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    return {quantile(0.5), quantile(0.25), quantile(0.75)};
}

ComparisonReport compare_strategies(const Dataset& train, const Dataset& test, std::span<const ComparisonSpec> specs,
                                    std::span<const std::uint64_t> seeds, std::size_t jobs) {
    if (specs.empty()) throw ConfigError("compare needs at least one strategy configuration");
    if (seeds.empty()) throw ConfigError("compare needs at least one seed");
    for (const auto& s : specs) s.config.validate();

    const std::size_t total = specs.size() * seeds.size();
    std::vector<RunResult> results(total);
    std::vector<std::exception_ptr> errors(total);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t = next++; t < total; t = next++) {
            try {
                DiscoveryConfig cfg = specs[t / seeds.size()].config;
                cfg.seed = seeds[t % seeds.size()];
                auto oracle = simulated_oracle(train);
                results[t] = run_discovery(train, test, cfg, oracle);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        }
    };
    jobs = std::clamp<std::size_t>(jobs, 1, total);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }
    for (std::size_t t = 0; t < total; ++t) {
        if (!errors[t]) continue;
        const auto& spec = specs[t / seeds.size()];
        try {
            std::rethrow_exception(errors[t]);
        } catch (const std::exception& e) {
            throw Error("run '" + spec.label + "' seed " + std::to_string(seeds[t % seeds.size()]) + " failed: " + e.what());
        }
    }

    ComparisonReport report;
    report.slice_names = train.slice_names();
    report.train_size = train.size();
    report.test_size = test.size();
    report.seeds.assign(seeds.begin(), seeds.end());
    const std::size_t k = train.k();
    for (std::size_t c = 0; c < specs.size(); ++c) {
        ReportCell cell;
        cell.spec = specs[c];
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            Replicate rep;
            rep.seed = seeds[s];
            rep.result = std::move(results[c * seeds.size() + s]);
            for (std::size_t j = 0; j < k; ++j) {
                rep.accuracy.push_back(summarize(curve_samples(rep.result.curve, j, CurveMetric::accuracy)));
                rep.balanced_accuracy.push_back(
                    summarize(curve_samples(rep.result.curve, j, CurveMetric::balanced_accuracy)));
            }
            cell.replicates.push_back(std::move(rep));
        }
        for (std::size_t j = 0; j < k; ++j) {
            auto collect = [&](auto pick) {
                std::vector<double> v;
                for (const auto& r : cell.replicates) v.push_back(pick(r));
                return spread_of(std::move(v));
            };
            SliceAggregate agg;
            agg.best_accuracy = collect([&](const Replicate& r) { return r.accuracy[j].best; });
            agg.labels_at_best = collect([&](const Replicate& r) { return static_cast<double>(r.accuracy[j].labels_at_best); });
            agg.final_accuracy = collect([&](const Replicate& r) { return r.accuracy[j].final_value; });
            agg.best_balanced_accuracy = collect([&](const Replicate& r) { return r.balanced_accuracy[j].best; });
            agg.labels_at_best_balanced =
                collect([&](const Replicate& r) { return static_cast<double>(r.balanced_accuracy[j].labels_at_best); });
            agg.final_balanced_accuracy = collect([&](const Replicate& r) { return r.balanced_accuracy[j].final_value; });
            cell.slices.push_back(agg);
        }
        report.cells.push_back(std::move(cell));
    }
    return report;
}

namespace {

std::string with_thousands(double value) {
    const double rounded = std::round(value * 2.0) / 2.0;  // medians of counts land on halves
    const auto whole = static_cast<long long>(std::floor(rounded));
    std::string digits = std::to_string(whole);
    std::string out;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
        out += digits[i];
    }
    if (rounded != static_cast<double>(whole)) out += ".5";
    return out;
}

std::string escape_cell(std::string s) {
    std::string out;
    for (char c : s) {
        if (c == '|') out += '\\';
        out += c;
    }
    return out;
}

}  // namespace

std::string report_markdown(const ComparisonReport& report) {
    std::string out = "| Setup | Slice Classifier | Best Accuracy | Labeled Examples |\n";
    out += "|---|---|---|---|\n";
    const std::string pool = with_thousands(static_cast<double>(report.train_size));
    for (const auto& cell : report.cells) {
        for (std::size_t j = 0; j < cell.slices.size(); ++j) {
            std::string setup = cell.spec.representation.empty() ? "default" : cell.spec.representation;
            if (cell.slices.size() > 1) setup += " / " + report.slice_names.at(j);
            const char* clf = cell.spec.config.classifier.kind == ClassifierKind::svm ? "SVM" : "Neural Network";
            const std::string classifier = std::string(clf) + " (AL, " + cell.spec.label + ")";
            char acc[32];
            std::snprintf(acc, sizeof acc, "%.1f%%", 100.0 * cell.slices[j].best_accuracy.median);
            out += "| " + escape_cell(setup) + " | " + escape_cell(classifier) + " | " + acc + " | " +
                   with_thousands(cell.slices[j].labels_at_best.median) + " (out of " + pool + ") |\n";
        }
    }
    return out;
}

}  // namespace aslice
