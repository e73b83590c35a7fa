#include "aslice/query.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "aslice/errors.hpp"
#include "aslice/rng.hpp"

namespace aslice {

std::string_view to_string(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::least_confidence: return "least_confidence";
        case StrategyKind::prediction_entropy: return "prediction_entropy";
        case StrategyKind::breaking_ties: return "breaking_ties";
        case StrategyKind::random: return "random";
        case StrategyKind::embedding_kmeans: return "embedding_kmeans";
        case StrategyKind::lightweight_coreset: return "lightweight_coreset";
        case StrategyKind::discriminative: return "discriminative";
    }
    return "unknown";
}

StrategyKind parse_strategy_kind(std::string_view name) {
    for (auto k : {StrategyKind::least_confidence, StrategyKind::prediction_entropy, StrategyKind::breaking_ties,
                   StrategyKind::random, StrategyKind::embedding_kmeans, StrategyKind::lightweight_coreset,
                   StrategyKind::discriminative})
        if (to_string(k) == name) return k;
    throw ConfigError("unknown query strategy: " + std::string(name));
}

bool is_uncertainty(StrategyKind kind) noexcept {
    return kind == StrategyKind::least_confidence || kind == StrategyKind::prediction_entropy ||
           kind == StrategyKind::breaking_ties;
}

void StrategySpec::validate() const {
    if (kmeans_max_iter == 0) throw ConfigError("kmeans_max_iter must be positive");
    if (dal_rounds == 0) throw ConfigError("dal_rounds must be positive");
    if (dal_epochs == 0) throw ConfigError("dal_epochs must be positive");
}

// ---------------------------------------------------------------------------
// Uncertainty scores

namespace {

void check_distribution(std::span<const double> probs, std::size_t classes, std::size_t min_classes) {
    if (classes < min_classes)
        throw MalformedDistribution("need at least " + std::to_string(min_classes) + " classes, got " +
                                    std::to_string(classes));
    if (probs.size() % classes != 0) throw MalformedDistribution("probability buffer is not a whole number of rows");
    for (std::size_t r = 0; r < probs.size() / classes; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            const double p = probs[r * classes + c];
            if (!(p >= 0.0) || !std::isfinite(p))
                throw MalformedDistribution("row " + std::to_string(r) + " has a negative or non-finite entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw MalformedDistribution("row " + std::to_string(r) + " sums to " + std::to_string(sum));
    }
}

}  // namespace

std::vector<double> score_least_confidence(std::span<const double> probs, std::size_t classes) {
    check_distribution(probs, classes, 1);
    std::vector<double> out(probs.size() / classes);
    for (std::size_t r = 0; r < out.size(); ++r) {
        auto row = probs.subspan(r * classes, classes);
        out[r] = 1.0 - *std::max_element(row.begin(), row.end());
    }
    return out;
}

std::vector<double> score_entropy(std::span<const double> probs, std::size_t classes) {
    check_distribution(probs, classes, 1);
    std::vector<double> out(probs.size() / classes);
    for (std::size_t r = 0; r < out.size(); ++r) {
        double h = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            const double p = probs[r * classes + c];
            if (p > 0.0) h -= p * std::log(p);
        }
        out[r] = h;
    }
    return out;
}

std::vector<double> score_breaking_ties(std::span<const double> probs, std::size_t classes) {
    check_distribution(probs, classes, 2);
    std::vector<double> out(probs.size() / classes);
    for (std::size_t r = 0; r < out.size(); ++r) {
        double first = -1.0;
        double second = -1.0;
        for (std::size_t c = 0; c < classes; ++c) {
            const double p = probs[r * classes + c];
            if (p > first) {
                second = first;
                first = p;
            } else if (p > second) {
                second = p;
            }
        }
        out[r] = 1.0 - (first - second);
    }
    return out;
}

std::vector<double> binary_distribution(std::span<const double> p) {
    std::vector<double> out(2 * p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        out[2 * i] = 1.0 - p[i];
        out[2 * i + 1] = p[i];
    }
    return out;
}

std::vector<double> uncertainty_scores(StrategyKind kind, const ProbMatrix& membership) {
    if (!is_uncertainty(kind)) throw ConfigError("not an uncertainty strategy: " + std::string(to_string(kind)));
    std::vector<double> total(membership.rows, 0.0);
    if (membership.cols == 0) return total;
    std::vector<double> column(membership.rows);
    for (std::size_t j = 0; j < membership.cols; ++j) {
        for (std::size_t r = 0; r < membership.rows; ++r) column[r] = membership.at(r, j);
        const auto dist = binary_distribution(column);
        std::vector<double> s;
        switch (kind) {
            case StrategyKind::least_confidence: s = score_least_confidence(dist, 2); break;
            case StrategyKind::prediction_entropy: s = score_entropy(dist, 2); break;
            default: s = score_breaking_ties(dist, 2); break;
        }
        for (std::size_t r = 0; r < membership.rows; ++r) total[r] += s[r];
    }
    if (membership.cols > 1)
        for (auto& t : total) t /= static_cast<double>(membership.cols);
    return total;
}

// ---------------------------------------------------------------------------
// Selectors

QueryBatch select_top_b(std::span<const double> scores, std::size_t b) {
    if (scores.empty()) throw ConfigError("cannot select from an empty pool");
    if (b == 0) throw ConfigError("batch size must be at least 1");
    b = std::min(b, scores.size());
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(b), idx.end(),
                      [&](std::size_t a, std::size_t c) { return scores[a] > scores[c] || (scores[a] == scores[c] && a < c); });
    QueryBatch out;
    out.indices.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(b));
    for (auto i : out.indices) out.scores.push_back(scores[i]);
    return out;
}

QueryBatch select_random(std::size_t pool_size, std::size_t b, std::uint64_t seed) {
    if (pool_size == 0) throw ConfigError("cannot select from an empty pool");
    if (b == 0) throw ConfigError("batch size must be at least 1");
    b = std::min(b, pool_size);
    std::vector<std::size_t> idx(pool_size);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.partial_shuffle(std::span<std::size_t>(idx), b);
    idx.resize(b);
    return QueryBatch{std::move(idx), {}};
}

namespace {

double sqnorm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

}  // namespace

QueryBatch select_kmeans(const FeatureMatrix& X, std::span<const std::size_t> pool, std::size_t b,
                         const StrategySpec& opts, std::uint64_t seed) {
    const std::size_t m = pool.size();
    if (b == 0) throw ConfigError("batch size must be at least 1");
    if (m < b)
        throw ConfigError("k-means needs a pool of at least b=" + std::to_string(b) + " points, got " + std::to_string(m));
    if (b == m) {
        QueryBatch all;
        all.indices.resize(m);
        std::iota(all.indices.begin(), all.indices.end(), 0);
        return all;
    }
    const std::size_t d = X.cols();
    std::vector<double> centers(b * d, 0.0);
    std::vector<double> center_sq(b, 0.0);
    auto center = [&](std::size_t c) { return std::span<double>(centers.data() + c * d, d); };
    auto set_center_to_point = [&](std::size_t c, std::size_t i) {
        X.copy_row(pool[i], center(c));
        center_sq[c] = sqnorm(center(c));
    };
    auto dist = [&](std::size_t i, std::size_t c) { return X.squared_distance(pool[i], center(c), center_sq[c]); };

    // k-means++ seeding.
    Rng rng(seed);
    std::vector<char> chosen(m, 0);
    std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < b; ++c) {
        std::size_t pick = 0;
        if (c == 0) {
            pick = static_cast<std::size_t>(rng.below(m));
        } else {
            double total = 0.0;
            for (std::size_t i = 0; i < m; ++i) total += nearest[i];
            if (total > 0.0) {
                const double u = rng.uniform() * total;
                double cum = 0.0;
                pick = m;
                for (std::size_t i = 0; i < m; ++i) {
                    if (nearest[i] <= 0.0) continue;
                    cum += nearest[i];
                    pick = i;
                    if (cum > u) break;
                }
            } else {
                pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
            }
        }
        chosen[pick] = 1;
        set_center_to_point(c, pick);
        for (std::size_t i = 0; i < m; ++i) nearest[i] = std::min(nearest[i], dist(i, c));
    }

    std::vector<std::size_t> assign(m, 0);
    std::vector<std::size_t> previous;
    std::vector<double> best(m);
    std::vector<std::size_t> counts(b);
    for (std::size_t iter = 0; iter < opts.kmeans_max_iter; ++iter) {
        for (std::size_t i = 0; i < m; ++i) {
            std::size_t arg = 0;
            double bd = dist(i, 0);
            for (std::size_t c = 1; c < b; ++c) {
                const double dc = dist(i, c);
                if (dc < bd) {
                    bd = dc;
                    arg = c;
                }
            }
            assign[i] = arg;
            best[i] = bd;
        }
        if (assign == previous) break;

        std::fill(counts.begin(), counts.end(), 0);
        for (auto a : assign) ++counts[a];
        // Re-seed each empty cluster at the point farthest from its nearest centroid.
        // Moved points are marked so a donor cluster emptied here is refilled next pass.
        for (bool again = true; again;) {
            again = false;
            for (std::size_t c = 0; c < b; ++c) {
                if (counts[c] != 0) continue;
                std::size_t far = 0;
                for (std::size_t i = 1; i < m; ++i)
                    if (best[i] > best[far]) far = i;
                if (--counts[assign[far]] == 0) again = true;
                assign[far] = c;
                counts[c] = 1;
                best[far] = -1.0;
            }
        }

        std::fill(centers.begin(), centers.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i) X.axpy(pool[i], 1.0, center(assign[i]));
        for (std::size_t c = 0; c < b; ++c) {
            for (auto& v : center(c)) v /= static_cast<double>(counts[c]);
            center_sq[c] = sqnorm(center(c));
        }
        previous = assign;
    }

    QueryBatch out;
    std::fill(chosen.begin(), chosen.end(), 0);
    for (std::size_t c = 0; c < b; ++c) {
        std::size_t arg = m;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m; ++i) {
            if (chosen[i]) continue;
            const double dc = dist(i, c);
            if (dc < bd) {
                bd = dc;
                arg = i;
            }
        }
        chosen[arg] = 1;
        out.indices.push_back(arg);
    }
    return out;
}

std::vector<double> coreset_probabilities(const FeatureMatrix& X, std::span<const std::size_t> pool) {
    const std::size_t m = pool.size();
    if (m == 0) throw ConfigError("cannot build coreset probabilities for an empty pool");
    std::vector<double> mean(X.cols(), 0.0);
    for (auto r : pool) X.axpy(r, 1.0 / static_cast<double>(m), mean);
    const double mean_sq = sqnorm(mean);
    std::vector<double> q(m);
    double mass = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        q[i] = X.squared_distance(pool[i], mean, mean_sq);
        mass += q[i];
    }
    const double uniform = 1.0 / static_cast<double>(m);
    for (auto& v : q) v = 0.5 * uniform + (mass > 0.0 ? 0.5 * v / mass : 0.5 * uniform);
    return q;
}

QueryBatch select_lightweight_coreset(const FeatureMatrix& X, std::span<const std::size_t> pool, std::size_t b,
                                      std::uint64_t seed) {
    const std::size_t m = pool.size();
    if (b == 0) throw ConfigError("batch size must be at least 1");
    if (m < b)
        throw ConfigError("coreset needs a pool of at least b=" + std::to_string(b) + " points, got " + std::to_string(m));
    auto q = coreset_probabilities(X, pool);
    const auto original = q;
    Rng rng(seed);
    QueryBatch out;
    double remaining = 1.0;
    for (std::size_t s = 0; s < b; ++s) {
        // Sequential draws proportional to q over the not-yet-selected points.
        remaining = 0.0;
        for (double v : q) remaining += v;
        const double u = rng.uniform() * remaining;
        double cum = 0.0;
        std::size_t pick = m;
        for (std::size_t i = 0; i < m; ++i) {
            if (q[i] <= 0.0) continue;
            cum += q[i];
            pick = i;
            if (cum > u) break;
        }
        out.indices.push_back(pick);
        out.scores.push_back(original[pick]);
        q[pick] = 0.0;
    }
    return out;
}

QueryBatch select_discriminative(const FeatureMatrix& X, std::span<const std::size_t> labeled,
                                 std::span<const std::size_t> pool, std::size_t b, const StrategySpec& opts,
                                 std::uint64_t seed) {
    if (labeled.empty()) throw ConfigError("discriminative active learning needs a non-empty labeled set");
    if (pool.empty()) throw ConfigError("cannot select from an empty pool");
    if (b == 0) throw ConfigError("batch size must be at least 1");
    opts.validate();
    b = std::min(b, pool.size());
    const std::size_t rounds = std::min(b, opts.dal_rounds);

    TrainConfig cfg = TrainConfig::svm_defaults();
    cfg.epochs = opts.dal_epochs;
    cfg.class_weight = ClassWeight::balanced;

    std::vector<std::size_t> remaining(pool.size());  // positions into pool
    std::iota(remaining.begin(), remaining.end(), 0);
    std::vector<std::size_t> rows(labeled.begin(), labeled.end());
    const std::size_t labeled_count = rows.size();
    std::vector<std::uint8_t> labels;
    QueryBatch out;
    for (std::size_t r = 0; r < rounds; ++r) {
        const std::size_t take = b / rounds + (r < b % rounds ? 1 : 0);
        rows.resize(labeled_count);
        for (auto pos : out.indices) rows.push_back(pool[pos]);
        const std::size_t class0 = rows.size();
        for (auto pos : remaining) rows.push_back(pool[pos]);
        labels.assign(rows.size(), 1);
        std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(class0), 0);

        cfg.seed = derive_seed(seed, {r});
        const LinearModel clf = train_linear_svm(TrainingView{X, rows, labels}, cfg);
        std::vector<double> p_unlabeled(remaining.size());
        for (std::size_t i = 0; i < remaining.size(); ++i)
            p_unlabeled[i] = sigmoid(clf.alpha * clf.margin(X, pool[remaining[i]]));
        const auto sub = select_top_b(p_unlabeled, take);
        std::vector<char> taken(remaining.size(), 0);
        for (std::size_t s = 0; s < sub.indices.size(); ++s) {
            out.indices.push_back(remaining[sub.indices[s]]);
            out.scores.push_back(sub.scores[s]);
            taken[sub.indices[s]] = 1;
        }
        std::vector<std::size_t> next;
        for (std::size_t i = 0; i < remaining.size(); ++i)
            if (!taken[i]) next.push_back(remaining[i]);
        remaining.swap(next);
        if (remaining.empty()) break;
    }
    return out;
}

QueryBatch select_batch(const StrategySpec& spec, const QueryContext& ctx) {
    spec.validate();
    if (ctx.pool.empty()) throw ConfigError("cannot select from an empty pool");
    const std::size_t b = std::min(ctx.b, ctx.pool.size());
    switch (spec.kind) {
        case StrategyKind::least_confidence:
        case StrategyKind::prediction_entropy:
        case StrategyKind::breaking_ties: {
            if (!ctx.membership || ctx.membership->rows != ctx.pool.size())
                throw ConfigError("uncertainty strategies need membership probabilities for every pool row");
            return select_top_b(uncertainty_scores(spec.kind, *ctx.membership), b);
        }
        case StrategyKind::random: return select_random(ctx.pool.size(), b, ctx.seed);
        case StrategyKind::embedding_kmeans: return select_kmeans(ctx.X, ctx.pool, b, spec, ctx.seed);
        case StrategyKind::lightweight_coreset: return select_lightweight_coreset(ctx.X, ctx.pool, b, ctx.seed);
        case StrategyKind::discriminative:
            return select_discriminative(ctx.X, ctx.labeled, ctx.pool, b, spec, ctx.seed);
    }
    throw ConfigError("unhandled strategy");
}

}  // namespace aslice
