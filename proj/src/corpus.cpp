#include "aslice/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "aslice/errors.hpp"
#include "aslice/rng.hpp"
#include "binary_io.hpp"
#include "file_util.hpp"
#include "json.hpp"

namespace aslice {

using nlohmann::json;

namespace detail {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write: " + path.string());
}

}  // namespace detail

std::string_view to_string(Layout layout) { return layout == Layout::dense ? "dense" : "sparse"; }

// ---------------------------------------------------------------------------
// FeatureMatrix

FeatureMatrix FeatureMatrix::dense(std::size_t rows, std::size_t cols, std::vector<float> values) {
    if (values.size() != rows * cols)
        throw DataError("dense matrix expects " + std::to_string(rows * cols) + " values, got " +
                        std::to_string(values.size()));
    FeatureMatrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.layout_ = Layout::dense;
    m.values_ = std::move(values);
    m.validate();
    return m;
}

FeatureMatrix FeatureMatrix::sparse(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_offsets,
                                    std::vector<std::uint32_t> indices, std::vector<float> values) {
    if (row_offsets.size() != rows + 1) throw DataError("sparse matrix needs rows + 1 offsets");
    if (indices.size() != values.size()) throw DataError("sparse matrix index/value length mismatch");
    FeatureMatrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.layout_ = Layout::sparse;
    m.offsets_ = std::move(row_offsets);
    m.indices_ = std::move(indices);
    m.values_ = std::move(values);
    m.validate();
    return m;
}

void FeatureMatrix::validate() const {
    for (float v : values_)
        if (!std::isfinite(v)) throw DataError("non-finite feature value");
    if (layout_ == Layout::dense) return;
    if (offsets_.front() != 0 || offsets_.back() != indices_.size()) throw DataError("sparse offsets do not span payload");
    for (std::size_t r = 0; r < rows_; ++r) {
        if (offsets_[r] > offsets_[r + 1]) throw DataError("sparse offsets decrease at row " + std::to_string(r));
        for (std::size_t p = offsets_[r]; p < offsets_[r + 1]; ++p) {
            if (indices_[p] >= cols_)
                throw DataError("sparse index " + std::to_string(indices_[p]) + " out of range in row " +
                                std::to_string(r));
            if (p > offsets_[r] && indices_[p] <= indices_[p - 1])
                throw DataError("sparse indices not strictly increasing in row " + std::to_string(r));
        }
    }
}

std::span<const float> FeatureMatrix::dense_row(std::size_t row) const {
    return std::span<const float>(values_).subspan(row * cols_, cols_);
}

FeatureMatrix::SparseRow FeatureMatrix::sparse_row(std::size_t row) const {
    const std::size_t b = offsets_[row];
    const std::size_t e = offsets_[row + 1];
    return {std::span<const std::uint32_t>(indices_).subspan(b, e - b), std::span<const float>(values_).subspan(b, e - b)};
}

double FeatureMatrix::dot(std::size_t row, std::span<const double> w) const {
    double acc = 0.0;
    if (layout_ == Layout::dense) {
        const float* x = values_.data() + row * cols_;
        for (std::size_t j = 0; j < cols_; ++j) acc += static_cast<double>(x[j]) * w[j];
    } else {
        for (std::size_t p = offsets_[row]; p < offsets_[row + 1]; ++p)
            acc += static_cast<double>(values_[p]) * w[indices_[p]];
    }
    return acc;
}

void FeatureMatrix::axpy(std::size_t row, double scale, std::span<double> out) const {
    if (layout_ == Layout::dense) {
        const float* x = values_.data() + row * cols_;
        for (std::size_t j = 0; j < cols_; ++j) out[j] += scale * static_cast<double>(x[j]);
    } else {
        for (std::size_t p = offsets_[row]; p < offsets_[row + 1]; ++p)
            out[indices_[p]] += scale * static_cast<double>(values_[p]);
    }
}

double FeatureMatrix::squared_norm(std::size_t row) const {
    double acc = 0.0;
    if (layout_ == Layout::dense) {
        const float* x = values_.data() + row * cols_;
        for (std::size_t j = 0; j < cols_; ++j) acc += static_cast<double>(x[j]) * x[j];
    } else {
        for (std::size_t p = offsets_[row]; p < offsets_[row + 1]; ++p)
            acc += static_cast<double>(values_[p]) * values_[p];
    }
    return acc;
}

double FeatureMatrix::squared_distance(std::size_t row, std::span<const double> point, double point_sqnorm) const {
    if (layout_ == Layout::dense) {
        const float* x = values_.data() + row * cols_;
        double acc = 0.0;
        for (std::size_t j = 0; j < cols_; ++j) {
            const double diff = static_cast<double>(x[j]) - point[j];
            acc += diff * diff;
        }
        return acc;
    }
    // ||x||^2 - 2 x.c + ||c||^2 touches only the row's nonzeros.
    double xx = 0.0;
    double xc = 0.0;
    for (std::size_t p = offsets_[row]; p < offsets_[row + 1]; ++p) {
        const double v = values_[p];
        xx += v * v;
        xc += v * point[indices_[p]];
    }
    return std::max(0.0, xx - 2.0 * xc + point_sqnorm);
}

void FeatureMatrix::copy_row(std::size_t row, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    axpy(row, 1.0, out);
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
    if (layout_ == Layout::dense) {
        std::vector<float> vals;
        vals.reserve(rows.size() * cols_);
        for (std::size_t r : rows) {
            auto src = dense_row(r);
            vals.insert(vals.end(), src.begin(), src.end());
        }
        return dense(rows.size(), cols_, std::move(vals));
    }
    std::vector<std::size_t> offsets{0};
    std::vector<std::uint32_t> idx;
    std::vector<float> vals;
    for (std::size_t r : rows) {
        auto sr = sparse_row(r);
        idx.insert(idx.end(), sr.indices.begin(), sr.indices.end());
        vals.insert(vals.end(), sr.values.begin(), sr.values.end());
        offsets.push_back(idx.size());
    }
    return sparse(rows.size(), cols_, std::move(offsets), std::move(idx), std::move(vals));
}

FeatureMatrix FeatureMatrix::to_dense() const {
    if (layout_ == Layout::dense) return *this;
    std::vector<float> vals(rows_ * cols_, 0.0f);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t p = offsets_[r]; p < offsets_[r + 1]; ++p) vals[r * cols_ + indices_[p]] = values_[p];
    return dense(rows_, cols_, std::move(vals));
}

FeatureMatrix FeatureMatrix::to_sparse() const {
    if (layout_ == Layout::sparse) return *this;
    std::vector<std::size_t> offsets{0};
    std::vector<std::uint32_t> idx;
    std::vector<float> vals;
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t j = 0; j < cols_; ++j) {
            const float v = values_[r * cols_ + j];
            if (v != 0.0f) {
                idx.push_back(static_cast<std::uint32_t>(j));
                vals.push_back(v);
            }
        }
        offsets.push_back(idx.size());
    }
    return sparse(rows_, cols_, std::move(offsets), std::move(idx), std::move(vals));
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(FeatureMatrix features, std::vector<ExampleRecord> records, std::vector<std::string> slice_names,
                 std::string provenance)
    : features_(std::move(features)),
      records_(std::move(records)),
      slice_names_(std::move(slice_names)),
      provenance_(std::move(provenance)) {
    if (records_.size() != features_.rows())
        throw DataError("dataset has " + std::to_string(records_.size()) + " records but " +
                        std::to_string(features_.rows()) + " feature rows");
    index_.reserve(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& rec = records_[i];
        if (!index_.emplace(rec.id, i).second) throw DataError("duplicate example id: " + rec.id);
        if (rec.s) {
            if (rec.s->size() != slice_names_.size())
                throw DataError("record " + rec.id + " has " + std::to_string(rec.s->size()) + " slice bits, expected " +
                                std::to_string(slice_names_.size()));
            for (auto bit : *rec.s)
                if (bit > 1) throw DataError("record " + rec.id + " has a non-binary slice value");
        }
    }
}

std::optional<std::size_t> Dataset::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

bool Dataset::has_ground_truth() const {
    return std::all_of(records_.begin(), records_.end(), [](const ExampleRecord& r) { return r.s.has_value(); });
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    std::vector<ExampleRecord> recs;
    recs.reserve(rows.size());
    for (std::size_t r : rows) recs.push_back(records_.at(r));
    return Dataset(features_.select_rows(rows), std::move(recs), slice_names_, provenance_);
}

Dataset Dataset::with_features(FeatureMatrix features) const {
    return Dataset(std::move(features), records_, slice_names_, provenance_);
}

// ---------------------------------------------------------------------------
// SLFX I/O

namespace {

json record_to_json(const ExampleRecord& rec) {
    json j;
    j["id"] = rec.id;
    j["y"] = rec.y;
    if (rec.s) {
        json s = json::array();
        for (auto bit : *rec.s) s.push_back(static_cast<int>(bit));
        j["s"] = std::move(s);
    }
    if (rec.text) j["text"] = *rec.text;
    if (rec.correct) j["correct"] = *rec.correct;
    return j;
}

ExampleRecord record_from_json(const json& j, std::size_t line) {
    const auto where = " (records line " + std::to_string(line) + ")";
    if (!j.is_object()) throw DataError("record is not a JSON object" + where);
    ExampleRecord rec;
    if (!j.contains("id")) throw DataError("record missing id" + where);
    const auto& id = j.at("id");
    rec.id = id.is_string() ? id.get<std::string>() : id.dump();
    if (!j.contains("y") || !j.at("y").is_number_integer()) throw DataError("record missing integer y" + where);
    rec.y = j.at("y").get<std::int64_t>();
    if (j.contains("s") && !j.at("s").is_null()) {
        SliceVector s;
        for (const auto& v : j.at("s")) {
            if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1))
                throw DataError("slice value must be 0 or 1" + where);
            s.push_back(static_cast<std::uint8_t>(v.get<int>()));
        }
        rec.s = std::move(s);
    }
    if (j.contains("text") && j.at("text").is_string()) rec.text = j.at("text").get<std::string>();
    if (j.contains("correct") && !j.at("correct").is_null()) {
        const auto& c = j.at("correct");
        rec.correct = c.is_boolean() ? static_cast<std::int64_t>(c.get<bool>()) : c.get<std::int64_t>();
    }
    return rec;
}

template <typename T>
T manifest_field(const json& m, const char* key) {
    if (!m.contains(key)) throw DataError(std::string("manifest missing field: ") + key);
    try {
        return m.at(key).get<T>();
    } catch (const json::exception&) {
        throw DataError(std::string("manifest field has wrong type: ") + key);
    }
}

FeatureMatrix decode_dense(std::string_view payload, std::size_t n, std::size_t d) {
    const std::size_t expected = n * d * 4;
    if (payload.size() != expected)
        throw DataError("feature payload has " + std::to_string(payload.size()) + " bytes; manifest n=" +
                        std::to_string(n) + ", d=" + std::to_string(d) + " requires " + std::to_string(expected));
    std::vector<float> vals(n * d);
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = detail::get_f32(payload, 4 * i);
    return FeatureMatrix::dense(n, d, std::move(vals));
}

FeatureMatrix decode_sparse(std::string_view payload, std::size_t n, std::size_t d) {
    std::vector<std::size_t> offsets{0};
    std::vector<std::uint32_t> idx;
    std::vector<float> vals;
    std::size_t pos = 0;
    for (std::size_t r = 0; r < n; ++r) {
        if (pos + 4 > payload.size()) throw DataError("sparse payload truncated at row " + std::to_string(r));
        const std::uint32_t m = detail::get_u32(payload, pos);
        pos += 4;
        if (m > d || pos + 8ull * m > payload.size())
            throw DataError("sparse payload truncated or oversized at row " + std::to_string(r));
        for (std::uint32_t e = 0; e < m; ++e) {
            idx.push_back(detail::get_u32(payload, pos));
            vals.push_back(detail::get_f32(payload, pos + 4));
            pos += 8;
        }
        offsets.push_back(idx.size());
    }
    if (pos != payload.size())
        throw DataError("sparse payload has " + std::to_string(payload.size() - pos) + " trailing bytes for n=" +
                        std::to_string(n));
    return FeatureMatrix::sparse(n, d, std::move(offsets), std::move(idx), std::move(vals));
}

std::string encode_features(const FeatureMatrix& fm) {
    std::string out;
    if (!fm.is_sparse()) {
        out.reserve(fm.rows() * fm.cols() * 4);
        for (float v : fm.dense_values()) detail::put_f32(out, v);
        return out;
    }
    for (std::size_t r = 0; r < fm.rows(); ++r) {
        auto sr = fm.sparse_row(r);
        detail::put_u32(out, static_cast<std::uint32_t>(sr.indices.size()));
        for (std::size_t p = 0; p < sr.indices.size(); ++p) {
            detail::put_u32(out, sr.indices[p]);
            detail::put_f32(out, sr.values[p]);
        }
    }
    return out;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& manifest_path) {
    if (!std::filesystem::exists(manifest_path)) throw DataError("manifest not found: " + manifest_path.string());
    json m;
    try {
        m = json::parse(detail::read_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw DataError("manifest is not valid JSON: " + std::string(e.what()));
    }
    if (manifest_field<int>(m, "version") != 1) throw DataError("unsupported SLFX version");
    const auto n = manifest_field<std::size_t>(m, "n");
    const auto d = manifest_field<std::size_t>(m, "d");
    const auto k = manifest_field<std::size_t>(m, "k");
    const auto layout = manifest_field<std::string>(m, "layout");
    const auto base = manifest_path.parent_path();
    const auto features_path = base / manifest_field<std::string>(m, "features");
    const auto records_path = base / manifest_field<std::string>(m, "records");
    auto slice_names = manifest_field<std::vector<std::string>>(m, "slice_names");
    if (slice_names.size() != k)
        throw DataError("manifest k=" + std::to_string(k) + " but lists " + std::to_string(slice_names.size()) +
                        " slice names");
    std::string provenance = m.contains("provenance") && m["provenance"].is_string() ? m["provenance"].get<std::string>() : "";

    if (!std::filesystem::exists(features_path)) throw DataError("feature file not found: " + features_path.string());
    if (!std::filesystem::exists(records_path)) throw DataError("records file not found: " + records_path.string());
    const std::string payload = detail::read_file(features_path);
    FeatureMatrix fm;
    if (layout == "dense")
        fm = decode_dense(payload, n, d);
    else if (layout == "sparse")
        fm = decode_sparse(payload, n, d);
    else
        throw DataError("unknown layout: " + layout);

    std::vector<ExampleRecord> records;
    records.reserve(n);
    std::istringstream lines(detail::read_file(records_path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError("records line " + std::to_string(lineno) + " is not valid JSON");
        }
        records.push_back(record_from_json(j, lineno));
    }
    if (records.size() != n)
        throw DataError("manifest n=" + std::to_string(n) + " but records file has " + std::to_string(records.size()) +
                        " entries");
    return Dataset(std::move(fm), std::move(records), std::move(slice_names), std::move(provenance));
}

std::filesystem::path save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json m;
    m["version"] = 1;
    m["n"] = ds.size();
    m["d"] = ds.features().cols();
    m["k"] = ds.k();
    m["layout"] = std::string(to_string(ds.features().layout()));
    m["features"] = "features.bin";
    m["records"] = "records.jsonl";
    m["slice_names"] = ds.slice_names();
    m["provenance"] = ds.provenance();

    detail::write_file(dir / "features.bin", encode_features(ds.features()));
    std::string recs;
    for (const auto& rec : ds.records()) {
        recs += record_to_json(rec).dump();
        recs += '\n';
    }
    detail::write_file(dir / "records.jsonl", recs);
    const auto manifest = dir / "manifest.json";
    detail::write_file(manifest, m.dump(2) + "\n");
    return manifest;
}

// ---------------------------------------------------------------------------
// Synthetic data

void SynthConfig::validate() const {
    if (n == 0) throw ConfigError("synthetic n must be positive");
    if (d < 1) throw ConfigError("synthetic d must be >= 1");
    if (!(noise >= 0.0 && noise < 0.5)) throw ConfigError("label noise must lie in [0, 0.5)");
    if (!(background_spread > 0.0)) throw ConfigError("background spread must be positive");
    if (!(task_positive_rate >= 0.0 && task_positive_rate <= 1.0)) throw ConfigError("task positive rate must lie in [0, 1]");
    for (const auto& s : slices) {
        if (!(s.prevalence > 0.0 && s.prevalence < 1.0))
            throw ConfigError("slice prevalence must lie in (0, 1): " + s.name);
        if (s.center.size() != d) throw ConfigError("slice centre has wrong dimension: " + s.name);
        if (!(s.spread > 0.0)) throw ConfigError("slice spread must be positive: " + s.name);
        for (double c : s.center)
            if (!std::isfinite(c)) throw ConfigError("slice centre is not finite: " + s.name);
    }
}

SynthConfig SynthConfig::separated(std::size_t n, std::size_t d, std::size_t k, double prevalence, double separation,
                                   double noise, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.n = n;
    cfg.d = d;
    cfg.noise = noise;
    cfg.seed = seed;
    Rng rng(derive_seed(seed, {0}));
    for (std::size_t j = 0; j < k; ++j) {
        SynthSlice s;
        s.name = "slice_" + std::to_string(j);
        s.prevalence = prevalence;
        s.spread = cfg.background_spread;
        s.center.resize(d);
        double norm = 0.0;
        while (norm == 0.0) {
            norm = 0.0;
            for (auto& c : s.center) {
                c = rng.normal();
                norm += c * c;
            }
            norm = std::sqrt(norm);
        }
        for (auto& c : s.center) c *= separation * cfg.background_spread / norm;
        cfg.slices.push_back(std::move(s));
    }
    return cfg;
}

Dataset generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.n;
    const std::size_t d = cfg.d;
    const std::size_t k = cfg.k();

    // Cluster origin: exactly round(prevalence * n) members per slice.
    std::vector<SliceVector> origin(n, SliceVector(k, 0));
    for (std::size_t j = 0; j < k; ++j) {
        Rng rng(derive_seed(cfg.seed, {1, j}));
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        const auto members = static_cast<std::size_t>(std::llround(cfg.slices[j].prevalence * static_cast<double>(n)));
        rng.partial_shuffle(std::span<std::size_t>(order), members);
        for (std::size_t i = 0; i < members; ++i) origin[order[i]][j] = 1;
    }

    std::vector<float> values(n * d);
    {
        Rng rng(derive_seed(cfg.seed, {2}));
        std::vector<double> mean(d);
        for (std::size_t i = 0; i < n; ++i) {
            std::fill(mean.begin(), mean.end(), 0.0);
            double spread = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                if (!origin[i][j]) continue;
                for (std::size_t c = 0; c < d; ++c) mean[c] += cfg.slices[j].center[c];
                spread = std::max(spread, cfg.slices[j].spread);
            }
            if (spread == 0.0) spread = cfg.background_spread;
            for (std::size_t c = 0; c < d; ++c) values[i * d + c] = static_cast<float>(mean[c] + spread * rng.normal());
        }
    }

    // Label noise: round(noise * members) members lose the bit and as many
    // non-members gain it, so the realized prevalence is unchanged.
    std::vector<SliceVector> observed = origin;
    for (std::size_t j = 0; j < k; ++j) {
        std::vector<std::size_t> in;
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < n; ++i) (origin[i][j] ? in : out).push_back(i);
        const auto flips = std::min(static_cast<std::size_t>(std::llround(cfg.noise * static_cast<double>(in.size()))),
                                    out.size());
        Rng rng(derive_seed(cfg.seed, {3, j}));
        rng.partial_shuffle(std::span<std::size_t>(in), flips);
        rng.partial_shuffle(std::span<std::size_t>(out), flips);
        for (std::size_t t = 0; t < flips; ++t) {
            observed[in[t]][j] = 0;
            observed[out[t]][j] = 1;
        }
    }

    std::vector<ExampleRecord> records(n);
    Rng task_rng(derive_seed(cfg.seed, {4}));
    const int width = static_cast<int>(std::to_string(n > 0 ? n - 1 : 0).size());
    for (std::size_t i = 0; i < n; ++i) {
        std::string num = std::to_string(i);
        records[i].id = "ex" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
        records[i].s = std::move(observed[i]);
        records[i].y = task_rng.uniform() < cfg.task_positive_rate ? 1 : 0;
    }

    std::vector<std::string> names;
    for (const auto& s : cfg.slices) names.push_back(s.name);
    std::string provenance = "synthetic gaussian slices n=" + std::to_string(n) + " d=" + std::to_string(d) +
                             " k=" + std::to_string(k) + " seed=" + std::to_string(cfg.seed);
    return Dataset(FeatureMatrix::dense(n, d, std::move(values)), std::move(records), std::move(names), provenance);
}

// ---------------------------------------------------------------------------
// Split

SplitResult split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
    const std::size_t n = ds.size();
    if (n < 2) throw ConfigError("cannot split fewer than 2 examples");
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

    SplitResult result;
    if (!ds.has_ground_truth()) {
        result.stratified = false;
        result.warnings.push_back("records without slice labels; split is unstratified");
    } else {
        for (std::size_t j = 0; j < ds.k(); ++j) {
            std::size_t pos = 0;
            for (const auto& r : ds.records()) pos += (*r.s)[j];
            if (pos < 2) {
                result.stratified = false;
                result.warnings.push_back("slice '" + ds.slice_names()[j] + "' has " + std::to_string(pos) +
                                          " positives; split is unstratified");
            }
        }
    }

    Rng rng(seed);
    std::vector<std::size_t> test_rows;
    if (result.stratified) {
        // Group by full membership pattern; largest-remainder allocation of the test quota.
        std::map<SliceVector, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < n; ++i) groups[*ds.record(i).s].push_back(i);
        struct Quota {
            std::vector<std::size_t>* rows;
            std::size_t take;
            double frac;
        };
        std::vector<Quota> quotas;
        std::size_t assigned = 0;
        for (auto& [pattern, rows] : groups) {
            rng.shuffle(rows);
            const double exact = static_cast<double>(rows.size()) * static_cast<double>(n_test) / static_cast<double>(n);
            const auto whole = static_cast<std::size_t>(std::floor(exact));
            quotas.push_back({&rows, whole, exact - static_cast<double>(whole)});
            assigned += whole;
        }
        std::vector<std::size_t> order(quotas.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return quotas[a].frac > quotas[b].frac; });
        for (std::size_t i = 0; assigned < n_test && i < order.size(); ++i) {
            auto& q = quotas[order[i]];
            if (q.take < q.rows->size()) {
                ++q.take;
                ++assigned;
            }
        }
        for (const auto& q : quotas) test_rows.insert(test_rows.end(), q.rows->begin(), q.rows->begin() + q.take);
    } else {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        rng.partial_shuffle(std::span<std::size_t>(all), n_test);
        test_rows.assign(all.begin(), all.begin() + n_test);
    }

    std::sort(test_rows.begin(), test_rows.end());
    std::vector<std::size_t> train_rows;
    train_rows.reserve(n - test_rows.size());
    for (std::size_t i = 0, t = 0; i < n; ++i) {
        if (t < test_rows.size() && test_rows[t] == i)
            ++t;
        else
            train_rows.push_back(i);
    }
    result.train = ds.subset(train_rows);
    result.test = ds.subset(test_rows);
    return result;
}

// ---------------------------------------------------------------------------
// Normalization

NormScheme parse_norm_scheme(std::string_view name) {
    if (name == "none") return NormScheme::none;
    if (name == "l2_row") return NormScheme::l2_row;
    if (name == "zscore_col") return NormScheme::zscore_col;
    throw ConfigError("unknown normalization scheme: " + std::string(name));
}

std::string_view to_string(NormScheme scheme) {
    switch (scheme) {
        case NormScheme::none: return "none";
        case NormScheme::l2_row: return "l2_row";
        case NormScheme::zscore_col: return "zscore_col";
    }
    return "none";
}

Dataset normalize(const Dataset& ds, NormScheme scheme) {
    const auto& fm = ds.features();
    const std::size_t n = fm.rows();
    const std::size_t d = fm.cols();
    switch (scheme) {
        case NormScheme::none:
            return ds;
        case NormScheme::l2_row: {
            if (fm.is_sparse()) {
                std::vector<std::size_t> offsets{0};
                std::vector<std::uint32_t> idx;
                std::vector<float> vals;
                for (std::size_t r = 0; r < n; ++r) {
                    const double norm = std::sqrt(fm.squared_norm(r));
                    auto sr = fm.sparse_row(r);
                    for (std::size_t p = 0; p < sr.indices.size(); ++p) {
                        idx.push_back(sr.indices[p]);
                        vals.push_back(norm > 0.0 ? static_cast<float>(sr.values[p] / norm) : sr.values[p]);
                    }
                    offsets.push_back(idx.size());
                }
                return ds.with_features(FeatureMatrix::sparse(n, d, std::move(offsets), std::move(idx), std::move(vals)));
            }
            std::vector<float> vals(fm.dense_values().begin(), fm.dense_values().end());
            for (std::size_t r = 0; r < n; ++r) {
                const double norm = std::sqrt(fm.squared_norm(r));
                if (norm == 0.0) continue;
                for (std::size_t c = 0; c < d; ++c) vals[r * d + c] = static_cast<float>(vals[r * d + c] / norm);
            }
            return ds.with_features(FeatureMatrix::dense(n, d, std::move(vals)));
        }
        case NormScheme::zscore_col: {
            const FeatureMatrix dense = fm.to_dense();
            auto src = dense.dense_values();
            std::vector<double> mean(d, 0.0);
            std::vector<double> var(d, 0.0);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < d; ++c) mean[c] += src[r * d + c];
            for (auto& m : mean) m /= static_cast<double>(n);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < d; ++c) {
                    const double diff = src[r * d + c] - mean[c];
                    var[c] += diff * diff;
                }
            std::vector<float> vals(n * d, 0.0f);
            for (std::size_t c = 0; c < d; ++c) {
                const double sd = std::sqrt(var[c] / static_cast<double>(n));
                if (sd == 0.0) continue;
                for (std::size_t r = 0; r < n; ++r)
                    vals[r * d + c] = static_cast<float>((src[r * d + c] - mean[c]) / sd);
            }
            return ds.with_features(FeatureMatrix::dense(n, d, std::move(vals)));
        }
    }
    return ds;
}

Dataset append_task_columns(const Dataset& ds, bool include_correct) {
    const auto& fm = ds.features();
    const std::size_t n = fm.rows();
    const std::size_t d = fm.cols();
    const std::size_t extra = include_correct ? 2 : 1;
    auto extra_value = [&](std::size_t r, std::size_t e) {
        const auto& rec = ds.record(r);
        return e == 0 ? static_cast<float>(rec.y) : static_cast<float>(rec.correct.value_or(0));
    };
    if (fm.is_sparse()) {
        std::vector<std::size_t> offsets{0};
        std::vector<std::uint32_t> idx;
        std::vector<float> vals;
        for (std::size_t r = 0; r < n; ++r) {
            auto sr = fm.sparse_row(r);
            idx.insert(idx.end(), sr.indices.begin(), sr.indices.end());
            vals.insert(vals.end(), sr.values.begin(), sr.values.end());
            for (std::size_t e = 0; e < extra; ++e) {
                const float v = extra_value(r, e);
                if (v == 0.0f) continue;
                idx.push_back(static_cast<std::uint32_t>(d + e));
                vals.push_back(v);
            }
            offsets.push_back(idx.size());
        }
        return ds.with_features(FeatureMatrix::sparse(n, d + extra, std::move(offsets), std::move(idx), std::move(vals)));
    }
    std::vector<float> vals;
    vals.reserve(n * (d + extra));
    for (std::size_t r = 0; r < n; ++r) {
        auto row = fm.dense_row(r);
        vals.insert(vals.end(), row.begin(), row.end());
        for (std::size_t e = 0; e < extra; ++e) vals.push_back(extra_value(r, e));
    }
    return ds.with_features(FeatureMatrix::dense(n, d + extra, std::move(vals)));
}

}  // namespace aslice
