#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace aslice {

using SliceVector = std::vector<std::uint8_t>;

enum class Layout { dense, sparse };

std::string_view to_string(Layout layout);

// n x d matrix of 32-bit floats, stored either densely (row-major) or as
// sparse rows of strictly increasing (index, value) pairs. All arithmetic
// accessors accumulate in double. Immutable after construction.
class FeatureMatrix {
public:
    struct SparseRow {
        std::span<const std::uint32_t> indices;
        std::span<const float> values;
    };

    FeatureMatrix() = default;

    static FeatureMatrix dense(std::size_t rows, std::size_t cols, std::vector<float> values);
    // row_offsets has rows + 1 entries; row r owns [row_offsets[r], row_offsets[r+1]).
    static FeatureMatrix sparse(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_offsets,
                                std::vector<std::uint32_t> indices, std::vector<float> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    Layout layout() const noexcept { return layout_; }
    bool is_sparse() const noexcept { return layout_ == Layout::sparse; }

    // Dense storage only.
    std::span<const float> dense_row(std::size_t row) const;
    std::span<const float> dense_values() const noexcept { return values_; }
    // Sparse storage only.
    SparseRow sparse_row(std::size_t row) const;
    std::size_t nonzeros() const noexcept { return values_.size(); }

    double dot(std::size_t row, std::span<const double> w) const;
    // out += scale * x_row
    void axpy(std::size_t row, double scale, std::span<double> out) const;
    double squared_norm(std::size_t row) const;
    // ||x_row - point||^2; point_sqnorm must equal ||point||^2 (used by the sparse path).
    double squared_distance(std::size_t row, std::span<const double> point, double point_sqnorm) const;
    void copy_row(std::size_t row, std::span<double> out) const;

    FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
    FeatureMatrix to_dense() const;
    FeatureMatrix to_sparse() const;

    friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

private:
    void validate() const;

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Layout layout_ = Layout::dense;
    std::vector<float> values_;
    std::vector<std::size_t> offsets_;
    std::vector<std::uint32_t> indices_;
};

struct ExampleRecord {
    std::string id;
    std::int64_t y = 0;
    std::optional<SliceVector> s;
    // Original text shown to a human annotator, when the producer has it.
    std::optional<std::string> text;
    // Whether the upstream task classifier got this example right, when known.
    std::optional<std::int64_t> correct;

    friend bool operator==(const ExampleRecord&, const ExampleRecord&) = default;
};

// Features plus per-row records. records[i] describes feature row i.
class Dataset {
public:
    Dataset() = default;
    Dataset(FeatureMatrix features, std::vector<ExampleRecord> records, std::vector<std::string> slice_names,
            std::string provenance = {});

    const FeatureMatrix& features() const noexcept { return features_; }
    const std::vector<ExampleRecord>& records() const noexcept { return records_; }
    const ExampleRecord& record(std::size_t row) const { return records_.at(row); }
    const std::vector<std::string>& slice_names() const noexcept { return slice_names_; }
    const std::string& provenance() const noexcept { return provenance_; }
    std::size_t size() const noexcept { return records_.size(); }
    std::size_t k() const noexcept { return slice_names_.size(); }

    std::optional<std::size_t> find(std::string_view id) const;
    bool has_ground_truth() const;

    Dataset subset(std::span<const std::size_t> rows) const;
    Dataset with_features(FeatureMatrix features) const;

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.features_ == b.features_ && a.records_ == b.records_ && a.slice_names_ == b.slice_names_ &&
               a.provenance_ == b.provenance_;
    }

private:
    FeatureMatrix features_;
    std::vector<ExampleRecord> records_;
    std::vector<std::string> slice_names_;
    std::string provenance_;
    std::unordered_map<std::string, std::size_t> index_;
};

// SLFX bundle: manifest.json + features.bin + records.jsonl.
Dataset load_dataset(const std::filesystem::path& manifest_path);
// Writes the bundle into `dir` (created if needed); returns the manifest path.
std::filesystem::path save_dataset(const Dataset& ds, const std::filesystem::path& dir);

struct SynthSlice {
    std::string name;
    std::vector<double> center;  // offset added to members' mean; length d
    double spread = 1.0;         // isotropic std-dev of members
    double prevalence = 0.1;
};

struct SynthConfig {
    std::size_t n = 1000;
    std::size_t d = 2;
    std::vector<SynthSlice> slices;
    double background_spread = 1.0;  // std-dev of non-members, centred at the origin
    double noise = 0.0;              // fraction of members swapped with non-members per slice
    double task_positive_rate = 0.5;
    std::uint64_t seed = 0;

    std::size_t k() const noexcept { return slices.size(); }
    void validate() const;

    // k slices whose centres sit `separation` background std-devs from the origin
    // along seeded random unit directions.
    static SynthConfig separated(std::size_t n, std::size_t d, std::size_t k, double prevalence, double separation,
                                 double noise, std::uint64_t seed);
};

Dataset generate_synthetic(const SynthConfig& cfg);

struct SplitResult {
    Dataset train;
    Dataset test;
    bool stratified = true;
    std::vector<std::string> warnings;
};

SplitResult split(const Dataset& ds, double test_fraction, std::uint64_t seed);

enum class NormScheme { none, l2_row, zscore_col };

NormScheme parse_norm_scheme(std::string_view name);
std::string_view to_string(NormScheme scheme);

// zscore_col always produces dense storage; constant columns become zero.
Dataset normalize(const Dataset& ds, NormScheme scheme);

// Appends the task label y (and optionally the correctness bit, 0 when absent)
// as extra feature columns so slice classifiers can condition on them.
Dataset append_task_columns(const Dataset& ds, bool include_correct);

}  // namespace aslice
