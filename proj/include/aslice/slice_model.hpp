#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "aslice/corpus.hpp"

namespace aslice {

enum class ClassWeight { none, balanced };

std::string_view to_string(ClassWeight w);
ClassWeight parse_class_weight(std::string_view name);

struct TrainConfig {
    std::size_t epochs = 30;
    double learning_rate = 0.1;
    double l2 = 1e-4;
    std::size_t batch_size = 1;
    ClassWeight class_weight = ClassWeight::balanced;
    std::uint64_t seed = 0;

    void validate() const;

    // lambda = 1e-4, step 0.1 / sqrt(t), 30 epochs, single-example steps.
    static TrainConfig svm_defaults();
    // Adam at 1e-3, 100 epochs, minibatches of 32.
    static TrainConfig mlp_defaults();
};

// Linear SVM with a logistic link on the margin: P(s=1|x) = sigmoid(alpha * (w.x + b)).
struct LinearModel {
    std::vector<double> weights;
    double bias = 0.0;
    double alpha = 1.0;

    std::size_t dim() const noexcept { return weights.size(); }
    double margin(const FeatureMatrix& X, std::size_t row) const { return X.dot(row, weights) + bias; }

    friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

struct DenseLayer {
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::vector<double> weights;  // outputs x inputs, row-major
    std::vector<double> bias;

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// ReLU hidden layers, a single logistic output unit.
struct MlpModel {
    std::vector<DenseLayer> layers;

    std::size_t dim() const noexcept { return layers.empty() ? 0 : layers.front().inputs; }
    std::vector<std::size_t> layer_sizes() const;
    std::size_t parameter_count() const;
    // Pre-sigmoid output for one row.
    double logit(const FeatureMatrix& X, std::size_t row) const;

    // Zero-initialised network with the given layer chain [d, h1, ..., 1].
    static MlpModel zeros(std::span<const std::size_t> sizes);

    friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

// Majority-class fallback used while a slice's labels contain a single class.
struct ConstantModel {
    double probability = 0.0;
    std::size_t dimension = 0;

    friend bool operator==(const ConstantModel&, const ConstantModel&) = default;
};

using BinaryClassifier = std::variant<LinearModel, MlpModel, ConstantModel>;

std::size_t classifier_dim(const BinaryClassifier& clf);
std::string_view classifier_kind(const BinaryClassifier& clf);

// Labelled subset of a feature matrix: rows[i] has label labels[i] in {0, 1}.
struct TrainingView {
    const FeatureMatrix& X;
    std::span<const std::size_t> rows;
    std::span<const std::uint8_t> labels;
};

// L2-regularised hinge loss minimised by stochastic subgradient descent, then
// alpha fit by 1-D maximum likelihood (Platt-smoothed targets). When
// `epoch_objective` is non-null it receives the full-data objective after each epoch.
LinearModel train_linear_svm(const TrainingView& data, const TrainConfig& cfg,
                             std::vector<double>* epoch_objective = nullptr);

// Regularised hinge objective of (w, b) over the view, with the configured class weights.
double svm_objective(const LinearModel& model, const TrainingView& data, const TrainConfig& cfg);

MlpModel train_mlp(const TrainingView& data, const TrainConfig& cfg, std::span<const std::size_t> hidden_sizes,
                   std::vector<double>* epoch_loss = nullptr);

// A weighted minibatch for the MLP cross-entropy.
struct MlpBatch {
    const FeatureMatrix& X;
    std::span<const std::size_t> rows;
    std::span<const double> targets;
    std::span<const double> weights;  // empty means all ones
    double l2 = 0.0;
};

struct MlpGradient {
    std::vector<DenseLayer> layers;  // same shapes as the model; holds dL/dW and dL/db
    double loss = 0.0;
};

// Exact gradient of mean_i w_i * CE(sigmoid(f(x_i)), t_i) + l2/2 * sum ||W||^2.
MlpGradient mlp_gradient(const MlpModel& model, const MlpBatch& batch);
double mlp_loss(const MlpModel& model, const MlpBatch& batch);

double sigmoid(double z) noexcept;

double predict_proba(const BinaryClassifier& clf, const FeatureMatrix& X, std::size_t row);
std::vector<double> predict_proba(const BinaryClassifier& clf, const FeatureMatrix& X);
// 1 when P >= threshold.
std::vector<std::uint8_t> predict_membership(const BinaryClassifier& clf, const FeatureMatrix& X,
                                             double threshold = 0.5);

enum class ClassifierKind { svm, mlp };

std::string_view to_string(ClassifierKind kind);
ClassifierKind parse_classifier_kind(std::string_view name);

struct ClassifierSpec {
    ClassifierKind kind = ClassifierKind::svm;
    TrainConfig train = TrainConfig::svm_defaults();
    std::vector<std::size_t> hidden{64};

    void validate() const;
};

// Row-major n x k matrix of membership probabilities.
struct ProbMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

// k independent one-vs-rest membership classifiers.
struct SliceModel {
    std::vector<std::string> slice_names;
    std::vector<BinaryClassifier> classifiers;

    std::size_t k() const noexcept { return classifiers.size(); }
    std::size_t dim() const;

    friend bool operator==(const SliceModel&, const SliceModel&) = default;
};

// Trains one classifier per slice on the annotated rows. A slice whose answers
// are single-class gets a ConstantModel predicting that class.
SliceModel train_slice_model(const ClassifierSpec& spec, const FeatureMatrix& X, std::span<const std::size_t> rows,
                             std::span<const SliceVector> answers, const std::vector<std::string>& slice_names,
                             std::uint64_t seed);

ProbMatrix predict_proba(const SliceModel& model, const FeatureMatrix& X);
ProbMatrix predict_proba(const SliceModel& model, const FeatureMatrix& X, std::span<const std::size_t> rows);
std::vector<SliceVector> predict_membership(const SliceModel& model, const FeatureMatrix& X, double threshold = 0.5);

// Binary format: "ASLM", u32 header length, JSON header, little-endian f64 parameters.
void save_model(const SliceModel& model, const std::filesystem::path& path);
SliceModel load_model(const std::filesystem::path& path);

}  // namespace aslice
