#pragma once

#include "engage/artifact.hpp"
#include "engage/assemble.hpp"
#include "engage/fourier.hpp"

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace engage {

struct ModelConfig {
    std::size_t hidden_width = 1500;
    std::size_t hidden_layers = 3;
    double leaky_slope = 0.01;
    std::size_t embedding_dim_cap = 16;
    std::size_t batch_size = 256;
    double lr = 1e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t epochs_stage1 = 2;
    std::size_t epochs_stage2 = 3;
    double bn_momentum = 0.1;
    double bn_epsilon = 1e-5;
    bool use_sketch = true; // false zeroes the sketch block (ablation)
    std::uint64_t seed = 0;
    FourierEncoder fourier;

    void validate() const; // throws ConfigError
};

// Residual feed-forward network over the assembled feature layout:
//   input  = sketch | fourier(numeric) | embedded categoricals | community strengths
//   block0 = leaky_relu(bn(W0 x))
//   blockL = h + leaky_relu(bn(WL h))          for L >= 1 (equal widths)
//   output = sigmoid(Wo h + bo), one unit per reaction
// With hidden_layers == 0 the output layer reads the input directly.
template <typename Scalar>
class Network {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Network() = default;
    // Scaled-uniform fan-in initialization from config.seed.
    Network(FeatureLayout layout, ModelConfig config);

    const FeatureLayout& layout() const { return layout_; }
    const ModelConfig& config() const { return config_; }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t fourier_offset() const { return layout_.sketch_size(); }
    std::size_t embedding_offset(std::size_t c) const { return embedding_offsets_[c]; }
    std::size_t strength_offset() const { return strength_offset_; }
    std::size_t embedding_dim(std::size_t c) const { return embedding_dims_[c]; }

    // Trainable tensors in declared order: embeddings, then per block
    // (weight, gamma, beta), then output weight and bias.
    std::vector<Matrix>& params() { return params_; }
    const std::vector<Matrix>& params() const { return params_; }
    const std::vector<std::string>& param_names() const { return param_names_; }
    bool decays(std::size_t i) const { return decay_[i]; }

    std::size_t block_count() const { return config_.hidden_layers; }
    Matrix& embedding(std::size_t c) { return params_[c]; }
    const Matrix& embedding(std::size_t c) const { return params_[c]; }
    const Matrix& weight(std::size_t l) const { return params_[block_base(l)]; }
    const Matrix& gamma(std::size_t l) const { return params_[block_base(l) + 1]; }
    const Matrix& beta(std::size_t l) const { return params_[block_base(l) + 2]; }
    Matrix& out_weight() { return params_[params_.size() - 2]; }
    const Matrix& out_weight() const { return params_[params_.size() - 2]; }
    Matrix& out_bias() { return params_[params_.size() - 1]; }
    const Matrix& out_bias() const { return params_[params_.size() - 1]; }

    Vector& running_mean(std::size_t l) { return running_mean_[l]; }
    const Vector& running_mean(std::size_t l) const { return running_mean_[l]; }
    Vector& running_var(std::size_t l) { return running_var_[l]; }
    const Vector& running_var(std::size_t l) const { return running_var_[l]; }

    // Dense input columns (one per row); embedding slots are filled from the tables.
    void build_input(std::span<const FeatureRow* const> rows, Matrix& x) const;

    // Mean-over-batch BCE summed over reactions, computed in training mode
    // (batch statistics). Fills `grads` (same shapes as params) when non-null.
    // Updates running statistics when `update_running` is set.
    double loss_and_gradients(std::span<const FeatureRow* const> rows, std::vector<Matrix>* grads,
                              bool update_running);
    double loss_and_gradients(std::span<const FeatureRow> rows, std::vector<Matrix>* grads,
                              bool update_running);

    // Inference-mode probabilities (frozen statistics), one column per row.
    Matrix predict(std::span<const FeatureRow> rows) const;

    // Minimum |pre-activation| over the batch in training mode (kink distance).
    Scalar min_preactivation_magnitude(std::span<const FeatureRow> rows) const;

    bool operator==(const Network&) const;

private:
    std::size_t block_base(std::size_t l) const { return layout_.categorical_vocab.size() + 3 * l; }

    FeatureLayout layout_;
    ModelConfig config_;
    std::size_t input_dim_ = 0;
    std::size_t strength_offset_ = 0;
    std::vector<std::size_t> embedding_dims_;
    std::vector<std::size_t> embedding_offsets_;
    std::vector<Matrix> params_;
    std::vector<std::string> param_names_;
    std::vector<bool> decay_;
    std::vector<Vector> running_mean_;
    std::vector<Vector> running_var_;
};

extern template class Network<float>;
extern template class Network<double>;

// Trained model: weights, frozen normalization statistics, embedding tables and layout.
using EngagePredictor = Network<float>;

using Probabilities = std::array<float, kReactionCount>;

// Scratch buffers for InferenceEngine; one per thread.
struct InferenceWorkspace {
    Eigen::VectorXf dense;
    Eigen::VectorXf a;
    Eigen::VectorXf b;
    Eigen::VectorXf logits;
};

// Single-row inference with batch norm folded into the linear layers and the
// sketch block consumed sparsely. Immutable; safe to share across threads.
class InferenceEngine {
public:
    explicit InferenceEngine(const EngagePredictor& model);

    const FeatureLayout& layout() const { return layout_; }
    InferenceWorkspace make_workspace() const;

    // Throws DataError on layout mismatch and DivergenceError on non-finite output.
    Probabilities predict(const AssembledFeatures& features, InferenceWorkspace& ws) const;
    Probabilities predict(const FeatureRow& row, InferenceWorkspace& ws) const;
    Probabilities predict(const AssembledFeatures& features) const;

    // Matrix-matrix path over many rows.
    std::vector<Probabilities> predict_batch(std::span<const FeatureRow> rows) const;

private:
    template <typename SketchVisitor>
    Probabilities run(SketchVisitor&& sketch, InferenceWorkspace& ws) const;
    void fill_dense(std::span<const double> numeric, std::span<const std::uint32_t> categorical,
                    std::span<const double> strengths, Eigen::VectorXf& dense) const;

    FeatureLayout layout_;
    FourierEncoder fourier_;
    bool use_sketch_ = true;
    float slope_ = 0.01f;
    std::vector<Eigen::MatrixXf> embeddings_;
    std::vector<std::size_t> embedding_dims_;
    // First linear map, split into its sketch columns and the dense remainder.
    Eigen::MatrixXf first_sketch_;
    Eigen::MatrixXf first_dense_;
    Eigen::VectorXf first_shift_;
    bool first_is_output_ = false;
    std::vector<Eigen::MatrixXf> weights_; // blocks 1.. (folded)
    std::vector<Eigen::VectorXf> shifts_;
    Eigen::MatrixXf out_weight_;
    Eigen::VectorXf out_bias_;
};

// Convenience single-row forward (builds an engine per call).
Probabilities forward(const EngagePredictor& model, const AssembledFeatures& features);

struct TrainingReport {
    double initial_loss = 0.0;                // full stage-1 data, before any update
    std::vector<double> stage1_epoch_loss;    // mean batch loss per epoch
    std::vector<double> stage2_epoch_loss;
    std::size_t steps = 0;
};

// AdamW with linear learning-rate decay to zero per stage. Stage 2 starts from
// the stage-1 weights with fresh optimizer state and a fresh decay schedule.
// Deterministic for a fixed config. Throws DivergenceError on non-finite loss.
EngagePredictor train(std::span<const FeatureRow> stage1, std::span<const FeatureRow> stage2,
                      const FeatureLayout& layout, const ModelConfig& config,
                      TrainingReport* report = nullptr);

// Inference-mode loss: BCE summed over reactions, averaged over rows.
double mean_loss(const EngagePredictor& model, std::span<const FeatureRow> rows);

// Runs `epochs` of AdamW over `rows` starting from `model`.
void train_stage(EngagePredictor& model, std::span<const FeatureRow> rows, std::size_t epochs,
                 std::uint64_t shuffle_seed, std::vector<double>* epoch_loss,
                 std::size_t* step_counter = nullptr);

// Max relative error between analytic gradients and central finite
// differences (step h) over `samples` randomly chosen parameters. Relative error
// is |a - n| / max(|a|, |n|, 1e-4). Continuous inputs are jittered until every
// pre-activation is at least 1e-3 from the leaky-ReLU kink.
double gradient_check(Network<double>& model, std::span<const FeatureRow> rows, std::uint64_t seed,
                      std::size_t samples = 200, double h = 1e-5);

// Model file: text header (config echo, layout, tensor table), little-endian
// float32 tensor data, then a `#checksum` line (FNV-1a 64 of the data bytes).
void save_model(std::ostream& out, const EngagePredictor& model, const ArtifactMeta& meta = {});
void save_model(const std::filesystem::path& path, const EngagePredictor& model,
                const ArtifactMeta& meta = {});
EngagePredictor load_model(std::istream& in, ArtifactMeta* meta = nullptr);
EngagePredictor load_model(const std::filesystem::path& path, ArtifactMeta* meta = nullptr);

// Copies parameters and statistics across scalar types (same layout/config).
template <typename To, typename From>
Network<To> convert_network(const Network<From>& from);

} // namespace engage
