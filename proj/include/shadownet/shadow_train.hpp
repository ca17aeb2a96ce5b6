#pragma once

// Two-hidden-layer ReLU MLP with SHADOW augmentation: synthetic inputs are
// generated top-down through the same (tied) weights and labeled with the
// net's own prediction.

#include "shadownet/core_math.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace shadownet {

/// h1 = r(W1^T x + b1), h2 = r(W2^T h1 + b2), logits = W3^T h2 + b3.
/// W1 is d x H1, W2 is H1 x H2, W3 is H2 x C.
struct MlpParams {
    Matrix w1, w2, w3;
    Vector b1, b2, b3;

    /// He-style N(0, 2/fan_in) weights, zero biases.
    static MlpParams init(std::size_t input_dim, std::size_t hidden1, std::size_t hidden2, std::size_t classes,
                          RngSeed seed);
    std::size_t input_dim() const noexcept { return w1.rows(); }
    std::size_t n_classes() const noexcept { return w3.cols(); }
    void validate() const;

    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Multipliers for h1 and h2 (typically {0, 1/keep}).
struct DropoutMasks {
    Vector m1, m2;
};

struct Activations {
    Vector pre1, h1, pre2, h2, logits;
};

Activations mlp_forward(const MlpParams& params, std::span<const double> x, const DropoutMasks* masks = nullptr);

struct MlpGrads {
    Matrix w1, w2, w3;
    Vector b1, b2, b3;

    static MlpGrads zeros_like(const MlpParams& params);
    void add_scaled(const MlpGrads& other, double s);
    double squared_norm() const;
};

/// Softmax cross-entropy of `logits` against `label`.
double cross_entropy(std::span<const double> logits, std::size_t label);
/// Index of the largest logit; ties go to the lowest index.
std::size_t argmax(std::span<const double> logits);
std::size_t predict(const MlpParams& params, std::span<const double> x);

/// Exact gradient of cross_entropy(forward(x).logits, label).
MlpGrads mlp_backward(const MlpParams& params, std::span<const double> x, std::size_t label,
                      const DropoutMasks* masks = nullptr);

struct GradCheck {
    double max_rel_error = 0.0;  // |analytic - numeric| / max(|analytic|, |numeric|, 1e-6)
    double min_abs_preact = 0.0;
    bool kink_free = false;      // every pre-activation at least 1e-3 in magnitude
};

/// Compares mlp_backward with central differences of step eps over every
/// stride-th entry of each weight and bias block.
GradCheck check_gradients(const MlpParams& params, std::span<const double> x, std::size_t label, double eps = 1e-5,
                          std::size_t stride = 1);

enum class SourceLayer { h2, h3 };

/// Channel-planar layout: index (c * height + y) * width + x.
struct ImageShape {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 1;
    std::size_t size() const noexcept { return width * height * channels; }
};

struct SynthOptions {
    SourceLayer source_layer = SourceLayer::h2;
    bool sampling = false;
    double sampling_keep = 0.5;
    bool smoothing = false;
    std::optional<ImageShape> image_shape;
    void validate() const;
};

/// x' = r(W1 r(W2 h)) from h = h~2 (or one step higher from the logits for
/// source h3). With sampling, each generated layer is multiplied by a fresh
/// Bernoulli(sampling_keep) mask.
Vector shadow_synthesize(const MlpParams& params, std::span<const double> h_top, const SynthOptions& opts,
                         RngSeed seed);

/// Per-channel 3x3 box filter with edge replication.
Vector smooth3x3(std::span<const double> img, const ImageShape& shape);

/// Default: (x - r(Wh) .* r'(Wh)) h^T. Masked: ((x - r(Wh)) .* r'(Wh)) h^T.
/// With `subset`, residual rows outside it are zeroed.
Matrix regularizer_grad(const Matrix& w, std::span<const double> h, std::span<const double> x, bool masked_variant,
                        const std::vector<std::size_t>* subset = nullptr);

struct Dataset {
    std::vector<Vector> inputs;
    std::vector<std::size_t> labels;
    std::size_t n_classes = 0;

    std::size_t size() const noexcept { return inputs.size(); }
    std::size_t dim() const noexcept { return inputs.empty() ? 0 : inputs.front().size(); }
    void validate() const;
};

struct TrainConfig {
    double learning_rate = 0.05;
    double shadow_weight = 0.0;      // weight of the synthetic-sample loss
    std::vector<double> reg_lambdas;  // empty, or one per generative layer (W1, W2)
    bool masked_regularizer = false;
    double dropout_ratio = 0.0;
    std::size_t batch_size = 100;
    std::size_t epochs = 1;
    SynthOptions synth;
    void validate() const;
};

struct EvalMetrics {
    double loss = 0.0;
    double real_error = 0.0;
    double synthetic_error = 0.0;  // error on x' synthesized from each input, against its true label
    double agreement = 0.0;        // fraction with predict(x) == predict(x')
};

struct EpochMetrics {
    double train_loss = 0.0;  // mean real-sample loss seen during the epoch
    std::optional<EvalMetrics> validation;
};

struct TrainResult {
    MlpParams params;
    EpochMetrics metrics;
};

/// Synthetic inputs for every sample of `data` under `opts`.
std::vector<Vector> synthesize_dataset(const MlpParams& params, const Dataset& data, const SynthOptions& opts,
                                       RngSeed seed);
EvalMetrics evaluate(const MlpParams& params, const Dataset& data, const SynthOptions& opts, RngSeed seed);

/// One pass of minibatch SGD over a seeded shuffle of `data`. The update is
/// W <- W - lr (dF/dW - lambda_j R_j) where R_j is regularizer_grad for the
/// generative layer j, i.e. ascent on the generative log-likelihood.
TrainResult train_epoch(MlpParams params, const Dataset& data, const TrainConfig& cfg, RngSeed seed,
                        const Dataset* validation = nullptr);

double label_agreement(const MlpParams& params, const std::vector<Vector>& inputs_a,
                       const std::vector<Vector>& inputs_b);

/// Class c is centered at (1 + c / dim) e_{c mod dim} with N(0, spread^2) noise.
Dataset gen_blobs(std::size_t n_per_class, std::size_t n_classes, std::size_t dim, double spread, RngSeed seed);
/// Header-free CSV, label first.
Dataset load_csv(const std::filesystem::path& path);
/// IDX images (magic 0x00000803, pixels scaled to [0, 1]) and labels (0x00000801).
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

}  // namespace shadownet
