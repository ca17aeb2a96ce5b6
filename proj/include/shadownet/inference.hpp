#pragma once

// Feedforward inversion of the shadow model: r(W^T x + b) per layer, bias
// selection, and error / support metrics.

#include "shadownet/core_math.hpp"
#include "shadownet/shadow_model.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace shadownet {

enum class BiasMode {
    formula,     // -c sqrt(ln max(n,3) / t) ||h||
    oracle,      // minus the largest non-support pre-activation (needs the true h)
    calibrated,  // formula with a c found by calibrate_bias
};

struct BiasSpec {
    double c = 1.0;
    BiasMode mode = BiasMode::formula;
};

/// Scalar offset for inferring a layer of norm `norm_h` from `t` kept
/// coordinates out of `n`. Throws for oracle mode, which needs oracle_bias.
double choose_bias(const BiasSpec& spec, std::size_t t, std::size_t n, double norm_h);

/// -max_{i not in support(h)} preact[i]; 0 when h has full support.
double oracle_bias(std::span<const double> preact, std::span<const double> h);

Vector infer_layer(const Matrix& w, std::span<const double> x, double b);
/// Per-coordinate offset vector variant.
Vector infer_layer(const Matrix& w, std::span<const double> x, std::span<const double> b);
/// relu(2 W^T x_dropped + b2): compensates for half of x having been dropped.
Vector infer_layer_dropout(const Matrix& w, std::span<const double> x_dropped, double b2);

/// Returns the inferred layers h~(1) .. h~(l) (index j-1 holds layer j).
std::vector<Vector> infer_deep(const ShadowNet& net, std::span<const double> x, std::span<const double> biases);
std::vector<Vector> infer_deep(const ShadowNet& net, std::span<const double> x,
                               const std::vector<Vector>& bias_vectors);

inline constexpr double kDefaultSupportThreshold = 1e-9;

struct SupportMetrics {
    double precision = 1.0;
    double recall = 1.0;
    bool exact = true;
};

struct InferenceReport {
    double rel_sq_error = 0.0;
    double linf_error = 0.0;
    double precision = 1.0;
    double recall = 1.0;
    bool exact_support = true;
};

double relative_sq_error(std::span<const double> h_est, std::span<const double> h);
double linf_error(std::span<const double> h_est, std::span<const double> h);
/// Compares {i : h_est[i] > threshold} with {i : h[i] != 0}. Empty sets count
/// as precision / recall 1.
SupportMetrics support_metrics(std::span<const double> h_est, std::span<const double> h,
                               double threshold = kDefaultSupportThreshold);
InferenceReport evaluate_inference(std::span<const double> h_est, std::span<const double> h,
                                   double threshold = kDefaultSupportThreshold);

/// Grid of candidate bias constants: 0.25, 0.5, ..., 4.
std::vector<double> bias_grid();

/// Grid-searches c over bias_grid() for the formula bias, maximizing the
/// exact-support rate of the top layer over `trials` round trips through
/// `net`. Ties go to the smallest c. Uses derive_seed(seed, 0) for its trials
/// so evaluations seeded from other substreams stay disjoint.
double calibrate_bias(const ShadowNet& net, const HiddenSpec& hidden, std::size_t trials, RngSeed seed,
                      unsigned threads = 0);

/// Per-layer offsets for deep inversion: b_j = -center_j - c_j sqrt(ln n / t) ||h^(j)||.
/// center_j is the mean pre-activation of each coordinate over calibration
/// trials where that coordinate is off the true support.
struct DeepBiasCalibration {
    std::vector<Vector> centers;  // centers[j-1] for layer j
    std::vector<double> c;        // c[j-1] for layer j
    double calibration_success = 0.0;

    /// Offset vectors for one trial given the true layer norms ||h^(1)|| .. ||h^(l)||.
    std::vector<Vector> offsets(const ShadowNet& net, std::span<const double> layer_norms) const;
};

/// Searches one shared c for the intermediate layers and one for the top,
/// both over bias_grid(), refitting centers for each candidate.
DeepBiasCalibration calibrate_deep_biases(const ShadowNet& net, const HiddenSpec& top, std::size_t trials,
                                          RngSeed seed, unsigned threads = 0);

}  // namespace shadownet
