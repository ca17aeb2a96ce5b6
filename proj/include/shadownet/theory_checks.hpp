#pragma once

// Monte-Carlo and quadrature estimators for the single- and two-layer
// concentration lemmas, plus the scaling, dropout, two-layer and support
// recovery experiments.

#include "shadownet/core_math.hpp"
#include "shadownet/inference.hpp"
#include "shadownet/shadow_model.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace shadownet {

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_samples = 0;
};

/// Mean and standard error of `samples` (at least 2).
McEstimate estimate_mean(std::span<const double> samples);

struct LemmaExpParams {
    double h = 0.0;
    double sigma = 1.0;
    std::vector<std::string> warnings() const;
};

struct TwoCorrParams {
    double a = 0.0;
    double b = 0.0;
    double sigma = 1.0;
    std::vector<std::string> warnings() const;
};

struct LemmaHParams {
    double r_param = 0.0;
    double sigma = 1.0;
    std::vector<std::string> warnings() const;
};

/// E[w r(w h + xi)], w ~ N(0,1), xi ~ N(0, sigma^2).
McEstimate mc_lemma_exp(const LemmaExpParams& p, std::size_t n_samples, RngSeed seed, unsigned threads = 0);
/// E[w^2 r(w h + xi)^2].
McEstimate mc_second_moment(const LemmaExpParams& p, std::size_t n_samples, RngSeed seed, unsigned threads = 0);

struct TwoCorrResult {
    McEstimate joint;    // E[u v r(au+bv+xi)^2]
    McEstimate product;  // E[u r] E[v r]
    double gap = 0.0;
    double gap_std_error = 0.0;
};

TwoCorrResult mc_two_correlation(const TwoCorrParams& p, std::size_t n_samples, RngSeed seed,
                                 unsigned threads = 0);

/// G(z) = int_0^{rz} (rz - y)^2 phi_sigma(y) dy by adaptive Simpson (abs tol 1e-10, depth 40).
double eval_G(const LemmaHParams& p, double z);
double eval_H(const LemmaHParams& p, double z);

struct HResult {
    McEstimate signed_mean;  // E[H(z)]
    McEstimate abs_mean;     // E[|H(z)|]
};

HResult mc_H(const LemmaHParams& p, std::size_t n_samples, RngSeed seed, unsigned threads = 0);

/// One layer with a fixed hidden vector, randomized over W and the dropout
/// mask: x = s_t(r(alpha W h)) and h^ = W^T x.
struct LayerCheck {
    LayerGenSpec gen;
    Vector h;

    /// Binary h on coordinates 0..k-1, fixed-subset dropout keeping t of n.
    static LayerCheck binary(std::size_t k, std::size_t m, std::size_t t, std::size_t n);
    void validate() const;
};

McEstimate mc_pairwise_cov(const LayerCheck& layer, std::size_t i, std::size_t j, std::size_t n_samples,
                           RngSeed seed, unsigned threads = 0);
/// E[|u^T (h^ - E h^)|^2] for u supported on support(h).
McEstimate mc_linear_comb(const LayerCheck& layer, std::span<const double> u, std::size_t n_samples, RngSeed seed,
                          unsigned threads = 0);
/// Var[h^_i | h]. The standard error is that of the sample variance.
McEstimate variance_check(const LayerCheck& layer, std::size_t i, std::size_t n_samples, RngSeed seed,
                          unsigned threads = 0);

struct Quantile {
    double value = 0.0;
    double std_error = 0.0;  // order-statistic estimate
};

/// Sample quantile (linear interpolation) with a binomial order-statistic
/// standard error.
Quantile sample_quantile(std::span<const double> sorted, double p);

struct TailReport {
    std::vector<double> max_dev;  // per trial, in trial order
    Quantile p50, p90, p99;
    double threshold = 0.0;       // c sqrt(k/t) ln n, or c sqrt(m/n) sqrt(ln m) for the linear model
    double exceed_fraction = 0.0;
};

/// Per trial max_i |h^_i - h_i| with fresh W and mask.
TailReport concentration_tail(const LayerCheck& layer, std::size_t n_trials, RngSeed seed, double c = 1.0,
                              unsigned threads = 0);

/// h uniform on {0,1}^m, x = W h, h^ = W^T x / n, fresh Gaussian W per trial.
TailReport linear_model_check(std::size_t n, std::size_t m, std::size_t n_trials, RngSeed seed, double c = 1.0,
                              unsigned threads = 0);
/// Same with a fixed W (n x m).
TailReport linear_model_check(const Matrix& w, std::size_t n_trials, RngSeed seed, double c = 1.0,
                              unsigned threads = 0);

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::vector<std::pair<double, double>> points;  // (log x, log y)
};

/// Least-squares fit of log y against log x. Needs at least 3 positive points.
SlopeFit fit_power_law(std::span<const double> x, std::span<const double> y);

struct ScalingParams {
    std::size_t k = 16;
    std::vector<std::size_t> t_values{64, 128, 256, 512, 1024};
    std::size_t m = 256;
    std::size_t n = 4096;
    std::size_t trials_per_t = 200;
    double bias_c = 0.5;
    ValueMode value_mode = ValueMode::binary;
};

struct ScalingPoint {
    std::size_t t = 0;
    double mean_error = 0.0;
    double std_error = 0.0;
    std::vector<double> errors;  // per trial
};

struct ScalingResult {
    std::vector<ScalingPoint> points;
    SlopeFit fit;
};

/// Fresh W, h and kept subset per trial. Trial i at every t uses
/// derive_seed(seed, i), so runs that differ only in k are paired.
ScalingResult scaling_experiment(const ScalingParams& p, RngSeed seed, unsigned threads = 0);

struct DropoutParams {
    std::size_t k = 16;
    std::size_t m = 256;
    std::size_t n = 4096;
    std::size_t t = 256;
    std::size_t trials = 200;
    double bias_c = 0.5;
};

struct DropoutResult {
    std::vector<double> clean_errors;
    std::vector<double> dropped_errors;
    double clean_median = 0.0;
    double dropped_median = 0.0;
    double ratio = 0.0;
};

/// Paired trials: the same x is inverted directly and after dropping a
/// random half of its coordinates, using r(2 W^T x_drop + b') with b' from t/2.
DropoutResult dropout_experiment(const DropoutParams& p, RngSeed seed, unsigned threads = 0);

struct TwoLayerParams {
    std::size_t q = 5;
    std::size_t k = 100;
    std::size_t t = 400;
    std::size_t p = 64;
    std::size_t m = 1024;
    std::size_t n = 4096;
    double bias_c_h = 0.125;  // formula constant for the middle layer
    double bias_c_g = 0.0;    // formula constant for the top layer
    std::size_t coordinate = 0;
    std::vector<std::string> warnings() const;
    void validate() const;
};

struct TwoLayerResult {
    McEstimate error;  // (g~_r - g_r)^2
    std::vector<std::string> warnings;
};

/// g is 1 on coordinates 0..q-1. Each trial draws fresh U (m x p), W (n x m),
/// h = s_k(r(2/k U g)) and x = s_t(r(2/t W h)), then infers h~ and g~.
TwoLayerResult two_layer_experiment(const TwoLayerParams& p, std::size_t n_trials, RngSeed seed,
                                    unsigned threads = 0);
/// Same, with an explicit top vector g (length p).
TwoLayerResult two_layer_experiment(const TwoLayerParams& p, std::span<const double> g, std::size_t n_trials,
                                    RngSeed seed, unsigned threads = 0);

struct SupportParams {
    std::vector<std::size_t> widths{2048, 512, 128};  // n_0 .. n_l
    std::size_t top_sparsity = 4;
    std::size_t n_trials = 1000;
    std::size_t resample_net_every = 0;  // 0: one net for all trials
    std::size_t calibration_trials = 500;
    ValueMode value_mode = ValueMode::binary;
};

struct SupportResult {
    std::size_t successes = 0;
    std::size_t n_trials = 0;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    std::vector<SupportMetrics> per_trial;
    std::vector<DeepBiasCalibration> calibrations;  // one per net
};

/// Intermediate layers keep every coordinate (k_j = n_j for j < l); the top
/// vector is binary (or bounded-random) with the given sparsity. Biases come
/// from calibrate_deep_biases on trials disjoint from the evaluation trials.
SupportResult support_recovery_experiment(const SupportParams& p, RngSeed seed, unsigned threads = 0);
/// Runs on a caller-supplied net (its top sparsity is overridden).
SupportResult support_recovery_experiment(const ShadowNet& net, const SupportParams& p, RngSeed seed,
                                          unsigned threads = 0);

}  // namespace shadownet
