#pragma once

// Sampling from the shadow distribution: sparse nonnegative hidden vectors,
// the single-layer generator x = s_t(r(alpha W h)), its multilayer
// composition, and the deterministic linear baseline x = W h.

#include "shadownet/core_math.hpp"

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace shadownet {

enum class ValueMode { binary, bounded_random };

struct HiddenSpec {
    std::size_t dim = 1;
    std::size_t sparsity = 1;
    ValueMode value_mode = ValueMode::binary;
    /// Constant in the infinity-norm cap max_i h_i <= C sqrt(log dim) ||h|| / sqrt(k).
    double inf_cap_const = 3.0;

    void validate() const;
};

struct HiddenVector {
    Vector vec;
    std::vector<std::size_t> support;  // sorted
};

/// Checks the HiddenVector invariants against `spec`.
bool satisfies_cap(const HiddenVector& h, const HiddenSpec& spec);

HiddenVector sample_hidden(const HiddenSpec& spec, RngSeed seed);

enum class DropoutMode { bernoulli, fixed_subset };

/// Noise model for s_t: keep each coordinate with probability rho, or keep a
/// uniformly random subset of exactly t coordinates.
struct DropoutSpec {
    DropoutMode mode = DropoutMode::fixed_subset;
    double rho = 1.0;
    std::size_t t = 1;

    static DropoutSpec bernoulli(double rho, std::size_t n);
    static DropoutSpec fixed_subset(std::size_t t);

    void validate(std::size_t n) const;
    Vector draw_mask(std::size_t n, RngSeed seed) const;
};

struct LayerGenSpec {
    std::size_t out_dim = 1;
    std::size_t in_dim = 1;
    double alpha = 1.0;
    DropoutSpec dropout;

    /// alpha = 2 / t.
    static LayerGenSpec with_defaults(std::size_t out_dim, std::size_t in_dim, DropoutSpec dropout);
};

/// Returns s_t(r(alpha W h)).
Vector generate_layer(const Matrix& w, std::span<const double> h, const LayerGenSpec& gen, RngSeed seed);
Vector generate_layer(const Matrix& w, const HiddenVector& h, const LayerGenSpec& gen, RngSeed seed);

/// Weights, widths and sparsities of an l-layer generative net. Layer 0 is the
/// observable x; weights[j] maps layer j+1 down to layer j and has shape
/// widths[j] x widths[j+1].
struct ShadowNet {
    std::vector<Matrix> weights;
    std::vector<std::size_t> widths;      // n_0 .. n_l
    std::vector<std::size_t> sparsities;  // k_0 .. k_l
    std::vector<double> alphas;           // alpha_0 .. alpha_{l-1}
    DropoutMode mode = DropoutMode::fixed_subset;

    std::size_t depth() const noexcept { return weights.size(); }
    std::size_t total_nodes() const noexcept;
    /// Spec used to produce layer j from layer j+1.
    LayerGenSpec layer_spec(std::size_t j) const;
    void validate() const;

    /// Gaussian weights; alpha_j = 2 / k_j.
    static ShadowNet random(std::vector<std::size_t> widths, std::vector<std::size_t> sparsities,
                            DropoutMode mode, RngSeed seed);
    /// Wraps existing weights (e.g. loaded from disk) with default alphas.
    static ShadowNet from_weights(std::vector<Matrix> weights, std::vector<std::size_t> sparsities,
                                  DropoutMode mode);
};

/// layers[j] is h^(j): layers[0] = x and layers[depth] = h_top.
struct DeepSample {
    std::vector<Vector> layers;
};

DeepSample generate_deep(const ShadowNet& net, std::span<const double> h_top, RngSeed seed);

/// x = W h, no rectifier and no dropout.
Vector linear_generate(const Matrix& w, std::span<const double> h);

std::string_view to_string(ValueMode mode);
std::string_view to_string(DropoutMode mode);
ValueMode value_mode_from_string(std::string_view s);
DropoutMode dropout_mode_from_string(std::string_view s);

}  // namespace shadownet
