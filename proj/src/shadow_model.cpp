#include "shadownet/shadow_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace shadownet {

namespace {

constexpr int kMaxCapAttempts = 100;

std::string dims(std::size_t r, std::size_t c) { return std::to_string(r) + "x" + std::to_string(c); }

}  // namespace

void HiddenSpec::validate() const {
    if (dim == 0 || sparsity == 0) throw std::invalid_argument("HiddenSpec: dim and sparsity must be positive");
    if (sparsity > dim) {
        throw std::invalid_argument("HiddenSpec: sparsity " + std::to_string(sparsity) + " exceeds dim " +
                                    std::to_string(dim));
    }
    if (!(inf_cap_const > 0.0)) throw std::invalid_argument("HiddenSpec: inf_cap_const must be positive");
}

bool satisfies_cap(const HiddenVector& h, const HiddenSpec& spec) {
    if (h.vec.size() != spec.dim || h.support.size() > spec.sparsity) return false;
    double max_entry = 0.0;
    for (std::size_t i = 0; i < h.vec.size(); ++i) {
        const double v = h.vec[i];
        const bool in_support = std::binary_search(h.support.begin(), h.support.end(), i);
        if (v < 0.0 || (v != 0.0) != in_support) return false;
        max_entry = std::max(max_entry, v);
    }
    const double log_dim = std::log(static_cast<double>(std::max<std::size_t>(spec.dim, 3)));
    const double cap = spec.inf_cap_const * std::sqrt(log_dim) * norm2(h.vec) /
                       std::sqrt(static_cast<double>(spec.sparsity));
    return max_entry <= cap * (1.0 + 1e-12);
}

HiddenVector sample_hidden(const HiddenSpec& spec, RngSeed seed) {
    spec.validate();
    for (int attempt = 0; attempt < kMaxCapAttempts; ++attempt) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
        HiddenVector h;
        h.support = random_subset(spec.dim, spec.sparsity, rng);
        h.vec.assign(spec.dim, 0.0);
        if (spec.value_mode == ValueMode::binary) {
            for (std::size_t i : h.support) h.vec[i] = 1.0;
        } else {
            for (std::size_t i : h.support) h.vec[i] = 0.5 + rng.uniform();
            // ||h||^2 = k
            const double scale = std::sqrt(static_cast<double>(spec.sparsity)) / norm2(h.vec);
            for (std::size_t i : h.support) h.vec[i] *= scale;
        }
        if (satisfies_cap(h, spec)) return h;
    }
    throw std::runtime_error("sample_hidden: infinity-norm cap violated after " + std::to_string(kMaxCapAttempts) +
                             " attempts; inf_cap_const is too small for this spec");
}

DropoutSpec DropoutSpec::bernoulli(double rho, std::size_t n) {
    DropoutSpec d;
    d.mode = DropoutMode::bernoulli;
    d.rho = rho;
    d.t = static_cast<std::size_t>(std::llround(rho * static_cast<double>(n)));
    return d;
}

DropoutSpec DropoutSpec::fixed_subset(std::size_t t) {
    DropoutSpec d;
    d.mode = DropoutMode::fixed_subset;
    d.t = t;
    return d;
}

void DropoutSpec::validate(std::size_t n) const {
    if (mode == DropoutMode::bernoulli) {
        if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("DropoutSpec: rho must lie in [0, 1]");
    } else if (t > n) {
        throw std::invalid_argument("DropoutSpec: keep count " + std::to_string(t) + " exceeds n = " +
                                    std::to_string(n));
    }
}

Vector DropoutSpec::draw_mask(std::size_t n, RngSeed seed) const {
    validate(n);
    if (mode == DropoutMode::bernoulli) return bernoulli_mask(n, rho, seed);
    return subset_mask(n, t, seed);
}

LayerGenSpec LayerGenSpec::with_defaults(std::size_t out_dim, std::size_t in_dim, DropoutSpec dropout) {
    if (dropout.t == 0) throw std::invalid_argument("LayerGenSpec: expected keep count t must be positive");
    return {out_dim, in_dim, 2.0 / static_cast<double>(dropout.t), dropout};
}

Vector generate_layer(const Matrix& w, std::span<const double> h, const LayerGenSpec& gen, RngSeed seed) {
    if (w.rows() != gen.out_dim || w.cols() != gen.in_dim || h.size() != gen.in_dim) {
        throw std::invalid_argument("generate_layer: W is " + dims(w.rows(), w.cols()) + ", spec expects " +
                                    dims(gen.out_dim, gen.in_dim) + ", h has length " + std::to_string(h.size()));
    }
    const Vector mask = gen.dropout.draw_mask(gen.out_dim, seed);
    Vector x(gen.out_dim, 0.0);
    for (std::size_t r = 0; r < gen.out_dim; ++r) {
        if (mask[r] == 0.0) continue;
        const double pre = gen.alpha * dot(w.row(r), h);
        x[r] = pre > 0.0 ? pre : 0.0;
    }
    return x;
}

Vector generate_layer(const Matrix& w, const HiddenVector& h, const LayerGenSpec& gen, RngSeed seed) {
    return generate_layer(w, std::span<const double>(h.vec), gen, seed);
}

std::size_t ShadowNet::total_nodes() const noexcept {
    std::size_t n = 0;
    for (std::size_t w : widths) n += w;
    return n;
}

LayerGenSpec ShadowNet::layer_spec(std::size_t j) const {
    const std::size_t n = widths.at(j);
    const DropoutSpec drop = mode == DropoutMode::bernoulli
                                 ? DropoutSpec::bernoulli(static_cast<double>(sparsities.at(j)) / static_cast<double>(n), n)
                                 : DropoutSpec::fixed_subset(sparsities.at(j));
    return {n, widths.at(j + 1), alphas.at(j), drop};
}

void ShadowNet::validate() const {
    if (weights.empty()) throw std::invalid_argument("ShadowNet: depth must be at least 1");
    if (widths.size() != weights.size() + 1 || sparsities.size() != widths.size() || alphas.size() != weights.size()) {
        throw std::invalid_argument("ShadowNet: widths/sparsities need depth+1 entries and alphas depth entries");
    }
    for (std::size_t j = 0; j < weights.size(); ++j) {
        if (weights[j].rows() != widths[j] || weights[j].cols() != widths[j + 1]) {
            throw std::invalid_argument("ShadowNet: weights[" + std::to_string(j) + "] is " +
                                        dims(weights[j].rows(), weights[j].cols()) + ", expected " +
                                        dims(widths[j], widths[j + 1]));
        }
    }
    for (std::size_t j = 0; j < widths.size(); ++j) {
        if (sparsities[j] == 0 || sparsities[j] > widths[j]) {
            throw std::invalid_argument("ShadowNet: sparsity of layer " + std::to_string(j) + " must lie in [1, " +
                                        std::to_string(widths[j]) + "]");
        }
    }
}

ShadowNet ShadowNet::random(std::vector<std::size_t> widths, std::vector<std::size_t> sparsities, DropoutMode mode,
                            RngSeed seed) {
    if (widths.size() < 2) throw std::invalid_argument("ShadowNet::random: need at least two widths");
    std::vector<Matrix> weights;
    weights.reserve(widths.size() - 1);
    for (std::size_t j = 0; j + 1 < widths.size(); ++j) {
        weights.push_back(gaussian_matrix(widths[j], widths[j + 1], derive_seed(seed, j)));
    }
    return from_weights(std::move(weights), std::move(sparsities), mode);
}

ShadowNet ShadowNet::from_weights(std::vector<Matrix> weights, std::vector<std::size_t> sparsities, DropoutMode mode) {
    ShadowNet net;
    net.mode = mode;
    for (const Matrix& w : weights) net.widths.push_back(w.rows());
    if (!weights.empty()) net.widths.push_back(weights.back().cols());
    net.sparsities = std::move(sparsities);
    net.weights = std::move(weights);
    if (net.sparsities.size() != net.widths.size()) {
        throw std::invalid_argument("ShadowNet: expected " + std::to_string(net.widths.size()) + " sparsities");
    }
    for (std::size_t j = 0; j < net.weights.size(); ++j) {
        net.alphas.push_back(2.0 / static_cast<double>(net.sparsities[j]));
    }
    net.validate();
    return net;
}

DeepSample generate_deep(const ShadowNet& net, std::span<const double> h_top, RngSeed seed) {
    net.validate();
    if (h_top.size() != net.widths.back()) {
        throw std::invalid_argument("generate_deep: top vector has length " + std::to_string(h_top.size()) +
                                    ", net expects " + std::to_string(net.widths.back()));
    }
    DeepSample out;
    out.layers.resize(net.depth() + 1);
    out.layers[net.depth()].assign(h_top.begin(), h_top.end());
    for (std::size_t j = net.depth(); j-- > 0;) {
        out.layers[j] = generate_layer(net.weights[j], out.layers[j + 1], net.layer_spec(j), derive_seed(seed, j));
    }
    return out;
}

Vector linear_generate(const Matrix& w, std::span<const double> h) { return matvec(w, h); }

std::string_view to_string(ValueMode mode) { return mode == ValueMode::binary ? "binary" : "bounded-random"; }

std::string_view to_string(DropoutMode mode) { return mode == DropoutMode::bernoulli ? "bernoulli" : "fixed-subset"; }

ValueMode value_mode_from_string(std::string_view s) {
    if (s == "binary") return ValueMode::binary;
    if (s == "bounded-random") return ValueMode::bounded_random;
    throw std::invalid_argument("unknown value mode '" + std::string(s) + "'");
}

DropoutMode dropout_mode_from_string(std::string_view s) {
    if (s == "bernoulli") return DropoutMode::bernoulli;
    if (s == "fixed-subset") return DropoutMode::fixed_subset;
    throw std::invalid_argument("unknown dropout mode '" + std::string(s) + "'");
}

}  // namespace shadownet
