#include "shadownet/inference.hpp"

#include "shadownet/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace shadownet {

namespace {

void require_same_length(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(std::string(what) + ": lengths " + std::to_string(a.size()) + " and " +
                                    std::to_string(b.size()) + " differ");
    }
}

double formula_scale(std::size_t t, std::size_t n) {
    return std::sqrt(std::log(static_cast<double>(std::max<std::size_t>(n, 3))) / static_cast<double>(t));
}

// Kept count of the layer below layer j (the t used when inferring layer j).
std::size_t kept_below(const ShadowNet& net, std::size_t j) { return net.sparsities[j - 1]; }

struct CalibrationSample {
    DeepSample sample;
    std::vector<double> norms;  // ||h^(j)|| for j = 1..l
};

std::vector<CalibrationSample> draw_calibration_samples(const ShadowNet& net, const HiddenSpec& top,
                                                        std::size_t trials, RngSeed seed, unsigned threads) {
    std::vector<CalibrationSample> out(trials);
    parallel_for(trials, threads, [&](std::size_t i) {
        const RngSeed trial = derive_seed(seed, i);
        const HiddenVector h = sample_hidden(top, derive_seed(trial, 0));
        CalibrationSample s;
        s.sample = generate_deep(net, h.vec, derive_seed(trial, 1));
        for (std::size_t j = 1; j <= net.depth(); ++j) s.norms.push_back(norm2(s.sample.layers[j]));
        out[i] = std::move(s);
    });
    return out;
}

bool top_support_matches(std::span<const double> estimate, std::span<const double> truth) {
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if ((estimate[i] > kDefaultSupportThreshold) != (truth[i] != 0.0)) return false;
    }
    return true;
}

}  // namespace

double choose_bias(const BiasSpec& spec, std::size_t t, std::size_t n, double norm_h) {
    if (spec.mode == BiasMode::oracle) {
        throw std::invalid_argument("choose_bias: oracle mode needs the pre-activation; use oracle_bias");
    }
    if (t == 0) throw std::invalid_argument("choose_bias: t must be at least 1");
    if (norm_h < 0.0) throw std::invalid_argument("choose_bias: norm_h must be nonnegative");
    if (norm_h == 0.0) return 0.0;
    return -spec.c * formula_scale(t, n) * norm_h;
}

double oracle_bias(std::span<const double> preact, std::span<const double> h) {
    require_same_length(preact, h, "oracle_bias");
    bool any = false;
    double worst = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (h[i] != 0.0) continue;
        worst = any ? std::max(worst, preact[i]) : preact[i];
        any = true;
    }
    return any ? -worst : 0.0;
}

Vector infer_layer(const Matrix& w, std::span<const double> x, double b) {
    Vector pre = matvec_t(w, x);
    for (double& v : pre) v = std::max(v + b, 0.0);
    return pre;
}

Vector infer_layer(const Matrix& w, std::span<const double> x, std::span<const double> b) {
    Vector pre = matvec_t(w, x);
    require_same_length(pre, b, "infer_layer");
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] = std::max(pre[i] + b[i], 0.0);
    return pre;
}

Vector infer_layer_dropout(const Matrix& w, std::span<const double> x_dropped, double b2) {
    const Vector doubled = scaled(x_dropped, 2.0);
    return infer_layer(w, doubled, b2);
}

std::vector<Vector> infer_deep(const ShadowNet& net, std::span<const double> x, std::span<const double> biases) {
    if (biases.size() != net.depth()) {
        throw std::invalid_argument("infer_deep: expected " + std::to_string(net.depth()) + " biases, got " +
                                    std::to_string(biases.size()));
    }
    std::vector<Vector> out;
    out.reserve(net.depth());
    std::span<const double> current = x;
    for (std::size_t j = 0; j < net.depth(); ++j) {
        out.push_back(infer_layer(net.weights[j], current, biases[j]));
        current = out.back();
    }
    return out;
}

std::vector<Vector> infer_deep(const ShadowNet& net, std::span<const double> x,
                               const std::vector<Vector>& bias_vectors) {
    if (bias_vectors.size() != net.depth()) {
        throw std::invalid_argument("infer_deep: expected " + std::to_string(net.depth()) + " bias vectors, got " +
                                    std::to_string(bias_vectors.size()));
    }
    std::vector<Vector> out;
    out.reserve(net.depth());
    std::span<const double> current = x;
    for (std::size_t j = 0; j < net.depth(); ++j) {
        out.push_back(infer_layer(net.weights[j], current, bias_vectors[j]));
        current = out.back();
    }
    return out;
}

double relative_sq_error(std::span<const double> h_est, std::span<const double> h) {
    require_same_length(h_est, h, "relative_sq_error");
    const double denom = squared_norm(h);
    if (denom == 0.0) throw std::invalid_argument("relative_sq_error: reference vector is zero");
    double num = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) num += (h_est[i] - h[i]) * (h_est[i] - h[i]);
    return num / denom;
}

double linf_error(std::span<const double> h_est, std::span<const double> h) {
    require_same_length(h_est, h, "linf_error");
    double worst = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) worst = std::max(worst, std::abs(h_est[i] - h[i]));
    return worst;
}

SupportMetrics support_metrics(std::span<const double> h_est, std::span<const double> h, double threshold) {
    require_same_length(h_est, h, "support_metrics");
    if (threshold < 0.0) throw std::invalid_argument("support_metrics: threshold must be nonnegative");
    std::size_t predicted = 0, actual = 0, hit = 0;
    bool exact = true;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const bool p = h_est[i] > threshold;
        const bool a = h[i] != 0.0;
        predicted += p;
        actual += a;
        hit += p && a;
        exact = exact && p == a;
    }
    SupportMetrics m;
    m.precision = predicted == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(predicted);
    m.recall = actual == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(actual);
    m.exact = exact;
    return m;
}

InferenceReport evaluate_inference(std::span<const double> h_est, std::span<const double> h, double threshold) {
    const SupportMetrics s = support_metrics(h_est, h, threshold);
    return {relative_sq_error(h_est, h), linf_error(h_est, h), s.precision, s.recall, s.exact};
}

std::vector<double> bias_grid() {
    std::vector<double> grid;
    for (int i = 1; i <= 16; ++i) grid.push_back(0.25 * i);
    return grid;
}

double calibrate_bias(const ShadowNet& net, const HiddenSpec& hidden, std::size_t trials, RngSeed seed,
                      unsigned threads) {
    if (trials < 10) throw std::invalid_argument("calibrate_bias: need at least 10 trials");
    net.validate();
    const auto samples = draw_calibration_samples(net, hidden, trials, derive_seed(seed, 0), threads);
    const auto grid = bias_grid();
    std::vector<std::size_t> successes(grid.size(), 0);
    parallel_for(grid.size(), threads, [&](std::size_t g) {
        const BiasSpec spec{grid[g], BiasMode::formula};
        std::size_t ok = 0;
        for (const auto& s : samples) {
            std::vector<double> biases;
            for (std::size_t j = 1; j <= net.depth(); ++j) {
                biases.push_back(choose_bias(spec, kept_below(net, j), net.widths[j - 1], s.norms[j - 1]));
            }
            const auto inferred = infer_deep(net, s.sample.layers[0], biases);
            ok += top_support_matches(inferred.back(), s.sample.layers.back());
        }
        successes[g] = ok;
    });
    const auto best = std::max_element(successes.begin(), successes.end());
    return grid[static_cast<std::size_t>(best - successes.begin())];
}

std::vector<Vector> DeepBiasCalibration::offsets(const ShadowNet& net, std::span<const double> layer_norms) const {
    if (layer_norms.size() != net.depth() || centers.size() != net.depth() || c.size() != net.depth()) {
        throw std::invalid_argument("DeepBiasCalibration::offsets: depth mismatch");
    }
    std::vector<Vector> out(net.depth());
    for (std::size_t j = 1; j <= net.depth(); ++j) {
        const double shift = c[j - 1] * formula_scale(kept_below(net, j), net.widths[j - 1]) * layer_norms[j - 1];
        Vector b(centers[j - 1].size());
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = -centers[j - 1][i] - shift;
        out[j - 1] = std::move(b);
    }
    return out;
}

namespace {

// Mean of pre[i] over samples whose true layer value is zero at i.
Vector off_support_center(const std::vector<Vector>& pre, const std::vector<CalibrationSample>& samples,
                          std::size_t layer) {
    const std::size_t width = pre.front().size();
    Vector sum(width, 0.0);
    std::vector<std::size_t> count(width, 0);
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const Vector& truth = samples[s].sample.layers[layer];
        for (std::size_t i = 0; i < width; ++i) {
            if (truth[i] != 0.0) continue;
            sum[i] += pre[s][i];
            ++count[i];
        }
    }
    for (std::size_t i = 0; i < width; ++i) sum[i] = count[i] ? sum[i] / static_cast<double>(count[i]) : 0.0;
    return sum;
}

}  // namespace

DeepBiasCalibration calibrate_deep_biases(const ShadowNet& net, const HiddenSpec& top, std::size_t trials,
                                          RngSeed seed, unsigned threads) {
    if (trials < 10) throw std::invalid_argument("calibrate_deep_biases: need at least 10 trials");
    net.validate();
    const std::size_t depth = net.depth();
    const auto samples = draw_calibration_samples(net, top, trials, derive_seed(seed, 0), threads);
    const auto grid = bias_grid();
    // A depth-1 net has no intermediate layer, so only the first mid value is tried.
    const std::size_t mid_candidates = depth > 1 ? grid.size() : 1;

    struct Candidate {
        DeepBiasCalibration cal;
        std::size_t successes = 0;
    };
    std::vector<Candidate> candidates(mid_candidates);

    // Layer 1 sees x directly, so its pre-activations and center are shared by every candidate.
    std::vector<Vector> first_pre(samples.size());
    parallel_for(samples.size(), threads,
                 [&](std::size_t s) { first_pre[s] = matvec_t(net.weights[0], samples[s].sample.layers[0]); });
    const Vector first_center = off_support_center(first_pre, samples, 1);

    parallel_for(mid_candidates, threads, [&](std::size_t m) {
        const double c_mid = grid[m];
        DeepBiasCalibration cal;
        std::vector<Vector> current;

        for (std::size_t j = 1; j <= depth; ++j) {
            std::vector<Vector> pre(samples.size());
            if (j == 1) {
                pre = first_pre;
                cal.centers.push_back(first_center);
            } else {
                for (std::size_t s = 0; s < samples.size(); ++s) pre[s] = matvec_t(net.weights[j - 1], current[s]);
                cal.centers.push_back(off_support_center(pre, samples, j));
            }
            if (j == depth) {
                current = std::move(pre);
                break;
            }
            cal.c.push_back(c_mid);
            const double scale = formula_scale(kept_below(net, j), net.widths[j - 1]);
            const Vector& center = cal.centers.back();
            for (std::size_t s = 0; s < samples.size(); ++s) {
                const double shift = c_mid * scale * samples[s].norms[j - 1];
                for (std::size_t i = 0; i < pre[s].size(); ++i) pre[s][i] = std::max(pre[s][i] - center[i] - shift, 0.0);
            }
            current = std::move(pre);
        }

        // current holds the top pre-activations; sweep the top constant.
        const double top_scale = formula_scale(kept_below(net, depth), net.widths[depth - 1]);
        const Vector& top_center = cal.centers.back();
        std::size_t best_ok = 0;
        double best_c = grid.front();
        for (double c_top : grid) {
            std::size_t ok = 0;
            for (std::size_t s = 0; s < samples.size(); ++s) {
                const double shift = c_top * top_scale * samples[s].norms[depth - 1];
                const Vector& truth = samples[s].sample.layers[depth];
                bool match = true;
                for (std::size_t i = 0; i < truth.size() && match; ++i) {
                    const double v = current[s][i] - top_center[i] - shift;
                    match = (v > kDefaultSupportThreshold) == (truth[i] != 0.0);
                }
                ok += match;
            }
            if (ok > best_ok) {
                best_ok = ok;
                best_c = c_top;
            }
        }
        cal.c.push_back(best_c);
        cal.calibration_success = static_cast<double>(best_ok) / static_cast<double>(samples.size());
        candidates[m] = {std::move(cal), best_ok};
    });

    std::size_t best = 0;
    for (std::size_t m = 1; m < candidates.size(); ++m) {
        if (candidates[m].successes > candidates[best].successes) best = m;
    }
    return std::move(candidates[best].cal);
}

}  // namespace shadownet
