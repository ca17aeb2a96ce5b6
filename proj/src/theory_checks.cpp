#include "shadownet/theory_checks.hpp"

#include "shadownet/parallel.hpp"
#include "shadownet/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace shadownet {

namespace {

constexpr std::size_t kBlock = 4096;

// Calls fn(rng, i) for every i in [0, n); block b of kBlock indices draws from
// derive_seed(seed, b), so results do not depend on the thread count.
template <class Fn>
void for_samples(std::size_t n, RngSeed seed, unsigned threads, Fn&& fn) {
    const std::size_t blocks = (n + kBlock - 1) / kBlock;
    parallel_for(blocks, threads, [&](std::size_t b) {
        Rng rng(derive_seed(seed, b));
        const std::size_t end = std::min(n, (b + 1) * kBlock);
        for (std::size_t i = b * kBlock; i < end; ++i) fn(rng, i);
    });
}

double sample_variance(std::span<const double> v, double mean) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size() - 1);
}

void require_samples(std::size_t n, std::size_t minimum, const char* what) {
    if (n < minimum) {
        throw std::invalid_argument(std::string(what) + ": need at least " + std::to_string(minimum) + " samples");
    }
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::size_t kept_count(const DropoutSpec& d, std::size_t n, Rng& rng) {
    if (d.mode == DropoutMode::fixed_subset) return d.t;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) kept += rng.uniform() < d.rho;
    return kept;
}

// Draws h^ = W^T s_t(r(alpha W h)) restricted to `coords`, generating only the
// kept rows of W and, within a row, only the entries on support(h) and coords.
class RowSampler {
public:
    RowSampler(const LayerCheck& layer, std::vector<std::size_t> coords) : layer_(layer), coords_(std::move(coords)) {
        for (std::size_t i = 0; i < layer.h.size(); ++i) {
            if (layer.h[i] == 0.0) continue;
            support_.push_back(i);
            support_values_.push_back(layer.h[i]);
        }
        for (std::size_t c : coords_) {
            const auto it = std::lower_bound(support_.begin(), support_.end(), c);
            slot_.push_back(it != support_.end() && *it == c ? static_cast<long>(it - support_.begin()) : -1);
        }
    }

    void sample(Rng& rng, std::span<double> out) const {
        std::fill(out.begin(), out.end(), 0.0);
        const std::size_t kept = kept_count(layer_.gen.dropout, layer_.gen.out_dim, rng);
        Vector w(support_.size());
        for (std::size_t r = 0; r < kept; ++r) {
            fill_gaussian(w, rng);
            const double x = std::max(layer_.gen.alpha * dot(w, support_values_), 0.0);
            for (std::size_t c = 0; c < coords_.size(); ++c) {
                const double wc = slot_[c] >= 0 ? w[static_cast<std::size_t>(slot_[c])] : rng.normal();
                out[c] += wc * x;
            }
        }
    }

    std::span<const std::size_t> support() const { return support_; }

private:
    const LayerCheck& layer_;
    std::vector<std::size_t> coords_;
    std::vector<std::size_t> support_;
    Vector support_values_;
    std::vector<long> slot_;
};

// Sample variance of `v` with the standard error of the squared deviations.
McEstimate variance_estimate(std::span<const double> v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    std::vector<double> dev(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) dev[i] = (v[i] - mean) * (v[i] - mean);
    McEstimate e = estimate_mean(dev);
    e.mean *= static_cast<double>(v.size()) / static_cast<double>(v.size() - 1);
    return e;
}

}  // namespace

McEstimate estimate_mean(std::span<const double> samples) {
    if (samples.size() < 2) throw std::invalid_argument("estimate_mean: need at least 2 samples");
    const double n = static_cast<double>(samples.size());
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    return {mean, std::sqrt(sample_variance(samples, mean) / n), samples.size()};
}

std::vector<std::string> LemmaExpParams::warnings() const {
    std::vector<std::string> w;
    if (sigma < 2.0) w.push_back("sigma < 2 is outside the lemma's hypothesis");
    if (sigma > 0.0 && h > std::log(sigma)) w.push_back("h > log(sigma) is outside the lemma's hypothesis");
    return w;
}

std::vector<std::string> TwoCorrParams::warnings() const {
    std::vector<std::string> w;
    const double cap = 5.0 * std::log(sigma);
    if (a > cap || b > cap) w.push_back("a or b exceeds 5 log(sigma)");
    return w;
}

std::vector<std::string> LemmaHParams::warnings() const {
    std::vector<std::string> w;
    if (r_param > 10.0 * std::log(sigma)) w.push_back("r exceeds 10 log(sigma)");
    return w;
}

McEstimate mc_lemma_exp(const LemmaExpParams& p, std::size_t n_samples, RngSeed seed, unsigned threads) {
    require_samples(n_samples, 10000, "mc_lemma_exp");
    if (!(p.sigma > 0.0)) throw std::invalid_argument("mc_lemma_exp: sigma must be positive");
    std::vector<double> s(n_samples);
    for_samples(n_samples, seed, threads, [&](Rng& rng, std::size_t i) {
        const double w = rng.normal();
        const double xi = p.sigma * rng.normal();
        s[i] = w * std::max(w * p.h + xi, 0.0);
    });
    return estimate_mean(s);
}

McEstimate mc_second_moment(const LemmaExpParams& p, std::size_t n_samples, RngSeed seed, unsigned threads) {
    require_samples(n_samples, 10000, "mc_second_moment");
    if (!(p.sigma > 0.0)) throw std::invalid_argument("mc_second_moment: sigma must be positive");
    std::vector<double> s(n_samples);
    for_samples(n_samples, seed, threads, [&](Rng& rng, std::size_t i) {
        const double w = rng.normal();
        const double xi = p.sigma * rng.normal();
        const double r = std::max(w * p.h + xi, 0.0);
        s[i] = w * w * r * r;
    });
    return estimate_mean(s);
}

TwoCorrResult mc_two_correlation(const TwoCorrParams& p, std::size_t n_samples, RngSeed seed, unsigned threads) {
    require_samples(n_samples, 100000, "mc_two_correlation");
    if (!(p.sigma > 0.0)) throw std::invalid_argument("mc_two_correlation: sigma must be positive");
    std::vector<double> joint(n_samples), ur(n_samples), vr(n_samples);
    for_samples(n_samples, seed, threads, [&](Rng& rng, std::size_t i) {
        const double u = rng.normal();
        const double v = rng.normal();
        const double xi = p.sigma * rng.normal();
        const double r = std::max(p.a * u + p.b * v + xi, 0.0);
        joint[i] = u * v * r * r;
        ur[i] = u * r;
        vr[i] = v * r;
    });
    TwoCorrResult out;
    out.joint = estimate_mean(joint);
    const McEstimate eu = estimate_mean(ur);
    const McEstimate ev = estimate_mean(vr);
    out.product.mean = eu.mean * ev.mean;
    out.product.std_error = std::hypot(ev.mean * eu.std_error, eu.mean * ev.std_error);
    out.product.n_samples = n_samples;
    // Linearized influence of each sample on joint - E[ur] E[vr].
    std::vector<double> influence(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) influence[i] = joint[i] - ev.mean * ur[i] - eu.mean * vr[i];
    out.gap = std::abs(out.joint.mean - out.product.mean);
    out.gap_std_error = estimate_mean(influence).std_error;
    return out;
}

double eval_G(const LemmaHParams& p, double z) {
    if (!(p.sigma > 0.0)) throw std::invalid_argument("eval_G: sigma must be positive");
    const double top = p.r_param * z;
    if (top == 0.0) return 0.0;
    const double norm = 1.0 / (p.sigma * std::sqrt(2.0 * std::numbers::pi));
    const double inv2s2 = 1.0 / (2.0 * p.sigma * p.sigma);
    auto f = [&](double y) { return (top - y) * (top - y) * norm * std::exp(-y * y * inv2s2); };
    return integrate_simpson(f, 0.0, top, 1e-10, 40);
}

double eval_H(const LemmaHParams& p, double z) { return (z * z - 1.0) * eval_G(p, z); }

HResult mc_H(const LemmaHParams& p, std::size_t n_samples, RngSeed seed, unsigned threads) {
    require_samples(n_samples, 10000, "mc_H");
    std::vector<double> h(n_samples), a(n_samples);
    for_samples(n_samples, seed, threads, [&](Rng& rng, std::size_t i) {
        h[i] = eval_H(p, rng.normal());
        a[i] = std::abs(h[i]);
    });
    return {estimate_mean(h), estimate_mean(a)};
}

LayerCheck LayerCheck::binary(std::size_t k, std::size_t m, std::size_t t, std::size_t n) {
    if (k > m) throw std::invalid_argument("LayerCheck: k exceeds m");
    LayerCheck c;
    c.gen = LayerGenSpec::with_defaults(n, m, DropoutSpec::fixed_subset(t));
    c.h.assign(m, 0.0);
    std::fill(c.h.begin(), c.h.begin() + static_cast<long>(k), 1.0);
    c.validate();
    return c;
}

void LayerCheck::validate() const {
    if (h.size() != gen.in_dim) {
        throw std::invalid_argument("LayerCheck: h has length " + std::to_string(h.size()) + ", layer expects " +
                                    std::to_string(gen.in_dim));
    }
    gen.dropout.validate(gen.out_dim);
    for (double v : h) {
        if (v < 0.0) throw std::invalid_argument("LayerCheck: h must be nonnegative");
    }
}

McEstimate mc_pairwise_cov(const LayerCheck& layer, std::size_t i, std::size_t j, std::size_t n_samples,
                           RngSeed seed, unsigned threads) {
    layer.validate();
    if (i == j) throw std::invalid_argument("mc_pairwise_cov: coordinates must differ");
    if (i >= layer.gen.in_dim || j >= layer.gen.in_dim) throw std::invalid_argument("mc_pairwise_cov: coordinate out of range");
    require_samples(n_samples, 10000, "mc_pairwise_cov");
    const RowSampler sampler(layer, {i, j});
    std::vector<double> a(n_samples), b(n_samples);
    for_samples(n_samples, seed, threads, [&](Rng& rng, std::size_t s) {
        double out[2];
        sampler.sample(rng, out);
        a[s] = out[0];
        b[s] = out[1];
    });
    const double n = static_cast<double>(n_samples);
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    std::vector<double> prod(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) prod[s] = (a[s] - ma) * (b[s] - mb);
    McEstimate e = estimate_mean(prod);
    e.mean *= n / (n - 1.0);
    return e;
}

McEstimate mc_linear_comb(const LayerCheck& layer, std::span<const double> u, std::size_t n_samples, RngSeed seed,
                          unsigned threads) {
    layer.validate();
    if (u.size() != layer.gen.in_dim) throw std::invalid_argument("mc_linear_comb: u has the wrong length");
    std::vector<std::size_t> support;
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (layer.h[i] != 0.0) {
            support.push_back(i);
        } else if (u[i] != 0.0) {
            throw std::invalid_argument("mc_linear_comb: u is nonzero at coordinate " + std::to_string(i) +
                                        " outside support(h)");
        }
    }
    require_samples(n_samples, 10000, "mc_linear_comb");
    const RowSampler sampler(layer, support);
    std::vector<double> s(n_samples);
    for_samples(n_samples, seed, threads, [&](Rng& rng, std::size_t idx) {
        Vector hk(support.size());
        sampler.sample(rng, hk);
        double acc = 0.0;
        for (std::size_t c = 0; c < support.size(); ++c) acc += u[support[c]] * hk[c];
        s[idx] = acc;
    });
    return variance_estimate(s);
}

McEstimate variance_check(const LayerCheck& layer, std::size_t i, std::size_t n_samples, RngSeed seed,
                          unsigned threads) {
    layer.validate();
    if (i >= layer.gen.in_dim) throw std::invalid_argument("variance_check: coordinate out of range");
    require_samples(n_samples, 10000, "variance_check");
    const RowSampler sampler(layer, {i});
    std::vector<double> s(n_samples);
    for_samples(n_samples, seed, threads, [&](Rng& rng, std::size_t idx) { sampler.sample(rng, {&s[idx], 1}); });
    return variance_estimate(s);
}

Quantile sample_quantile(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("sample_quantile: empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("sample_quantile: p must lie in [0, 1]");
    const std::size_t n = sorted.size();
    const double pos = p * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    Quantile q;
    q.value = sorted[lo] + frac * (sorted[hi] - sorted[lo]);
    const double spread = std::sqrt(static_cast<double>(n) * p * (1.0 - p));
    const auto a = static_cast<std::size_t>(std::clamp(std::floor(pos - spread), 0.0, static_cast<double>(n - 1)));
    const auto b = static_cast<std::size_t>(std::clamp(std::ceil(pos + spread), 0.0, static_cast<double>(n - 1)));
    q.std_error = 0.5 * (sorted[b] - sorted[a]);
    return q;
}

namespace {

TailReport summarize_tail(std::vector<double> max_dev, double threshold) {
    TailReport r;
    r.max_dev = std::move(max_dev);
    r.threshold = threshold;
    std::vector<double> sorted = r.max_dev;
    std::sort(sorted.begin(), sorted.end());
    r.p50 = sample_quantile(sorted, 0.5);
    r.p90 = sample_quantile(sorted, 0.9);
    r.p99 = sample_quantile(sorted, 0.99);
    const auto above = std::count_if(sorted.begin(), sorted.end(), [&](double v) { return v > threshold; });
    r.exceed_fraction = static_cast<double>(above) / static_cast<double>(sorted.size());
    return r;
}

}  // namespace

TailReport concentration_tail(const LayerCheck& layer, std::size_t n_trials, RngSeed seed, double c,
                              unsigned threads) {
    layer.validate();
    if (n_trials < 200) throw std::invalid_argument("concentration_tail: need at least 200 trials");
    std::vector<std::size_t> all(layer.gen.in_dim);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const RowSampler sampler(layer, all);
    std::vector<double> max_dev(n_trials);
    parallel_for(n_trials, threads, [&](std::size_t trial) {
        Rng rng(derive_seed(seed, trial));
        Vector hhat(all.size());
        sampler.sample(rng, hhat);
        max_dev[trial] = linf_error(hhat, layer.h);
    });
    const double k = static_cast<double>(sampler.support().size());
    const double t = static_cast<double>(layer.gen.dropout.t);
    const double threshold = c * std::sqrt(k / t) * std::log(static_cast<double>(layer.gen.out_dim));
    return summarize_tail(std::move(max_dev), threshold);
}

namespace {

double linear_threshold(std::size_t n, std::size_t m, double c) {
    return c * std::sqrt(static_cast<double>(m) / static_cast<double>(n)) *
           std::sqrt(std::log(static_cast<double>(std::max<std::size_t>(m, 3))));
}

Vector random_bits(std::size_t m, Rng& rng) {
    Vector h(m);
    for (double& v : h) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    return h;
}

}  // namespace

TailReport linear_model_check(std::size_t n, std::size_t m, std::size_t n_trials, RngSeed seed, double c,
                              unsigned threads) {
    if (m == 0 || n <= m) throw std::invalid_argument("linear_model_check: need n > m >= 1");
    if (n_trials < 2) throw std::invalid_argument("linear_model_check: need at least 2 trials");
    std::vector<double> max_dev(n_trials);
    parallel_for(n_trials, threads, [&](std::size_t trial) {
        Rng rng(derive_seed(seed, trial));
        const Vector h = random_bits(m, rng);
        Vector hhat(m, 0.0), w(m);
        for (std::size_t r = 0; r < n; ++r) {
            fill_gaussian(w, rng);
            const double x = dot(w, h);
            for (std::size_t i = 0; i < m; ++i) hhat[i] += x * w[i];
        }
        for (double& v : hhat) v /= static_cast<double>(n);
        max_dev[trial] = linf_error(hhat, h);
    });
    return summarize_tail(std::move(max_dev), linear_threshold(n, m, c));
}

TailReport linear_model_check(const Matrix& w, std::size_t n_trials, RngSeed seed, double c, unsigned threads) {
    const std::size_t n = w.rows();
    const std::size_t m = w.cols();
    if (m == 0 || n <= m) throw std::invalid_argument("linear_model_check: need n > m >= 1");
    if (n_trials < 2) throw std::invalid_argument("linear_model_check: need at least 2 trials");
    std::vector<double> max_dev(n_trials);
    parallel_for(n_trials, threads, [&](std::size_t trial) {
        Rng rng(derive_seed(seed, trial));
        const Vector h = random_bits(m, rng);
        Vector hhat = matvec_t(w, linear_generate(w, h));
        for (double& v : hhat) v /= static_cast<double>(n);
        max_dev[trial] = linf_error(hhat, h);
    });
    return summarize_tail(std::move(max_dev), linear_threshold(n, m, c));
}

SlopeFit fit_power_law(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("fit_power_law: x and y differ in length");
    if (x.size() < 3) throw std::invalid_argument("fit_power_law: need at least 3 points");
    SlopeFit fit;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0 && y[i] > 0.0)) throw std::invalid_argument("fit_power_law: values must be positive");
        fit.points.emplace_back(std::log(x[i]), std::log(y[i]));
    }
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [lx, ly] : fit.points) {
        mx += lx;
        my += ly;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [lx, ly] : fit.points) {
        sxx += (lx - mx) * (lx - mx);
        sxy += (lx - mx) * (ly - my);
        syy += (ly - my) * (ly - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_power_law: x values are all equal");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0.0;
    for (const auto& [lx, ly] : fit.points) {
        const double r = ly - (fit.intercept + fit.slope * lx);
        ss_res += r * r;
    }
    fit.r_squared = syy == 0.0 ? 1.0 : std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
    return fit;
}

namespace {

// h^ = W_T^T r(alpha W_T h) over the t kept rows, drawn row by row.
// `keep_second`, when given, marks rows that also feed `second`.
void kept_rows_estimate(std::span<const double> h, std::size_t t, Rng& rng, Vector& hhat,
                        const std::function<bool(std::size_t)>& keep_second = {}, Vector* second = nullptr) {
    const double alpha = 2.0 / static_cast<double>(t);
    Vector w(h.size());
    for (std::size_t r = 0; r < t; ++r) {
        fill_gaussian(w, rng);
        const double x = std::max(alpha * dot(w, h), 0.0);
        if (x == 0.0) continue;
        for (std::size_t i = 0; i < h.size(); ++i) hhat[i] += x * w[i];
        if (second && keep_second(r)) {
            for (std::size_t i = 0; i < h.size(); ++i) (*second)[i] += x * w[i];
        }
    }
}

Vector shifted_relu(std::span<const double> v, double b) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] + b, 0.0);
    return out;
}

}  // namespace

ScalingResult scaling_experiment(const ScalingParams& p, RngSeed seed, unsigned threads) {
    if (p.t_values.size() < 3) throw std::invalid_argument("scaling_experiment: need at least 3 t values");
    const auto [tmin, tmax] = std::minmax_element(p.t_values.begin(), p.t_values.end());
    if (p.k == 0 || p.k >= *tmin) throw std::invalid_argument("scaling_experiment: need 1 <= k < min(t)");
    if (*tmax > p.n) throw std::invalid_argument("scaling_experiment: max(t) exceeds n");
    if (p.k > p.m) throw std::invalid_argument("scaling_experiment: k exceeds m");
    if (p.trials_per_t < 2) throw std::invalid_argument("scaling_experiment: need at least 2 trials per t");
    const HiddenSpec spec{p.m, p.k, p.value_mode};
    const BiasSpec bias{p.bias_c, BiasMode::formula};

    ScalingResult result;
    std::vector<double> ts, means;
    for (std::size_t t : p.t_values) {
        ScalingPoint point;
        point.t = t;
        point.errors.resize(p.trials_per_t);
        parallel_for(p.trials_per_t, threads, [&](std::size_t i) {
            const RngSeed trial = derive_seed(seed, i);
            const HiddenVector h = sample_hidden(spec, derive_seed(trial, 0));
            Rng rng(derive_seed(trial, 1));
            Vector hhat(p.m, 0.0);
            kept_rows_estimate(h.vec, t, rng, hhat);
            const double b = choose_bias(bias, t, p.n, norm2(h.vec));
            point.errors[i] = relative_sq_error(shifted_relu(hhat, b), h.vec);
        });
        const McEstimate e = estimate_mean(point.errors);
        point.mean_error = e.mean;
        point.std_error = e.std_error;
        ts.push_back(static_cast<double>(t));
        means.push_back(e.mean);
        result.points.push_back(std::move(point));
    }
    result.fit = fit_power_law(ts, means);
    return result;
}

DropoutResult dropout_experiment(const DropoutParams& p, RngSeed seed, unsigned threads) {
    if (p.k == 0 || p.k > p.m) throw std::invalid_argument("dropout_experiment: need 1 <= k <= m");
    if (p.t < 2 || p.t > p.n) throw std::invalid_argument("dropout_experiment: need 2 <= t <= n");
    if (p.trials < 1) throw std::invalid_argument("dropout_experiment: need at least 1 trial");
    const HiddenSpec spec{p.m, p.k};
    const BiasSpec bias{p.bias_c, BiasMode::formula};
    DropoutResult out;
    out.clean_errors.resize(p.trials);
    out.dropped_errors.resize(p.trials);
    parallel_for(p.trials, threads, [&](std::size_t i) {
        const RngSeed trial = derive_seed(seed, i);
        const HiddenVector h = sample_hidden(spec, derive_seed(trial, 0));
        Rng rng(derive_seed(trial, 1));
        const auto kept = random_subset(p.n, p.t, rng);
        const Vector survives = subset_mask(p.n, p.n / 2, derive_seed(trial, 2));
        Vector clean(p.m, 0.0), dropped(p.m, 0.0);
        kept_rows_estimate(h.vec, p.t, rng, clean, [&](std::size_t r) { return survives[kept[r]] != 0.0; }, &dropped);
        const double norm_h = norm2(h.vec);
        const double b = choose_bias(bias, p.t, p.n, norm_h);
        const double b2 = choose_bias(bias, p.t / 2, p.n, norm_h);
        out.clean_errors[i] = relative_sq_error(shifted_relu(clean, b), h.vec);
        out.dropped_errors[i] = relative_sq_error(shifted_relu(scaled(dropped, 2.0), b2), h.vec);
    });
    out.clean_median = median_of(out.clean_errors);
    out.dropped_median = median_of(out.dropped_errors);
    out.ratio = out.clean_median > 0.0 ? out.dropped_median / out.clean_median
                                       : (out.dropped_median > 0.0 ? INFINITY : 1.0);
    return out;
}

std::vector<std::string> TwoLayerParams::warnings() const {
    std::vector<std::string> w;
    if (!(q < k && k < t && t < q * q)) w.push_back("parameters outside the advisory range q < k < t < q^2");
    return w;
}

void TwoLayerParams::validate() const {
    if (q == 0 || q > p) throw std::invalid_argument("two_layer_experiment: need 1 <= q <= p");
    if (k == 0 || k > m) throw std::invalid_argument("two_layer_experiment: need 1 <= k <= m");
    if (t == 0 || t > n) throw std::invalid_argument("two_layer_experiment: need 1 <= t <= n");
    if (coordinate >= p) throw std::invalid_argument("two_layer_experiment: coordinate out of range");
}

TwoLayerResult two_layer_experiment(const TwoLayerParams& p, std::size_t n_trials, RngSeed seed, unsigned threads) {
    p.validate();
    Vector g(p.p, 0.0);
    std::fill(g.begin(), g.begin() + static_cast<long>(p.q), 1.0);
    return two_layer_experiment(p, g, n_trials, seed, threads);
}

TwoLayerResult two_layer_experiment(const TwoLayerParams& p, std::span<const double> g, std::size_t n_trials,
                                    RngSeed seed, unsigned threads) {
    p.validate();
    if (g.size() != p.p) throw std::invalid_argument("two_layer_experiment: g must have length p");
    if (n_trials < 2) throw std::invalid_argument("two_layer_experiment: need at least 2 trials");
    const BiasSpec bias_h{p.bias_c_h, BiasMode::formula};
    const BiasSpec bias_g{p.bias_c_g, BiasMode::formula};
    const double beta = 2.0 / static_cast<double>(p.k);
    const double norm_g = norm2(g);
    const double b_g = choose_bias(bias_g, p.k, p.m, norm_g);
    std::vector<double> errors(n_trials);
    parallel_for(n_trials, threads, [&](std::size_t trial) {
        Rng rng(derive_seed(seed, trial));
        // Rows of U on the kept set K produce h; other rows only matter where h~ fires.
        const auto kept_h = random_subset(p.m, p.k, rng);
        Vector h(p.m, 0.0);
        std::vector<double> u_col(p.m, 0.0);
        std::vector<char> have_row(p.m, 0);
        Vector urow(p.p);
        for (std::size_t idx : kept_h) {
            fill_gaussian(urow, rng);
            h[idx] = std::max(beta * dot(urow, g), 0.0);
            u_col[idx] = urow[p.coordinate];
            have_row[idx] = 1;
        }
        Vector hhat(p.m, 0.0);
        kept_rows_estimate(h, p.t, rng, hhat);
        const double b_h = choose_bias(bias_h, p.t, p.n, norm2(h));
        double pre = b_g;
        for (std::size_t i = 0; i < p.m; ++i) {
            const double v = hhat[i] + b_h;
            if (v <= 0.0) continue;
            const double u = have_row[i] ? u_col[i] : rng.normal();
            pre += u * v;
        }
        const double diff = std::max(pre, 0.0) - g[p.coordinate];
        errors[trial] = diff * diff;
    });
    return {estimate_mean(errors), p.warnings()};
}

SupportResult support_recovery_experiment(const SupportParams& p, RngSeed seed, unsigned threads) {
    if (p.widths.size() < 2) throw std::invalid_argument("support_recovery_experiment: need at least two widths");
    if (p.n_trials == 0) throw std::invalid_argument("support_recovery_experiment: need at least 1 trial");
    const std::size_t per_net = p.resample_net_every == 0 ? p.n_trials : p.resample_net_every;
    const std::size_t nets = (p.n_trials + per_net - 1) / per_net;
    SupportResult total;
    double precision = 0.0, recall = 0.0;
    for (std::size_t b = 0; b < nets; ++b) {
        const RngSeed block = derive_seed(seed, b);
        std::vector<std::size_t> sparsities(p.widths.begin(), p.widths.end() - 1);
        sparsities.push_back(p.top_sparsity);
        const ShadowNet net = ShadowNet::random(p.widths, sparsities, DropoutMode::fixed_subset, derive_seed(block, 0));
        SupportParams sub = p;
        sub.n_trials = std::min(per_net, p.n_trials - b * per_net);
        const SupportResult r = support_recovery_experiment(net, sub, block, threads);
        total.successes += r.successes;
        total.n_trials += r.n_trials;
        precision += r.mean_precision * static_cast<double>(r.n_trials);
        recall += r.mean_recall * static_cast<double>(r.n_trials);
        total.per_trial.insert(total.per_trial.end(), r.per_trial.begin(), r.per_trial.end());
        total.calibrations.push_back(r.calibrations.front());
    }
    total.mean_precision = precision / static_cast<double>(total.n_trials);
    total.mean_recall = recall / static_cast<double>(total.n_trials);
    return total;
}

SupportResult support_recovery_experiment(const ShadowNet& base, const SupportParams& p, RngSeed seed,
                                          unsigned threads) {
    if (p.n_trials == 0) throw std::invalid_argument("support_recovery_experiment: need at least 1 trial");
    std::vector<std::size_t> sparsities = base.sparsities;
    sparsities.back() = p.top_sparsity;
    const ShadowNet net = ShadowNet::from_weights(base.weights, sparsities, base.mode);
    const HiddenSpec top{net.widths.back(), p.top_sparsity, p.value_mode};
    const DeepBiasCalibration cal = calibrate_deep_biases(net, top, p.calibration_trials, derive_seed(seed, 1), threads);

    const RngSeed eval = derive_seed(seed, 2);
    std::vector<SupportMetrics> metrics(p.n_trials);
    parallel_for(p.n_trials, threads, [&](std::size_t i) {
        const RngSeed trial = derive_seed(eval, i);
        const HiddenVector h = sample_hidden(top, derive_seed(trial, 0));
        const DeepSample sample = generate_deep(net, h.vec, derive_seed(trial, 1));
        std::vector<double> norms;
        for (std::size_t j = 1; j <= net.depth(); ++j) norms.push_back(norm2(sample.layers[j]));
        const auto inferred = infer_deep(net, sample.layers[0], cal.offsets(net, norms));
        metrics[i] = support_metrics(inferred.back(), sample.layers.back());
    });
    SupportResult out;
    out.n_trials = p.n_trials;
    for (const auto& m : metrics) {
        out.successes += m.exact;
        out.mean_precision += m.precision;
        out.mean_recall += m.recall;
    }
    out.mean_precision /= static_cast<double>(p.n_trials);
    out.mean_recall /= static_cast<double>(p.n_trials);
    out.per_trial = std::move(metrics);
    out.calibrations.push_back(cal);
    return out;
}

}  // namespace shadownet
