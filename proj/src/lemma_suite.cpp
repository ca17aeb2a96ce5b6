#include "shadownet/lemma_suite.hpp"

#include "shadownet/theory_checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace shadownet {

namespace {

std::string fmt(const char* pattern, double a, double b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, pattern, a, b);
    return buf;
}

LemmaCheck against_oracle(std::string name, std::string_view oracle, double estimate, double std_error) {
    const OracleValue& o = lemma_oracle(oracle);
    LemmaCheck c;
    c.name = std::move(name);
    c.estimate = estimate;
    c.bound = std::abs(o.value) + 5.0 * std::hypot(o.std_error, std_error);
    c.pass = std::abs(estimate) <= c.bound;
    c.detail = fmt("oracle %.6g, estimate se %.3g", o.value, std_error);
    return c;
}

}  // namespace

std::vector<LemmaCheck> run_lemma_suite(RngSeed seed, unsigned threads, double sample_scale) {
    auto count = [&](double base, std::size_t floor) {
        return std::max<std::size_t>(floor, static_cast<std::size_t>(std::llround(base * sample_scale)));
    };
    std::vector<LemmaCheck> out;
    std::uint64_t next = 0;
    auto fresh = [&] { return derive_seed(seed, next++); };

    // E[w r(wh + xi)] = h / 2
    const std::pair<double, double> exp_cases[] = {{0.0, 10.0}, {1.0, 10.0}, {2.0, 20.0}};
    for (const auto& [h, sigma] : exp_cases) {
        const McEstimate e = mc_lemma_exp({h, sigma}, count(1e6, 10000), fresh(), threads);
        LemmaCheck c;
        c.name = fmt("lemma_exp h=%g sigma=%g", h, sigma);
        c.criterion = 2;
        c.estimate = e.mean;
        c.bound = 0.03;
        c.pass = std::abs(e.mean - h / 2.0) <= 0.03;
        c.detail = fmt("target %.3g, se %.3g", h / 2.0, e.std_error);
        out.push_back(c);
    }
    {
        const McEstimate e = mc_second_moment({1.0, 10.0}, count(1e6, 10000), fresh(), threads);
        LemmaCheck c;
        c.name = "second_moment h=1 sigma=10";
        c.estimate = e.mean;
        c.bound = 103.0 + 3.0 * e.std_error;
        c.pass = e.mean <= c.bound;
        c.detail = fmt("bound 3h^2+sigma^2 = %g, se %.3g", 103.0, e.std_error);
        out.push_back(c);
    }
    {
        const TwoCorrResult r = mc_two_correlation({1.0, 1.0, 10.0}, count(1e6, 100000), fresh(), threads);
        out.push_back(against_oracle("two_correlation gap a=b=1 sigma=10", "two_correlation_gap", r.gap, r.gap_std_error));
    }
    {
        const RngSeed paired = fresh();
        const std::size_t n = count(1e6, 100000);
        const TwoCorrResult ab = mc_two_correlation({1.0, 2.0, 10.0}, n, paired, threads);
        const TwoCorrResult ba = mc_two_correlation({2.0, 1.0, 10.0}, n, paired, threads);
        LemmaCheck c;
        c.name = "two_correlation symmetry (1,2) vs (2,1)";
        c.estimate = std::abs(ab.gap - ba.gap);
        c.bound = 3.0 * std::hypot(ab.gap_std_error, ba.gap_std_error);
        c.pass = c.estimate <= c.bound;
        c.detail = fmt("gaps %.4g and %.4g", ab.gap, ba.gap);
        out.push_back(c);
    }
    {
        const RngSeed paired = fresh();
        const std::size_t n = count(2e5, 10000);
        std::vector<HResult> runs;
        for (double sigma : {10.0, 100.0, 1000.0}) runs.push_back(mc_H({2.0, sigma}, n, paired, threads));
        out.push_back(against_oracle("E|H| r=2 sigma=100", "abs_H_sigma100_r2", runs[1].abs_mean.mean,
                                     runs[1].abs_mean.std_error));
        LemmaCheck c;
        c.name = "E|H| decreasing in sigma (10, 100, 1000)";
        c.estimate = runs[2].abs_mean.mean;
        c.bound = runs[1].abs_mean.mean;
        c.pass = runs[0].abs_mean.mean > runs[1].abs_mean.mean && runs[1].abs_mean.mean > runs[2].abs_mean.mean;
        c.detail = fmt("sigma 10: %.4g, sigma 100: %.4g", runs[0].abs_mean.mean, runs[1].abs_mean.mean);
        out.push_back(c);
    }
    {
        const LayerCheck layer = LayerCheck::binary(20, 64, 200, 4096);
        const McEstimate e = mc_pairwise_cov(layer, 0, 1, count(1e5, 10000), fresh(), threads);
        out.push_back(against_oracle("pairwise covariance k=20 t=200", "pairwise_cov_k20_t200", e.mean, e.std_error));
    }
    {
        const RngSeed paired = fresh();
        const std::size_t n = count(5e4, 10000);
        const McEstimate lo = mc_pairwise_cov(LayerCheck::binary(20, 64, 100, 4096), 0, 1, n, paired, threads);
        const McEstimate hi = mc_pairwise_cov(LayerCheck::binary(20, 64, 400, 4096), 0, 1, n, paired, threads);
        LemmaCheck c;
        c.name = "pairwise covariance decays t=100 -> 400";
        c.estimate = std::abs(hi.mean);
        c.bound = std::abs(lo.mean) + 3.0 * std::hypot(lo.std_error, hi.std_error);
        c.pass = c.estimate <= c.bound;
        c.detail = fmt("|cov| at t=100: %.4g, t=400: %.4g", std::abs(lo.mean), std::abs(hi.mean));
        out.push_back(c);
    }
    {
        const LayerCheck layer = LayerCheck::binary(16, 64, 256, 4096);
        const Vector u = layer.h;  // all ones on the support
        const McEstimate e = mc_linear_comb(layer, u, count(5e4, 10000), fresh(), threads);
        out.push_back(against_oracle("linear combination k=16 t=256", "linear_comb_k16_t256", e.mean, e.std_error));
    }
    {
        const RngSeed paired = fresh();
        const std::size_t n = count(2e4, 10000);
        const LayerCheck a = LayerCheck::binary(16, 64, 256, 4096);
        const LayerCheck b = LayerCheck::binary(16, 64, 1024, 4096);
        const McEstimate lo = mc_linear_comb(a, a.h, n, paired, threads);
        const McEstimate hi = mc_linear_comb(b, b.h, n, paired, threads);
        LemmaCheck c;
        c.name = "linear combination decays t=256 -> 1024";
        c.estimate = hi.mean;
        c.bound = lo.mean + 3.0 * std::hypot(lo.std_error, hi.std_error);
        c.pass = c.estimate <= c.bound;
        c.detail = fmt("t=256: %.4g, t=1024: %.4g", lo.mean, hi.mean);
        out.push_back(c);
    }
    {
        const RngSeed paired = fresh();
        const std::size_t n = count(5e4, 10000);
        const McEstimate v256 = variance_check(LayerCheck::binary(16, 64, 256, 4096), 0, n, paired, threads);
        const McEstimate v512 = variance_check(LayerCheck::binary(16, 64, 512, 4096), 0, n, paired, threads);
        const double limit = lemma_oracle("variance_constant").value * 16.0 / 256.0;
        LemmaCheck c;
        c.name = "variance k=16 t=256 <= C k/t";
        c.estimate = v256.mean;
        c.bound = limit;
        c.pass = v256.mean <= limit;
        c.detail = fmt("C = %.4g, se %.3g", lemma_oracle("variance_constant").value, v256.std_error);
        out.push_back(c);
        LemmaCheck h;
        h.name = "variance halves t=256 -> 512";
        h.estimate = v512.mean;
        h.bound = 3.0 * std::hypot(v512.std_error, 0.5 * v256.std_error);
        h.pass = std::abs(v512.mean - 0.5 * v256.mean) <= h.bound;
        h.detail = fmt("t=256: %.4g, t=512: %.4g", v256.mean, v512.mean);
        out.push_back(h);
    }
    {
        const RngSeed paired = fresh();
        const std::size_t trials = count(500, 200);
        const TailReport a = concentration_tail(LayerCheck::binary(16, 256, 256, 2048), trials, paired, 1.0, threads);
        const TailReport b = concentration_tail(LayerCheck::binary(16, 256, 1024, 2048), trials, paired, 1.0, threads);
        out.push_back(against_oracle("concentration p99 k=16 t=256 n=2048", "concentration_p99_k16_t256_n2048",
                                     a.p99.value, a.p99.std_error));
        LemmaCheck c;
        c.name = "concentration quantiles shift down t=256 -> 1024";
        c.estimate = b.p99.value;
        c.bound = a.p99.value;
        c.pass = b.p50.value < a.p50.value && b.p90.value < a.p90.value && b.p99.value < a.p99.value;
        c.detail = fmt("p50 %.4g -> %.4g", a.p50.value, b.p50.value);
        out.push_back(c);
    }
    {
        const RngSeed paired = fresh();
        const std::size_t trials = count(200, 20);
        const TailReport a = linear_model_check(4096, 64, trials, paired, 1.0, threads);
        const TailReport b = linear_model_check(16384, 64, trials, paired, 1.0, threads);
        out.push_back(against_oracle("linear model median n=4096 m=64", "linear_model_median_n4096_m64", a.p50.value,
                                     a.p50.std_error));
        LemmaCheck c;
        c.name = "linear model median halves n=4096 -> 16384";
        c.estimate = a.p50.value / b.p50.value;
        c.bound = 2.4;
        c.pass = c.estimate >= 1.6 && c.estimate <= 2.4;
        c.detail = fmt("medians %.4g and %.4g", a.p50.value, b.p50.value);
        out.push_back(c);
    }
    {
        TwoLayerParams p;
        p.q = 5;
        p.k = 100;
        p.t = 400;
        const TwoLayerResult r = two_layer_experiment(p, count(500, 20), fresh(), threads);
        out.push_back(against_oracle("two-layer error q=5 k=100 t=400", "two_layer_q5_k100_t400", r.error.mean,
                                     r.error.std_error));
    }
    return out;
}

}  // namespace shadownet
