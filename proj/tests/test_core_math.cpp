#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "shadownet/core_math.hpp"
#include "shadownet/parallel.hpp"

#include <cmath>
#include <cstdlib>
#include <set>

using namespace shadownet;

namespace {

Vector naive_mul(const Matrix& w, const Vector& v, bool transpose) {
    const std::size_t out = transpose ? w.cols() : w.rows();
    const std::size_t in = transpose ? w.rows() : w.cols();
    Vector r(out, 0.0);
    for (std::size_t i = 0; i < out; ++i)
        for (std::size_t j = 0; j < in; ++j) r[i] += (transpose ? w(j, i) : w(i, j)) * v[j];
    return r;
}

double binom_pmf(int n, int k, double p) {
    double c = 1.0;
    for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return c * std::pow(p, k) * std::pow(1.0 - p, n - k);
}

}  // namespace

TEST_CASE("relu examples") {
    CHECK(relu(Vector{-1, 2, 0}) == Vector{0, 2, 0});
    CHECK(relu(Vector{0, 0}) == Vector{0, 0});
    CHECK(relu(scaled(Vector{-1, 3}, 2.0)) == Vector{0, 6});
}

TEST_CASE("relu_prime examples and the kink") {
    CHECK(relu_prime(Vector{-1, 2, 0}) == Vector{0, 1, 0});
    CHECK(relu_prime(Vector{5}) == Vector{1});
    Rng rng({3, 1});
    Vector v(200);
    fill_gaussian(v, rng);
    v[0] = 0.0;
    const Vector r = relu(v), d = relu_prime(v);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(r[i] * d[i] == r[i]);
}

TEST_CASE("relu is positively homogeneous for powers of two") {
    Rng rng({4, 2});
    for (int trial = 0; trial < 50; ++trial) {
        Vector v(17);
        fill_gaussian(v, rng);
        for (double beta : {0.0, 0.25, 1.0, 2.0, 1024.0}) {
            CHECK(relu(scaled(v, beta)) == scaled(relu(v), beta));
        }
    }
}

TEST_CASE("gaussian_matrix determinism and moments") {
    CHECK(gaussian_matrix(30, 20, {9, 9}) == gaussian_matrix(30, 20, {9, 9}));
    CHECK_FALSE(gaussian_matrix(30, 20, {9, 9}) == gaussian_matrix(30, 20, {9, 10}));
    const Matrix one = gaussian_matrix(1, 1, {1, 0});
    CHECK(std::isfinite(one(0, 0)));

    const Matrix big = gaussian_matrix(1000, 1000, {5, 0});
    double sum = 0, sq = 0;
    for (double v : big.data()) {
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(big.size());
    const double mean = sum / n;
    CHECK(std::abs(mean) <= 0.01);
    CHECK(std::abs(sq / n - mean * mean - 1.0) <= 0.02);
}

TEST_CASE("bernoulli_mask edge cases and popcount") {
    for (double v : bernoulli_mask(50, 1.0, {1, 1})) CHECK(v == 1.0);
    for (double v : bernoulli_mask(50, 0.0, {1, 1})) CHECK(v == 0.0);
    const Vector m = bernoulli_mask(1000, 0.5, {2, 2});
    double pop = 0;
    for (double v : m) pop += v;
    CHECK(pop >= 420);
    CHECK(pop <= 580);
    CHECK_THROWS_AS(bernoulli_mask(10, 1.5, {1, 1}), std::invalid_argument);
}

TEST_CASE("bernoulli_mask popcount passes a chi-square fit to Binomial(20, 0.3)") {
    // Bins 0..12 and >= 13, 13 degrees of freedom; critical value at 1e-3.
    constexpr int kDraws = 10000;
    constexpr double kCritical = 34.528;
    std::vector<int> observed(14, 0);
    for (int d = 0; d < kDraws; ++d) {
        const Vector m = bernoulli_mask(20, 0.3, derive_seed({77, 0}, d));
        int pop = 0;
        for (double v : m) pop += v == 1.0;
        ++observed[std::min(pop, 13)];
    }
    double chi2 = 0, tail = 1.0;
    for (int k = 0; k < 14; ++k) {
        double p;
        if (k < 13) {
            p = binom_pmf(20, k, 0.3);
            tail -= p;
        } else {
            p = tail;
        }
        const double expected = kDraws * p;
        chi2 += (observed[k] - expected) * (observed[k] - expected) / expected;
    }
    CHECK(chi2 < kCritical);
}

TEST_CASE("subset_mask cardinality") {
    for (double v : subset_mask(10, 10, {1, 0})) CHECK(v == 1.0);
    for (double v : subset_mask(10, 0, {1, 0})) CHECK(v == 0.0);
    for (int s = 0; s < 20; ++s) {
        const Vector m = subset_mask(10, 3, {static_cast<std::uint64_t>(s), 0});
        double pop = 0;
        for (double v : m) pop += v;
        CHECK(pop == 3);
    }
    CHECK_THROWS_AS(subset_mask(5, 6, {1, 0}), std::invalid_argument);
}

TEST_CASE("random_subset is sorted and distinct") {
    Rng rng({8, 8});
    const auto s = random_subset(100, 40, rng);
    CHECK(s.size() == 40);
    CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 40);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(s.back() < 100);
}

TEST_CASE("derive_seed is pure and separates indices") {
    const RngSeed s{12345, 6};
    CHECK(derive_seed(s, 0) == derive_seed(s, 0));
    std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
    for (std::uint64_t master : {0ull, 1ull, 7ull, 12345ull, 20240601ull}) {
        for (std::uint64_t i = 0; i < 1000; ++i) {
            const RngSeed d = derive_seed({master, 0}, i);
            seen.insert({d.master, d.stream});
        }
    }
    CHECK(seen.size() == 5000);
    const RngSeed later = derive_seed(s, 5);
    (void)derive_seed(s, 3);
    CHECK(derive_seed(s, 5) == later);
}

TEST_CASE("Rng reproduces its stream") {
    Rng a({3, 4}), b({3, 4});
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
        CHECK(a.normal() == b.normal());
        const double u = a.uniform();
        CHECK(u == b.uniform());
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("matvec examples") {
    const Vector v{1, 2, 3};
    CHECK(matvec(Matrix::identity(3), v) == v);
    CHECK(matvec_t(Matrix::identity(3), v) == v);
    CHECK(matvec(Matrix(3, 3), v) == Vector{0, 0, 0});
    CHECK_THROWS_AS(matvec(Matrix(2, 3), Vector{1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(matvec_t(Matrix(2, 3), Vector{1, 2, 3}), std::invalid_argument);
}

TEST_CASE("W^T W e_i matches an explicit Gram column") {
    const Matrix w = gaussian_matrix(4, 4, {11, 0});
    for (std::size_t i = 0; i < 4; ++i) {
        Vector e(4, 0.0);
        e[i] = 1.0;
        const Vector got = matvec_t(w, matvec(w, e));
        for (std::size_t r = 0; r < 4; ++r) {
            double g = 0;
            for (std::size_t k = 0; k < 4; ++k) g += w(k, r) * w(k, i);
            CHECK(got[r] == doctest::Approx(g).epsilon(1e-12));
        }
    }
}

TEST_CASE("matvec and matvec_t agree with a naive loop") {
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix w = gaussian_matrix(8, 8, {13, static_cast<std::uint64_t>(trial)});
        Rng rng({14, static_cast<std::uint64_t>(trial)});
        Vector v(8);
        fill_gaussian(v, rng);
        for (bool t : {false, true}) {
            const Vector got = t ? matvec_t(w, v) : matvec(w, v);
            const Vector want = naive_mul(w, v, t);
            double err = 0, scale = 0;
            for (std::size_t i = 0; i < 8; ++i) {
                err = std::max(err, std::abs(got[i] - want[i]));
                scale = std::max(scale, std::abs(want[i]));
            }
            CHECK(err <= 1e-12 * scale);
        }
    }
}

TEST_CASE("vector helpers") {
    CHECK(dot(Vector{1, 2}, Vector{3, 4}) == 11);
    CHECK(squared_norm(Vector{3, 4}) == 25);
    CHECK(norm2(Vector{3, 4}) == 5);
    CHECK_THROWS_AS(dot(Vector{1}, Vector{1, 2}), std::invalid_argument);
    Matrix m(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(m.transposed()(2, 1) == 6);
    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST_CASE("parallel_for covers every index once and rethrows") {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);
    CHECK_THROWS_AS(parallel_for(100, 4,
                                 [](std::size_t i) {
                                     if (i == 37) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
    CHECK(resolve_threads(3) == 3);
    CHECK(resolve_threads(0) >= 1);
}
