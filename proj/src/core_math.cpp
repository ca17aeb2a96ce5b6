#include "shadownet/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace shadownet {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                    " does not match " + std::to_string(rows_) + "x" +
                                    std::to_string(cols_));
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix& Matrix::operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RngSeed derive_seed(RngSeed parent, std::uint64_t index) noexcept {
    const std::uint64_t mixed = splitmix64(splitmix64(parent.stream) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
    return {parent.master, mixed};
}

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(RngSeed seed) noexcept {
    std::uint64_t x = seed.master ^ splitmix64(seed.stream ^ 0xd1b54a32d192ed03ULL);
    for (auto& s : s_) {
        x = splitmix64(x);
        s = x;
    }
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
}

std::uint64_t Rng::next_u64() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t bound) noexcept {
    // Lemire's nearly-divisionless rejection.
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        while (low < threshold) {
            m = static_cast<unsigned __int128>(next_u64()) * bound;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double Rng::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // 1 - uniform() lies in (0, 1], so the log is finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

Vector relu(std::span<const double> v) {
    Vector out(v.size());
    std::transform(v.begin(), v.end(), out.begin(), [](double x) { return x > 0.0 ? x : 0.0; });
    return out;
}

Vector relu_prime(std::span<const double> v) {
    Vector out(v.size());
    std::transform(v.begin(), v.end(), out.begin(), [](double x) { return x > 0.0 ? 1.0 : 0.0; });
    return out;
}

void fill_gaussian(std::span<double> out, Rng& rng) noexcept {
    for (double& v : out) v = rng.normal();
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, RngSeed seed) {
    Matrix m(rows, cols);
    Rng rng(seed);
    fill_gaussian(m.data(), rng);
    return m;
}

Vector bernoulli_mask(std::size_t n, double rho, RngSeed seed) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("bernoulli_mask: rho must lie in [0, 1]");
    Vector mask(n);
    Rng rng(seed);
    for (double& m : mask) m = rng.uniform() < rho ? 1.0 : 0.0;
    return mask;
}

std::vector<std::size_t> random_subset(std::size_t n, std::size_t t, Rng& rng) {
    if (t > n) {
        throw std::invalid_argument("random_subset: t = " + std::to_string(t) + " exceeds n = " + std::to_string(n));
    }
    // Partial Fisher-Yates over an index table.
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < t; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(t);
    std::sort(idx.begin(), idx.end());
    return idx;
}

Vector subset_mask(std::size_t n, std::size_t t, RngSeed seed) {
    Rng rng(seed);
    Vector mask(n, 0.0);
    for (std::size_t i : random_subset(n, t, rng)) mask[i] = 1.0;
    return mask;
}

Vector matvec(const Matrix& w, std::span<const double> v) {
    if (w.cols() != v.size()) {
        throw std::invalid_argument("matvec: matrix is " + std::to_string(w.rows()) + "x" +
                                    std::to_string(w.cols()) + " but vector has length " +
                                    std::to_string(v.size()));
    }
    Vector out(w.rows());
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const auto row = w.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * v[c];
        out[r] = acc;
    }
    return out;
}

Vector matvec_t(const Matrix& w, std::span<const double> v) {
    if (w.rows() != v.size()) {
        throw std::invalid_argument("matvec_t: matrix is " + std::to_string(w.rows()) + "x" +
                                    std::to_string(w.cols()) + " but vector has length " +
                                    std::to_string(v.size()));
    }
    Vector out(w.cols(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double s = v[r];
        if (s == 0.0) continue;
        const auto row = w.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c] * s;
    }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double squared_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return acc;
}

double norm2(std::span<const double> v) { return std::sqrt(squared_norm(v)); }

Vector scaled(std::span<const double> v, double s) {
    Vector out(v.begin(), v.end());
    for (double& x : out) x *= s;
    return out;
}

}  // namespace shadownet
