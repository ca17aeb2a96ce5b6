#pragma once

// Dense linear algebra, seeded randomness and the ReLU family used by every
// other module. Everything here is a pure function of its arguments.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace shadownet {

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    Matrix transposed() const;
    Matrix& operator*=(double s) noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Identifies one random stream. (master, stream) fully determines every
/// draw made from it.
struct RngSeed {
    std::uint64_t master = 0;
    std::uint64_t stream = 0;

    friend bool operator==(const RngSeed&, const RngSeed&) = default;
};

/// Substream for item `index` of `parent`. Pure; independent of call order.
RngSeed derive_seed(RngSeed parent, std::uint64_t index) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// xoshiro256** seeded through splitmix64. Normals come from the
/// Box-Muller transform; the spare variate is cached, so two generators built
/// from the same seed produce identical sequences.
class Rng {
public:
    explicit Rng(RngSeed seed) noexcept;

    std::uint64_t next_u64() noexcept;
    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound) noexcept;
    double normal() noexcept;

private:
    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

Vector relu(std::span<const double> v);
/// Indicator of v > 0; the derivative at the kink is taken as 0.
Vector relu_prime(std::span<const double> v);

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, RngSeed seed);
/// Fills `out` with i.i.d. standard normals drawn from `rng`.
void fill_gaussian(std::span<double> out, Rng& rng) noexcept;

Vector bernoulli_mask(std::size_t n, double rho, RngSeed seed);
Vector subset_mask(std::size_t n, std::size_t t, RngSeed seed);
/// Sorted uniform random size-t subset of [0, n).
std::vector<std::size_t> random_subset(std::size_t n, std::size_t t, Rng& rng);

Vector matvec(const Matrix& w, std::span<const double> v);
Vector matvec_t(const Matrix& w, std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double squared_norm(std::span<const double> v);
Vector scaled(std::span<const double> v, double s);

}  // namespace shadownet
