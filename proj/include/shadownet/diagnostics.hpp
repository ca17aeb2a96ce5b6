#pragma once

// Random-like weight checks: entry moments, bias uniformity, and the singular
// spectrum against the quarter-circle / Marchenko-Pastur laws.

#include "shadownet/core_math.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace shadownet {

struct MomentReport {
    double mean = 0.0;
    double variance = 0.0;  // population (divides by n)
    double skewness = 0.0;
    double excess_kurtosis = 0.0;  // NaN when the variance is 0
    std::size_t n_entries = 0;
    double skewness_z = 0.0;  // skewness / sqrt(6/n)
    double kurtosis_z = 0.0;  // excess_kurtosis / sqrt(24/n)
};

MomentReport weight_moments(std::span<const double> values);
MomentReport weight_moments(const Matrix& w);

inline constexpr double kUniformityThreshold = 5.0;

/// |mean| / std (population); +infinity when std is 0.
double bias_uniformity(std::span<const double> b);
inline bool uniform_like(double ratio) { return ratio >= kUniformityThreshold; }

struct SpectrumReport {
    std::vector<double> singular_values;         // descending
    std::vector<double> singular_values_scaled;  // divided by sqrt(max(rows, cols)), descending
    double aspect_ratio = 1.0;                   // min(rows, cols) / max(rows, cols)
    double ks_distance = 0.0;                    // NaN with fewer than 8 values
};

/// Singular values from a cyclic Jacobi eigen-decomposition of the smaller
/// Gram matrix. Converged once the off-diagonal Frobenius norm falls below
/// tol times the Gram matrix's Frobenius norm; throws NumericFailure after
/// 100 sweeps.
SpectrumReport singular_spectrum(const Matrix& w, double tol = 1e-10);

/// Symmetric eigenvalues (unsorted) by cyclic Jacobi; same stopping rule.
std::vector<double> jacobi_eigenvalues(Matrix a, double tol = 1e-10, int max_sweeps = 100);

double quarter_circle_cdf(double s);
/// CDF of a scaled singular value whose square follows Marchenko-Pastur with
/// the given aspect ratio (0 < ratio <= 1).
double mp_cdf(double s, double aspect_ratio);

/// KS distance between the scaled singular values and the reference law
/// (quarter circle for aspect ratio 1, Marchenko-Pastur otherwise).
double spectrum_ks(const SpectrumReport& report);

struct HistogramData {
    std::vector<double> bin_edges;
    std::vector<std::size_t> counts;
};

/// Equal-width bins over [min, max]; the last bin is closed on the right.
/// A constant sample uses the range [v - 0.5, v + 0.5].
HistogramData histogram(std::span<const double> values, std::size_t n_bins);

}  // namespace shadownet
