#include "shadownet/diagnostics.hpp"

#include "shadownet/errors.hpp"
#include "shadownet/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace shadownet {

MomentReport weight_moments(std::span<const double> values) {
    if (values.size() < 4) throw std::invalid_argument("weight_moments: need at least 4 entries");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : values) {
        const double d = v - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    MomentReport r;
    r.mean = mean;
    r.variance = m2;
    r.n_entries = values.size();
    if (m2 > 0.0) {
        r.skewness = m3 / std::pow(m2, 1.5);
        r.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    } else {
        r.skewness = 0.0;
        r.excess_kurtosis = std::numeric_limits<double>::quiet_NaN();
    }
    r.skewness_z = r.skewness / std::sqrt(6.0 / n);
    r.kurtosis_z = r.excess_kurtosis / std::sqrt(24.0 / n);
    return r;
}

MomentReport weight_moments(const Matrix& w) { return weight_moments(w.data()); }

double bias_uniformity(std::span<const double> b) {
    if (b.size() < 2) throw std::invalid_argument("bias_uniformity: need at least 2 entries");
    const double n = static_cast<double>(b.size());
    double mean = 0.0;
    for (double v : b) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : b) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    if (sd == 0.0) return std::numeric_limits<double>::infinity();
    return std::abs(mean) / sd;
}

std::vector<double> jacobi_eigenvalues(Matrix a, double tol, int max_sweeps) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw std::invalid_argument("jacobi_eigenvalues: matrix must be square");
    double total = 0.0;
    for (double v : a.data()) total += v * v;
    const double target = tol * std::sqrt(total);
    for (int sweep = 0; sweep <= max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
        }
        if (std::sqrt(off) <= target) {
            std::vector<double> eig(n);
            for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
            return eig;
        }
        if (sweep == max_sweeps) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    throw NumericFailure("jacobi_eigenvalues: no convergence after " + std::to_string(max_sweeps) + " sweeps");
}

namespace {

Matrix smaller_gram(const Matrix& w) {
    const bool tall = w.rows() >= w.cols();
    const std::size_t s = tall ? w.cols() : w.rows();
    Matrix g(s, s);
    if (tall) {
        for (std::size_t r = 0; r < w.rows(); ++r) {
            const auto row = w.row(r);
            for (std::size_t i = 0; i < s; ++i) {
                if (row[i] == 0.0) continue;
                for (std::size_t j = i; j < s; ++j) g(i, j) += row[i] * row[j];
            }
        }
    } else {
        for (std::size_t i = 0; i < s; ++i) {
            for (std::size_t j = i; j < s; ++j) g(i, j) = dot(w.row(i), w.row(j));
        }
    }
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
    }
    return g;
}

}  // namespace

SpectrumReport singular_spectrum(const Matrix& w, double tol) {
    if (w.rows() < 2 || w.cols() < 2) throw std::invalid_argument("singular_spectrum: need at least 2 rows and 2 columns");
    const std::vector<double> eig = jacobi_eigenvalues(smaller_gram(w), tol);
    SpectrumReport r;
    const std::size_t big = std::max(w.rows(), w.cols());
    r.aspect_ratio = static_cast<double>(std::min(w.rows(), w.cols())) / static_cast<double>(big);
    for (double e : eig) r.singular_values.push_back(std::sqrt(std::max(e, 0.0)));
    std::sort(r.singular_values.begin(), r.singular_values.end(), std::greater<>());
    const double scale = 1.0 / std::sqrt(static_cast<double>(big));
    for (double s : r.singular_values) r.singular_values_scaled.push_back(s * scale);
    r.ks_distance = r.singular_values.size() >= 8 ? spectrum_ks(r) : std::numeric_limits<double>::quiet_NaN();
    return r;
}

double quarter_circle_cdf(double s) {
    if (s <= 0.0) return 0.0;
    if (s >= 2.0) return 1.0;
    return (s * std::sqrt(4.0 - s * s) / 2.0 + 2.0 * std::asin(s / 2.0)) / std::numbers::pi;
}

double mp_cdf(double s, double aspect_ratio) {
    if (!(aspect_ratio > 0.0 && aspect_ratio <= 1.0)) throw std::invalid_argument("mp_cdf: aspect ratio must lie in (0, 1]");
    const double root = std::sqrt(aspect_ratio);
    const double lo = (1.0 - root) * (1.0 - root);
    const double hi = (1.0 + root) * (1.0 + root);
    const double x = s * s;
    if (s <= 0.0 || x <= lo) return 0.0;
    if (x >= hi) return 1.0;
    // x = mid - half cos(theta) turns the square-root edges into sin^2(theta).
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    const double theta_end = std::acos(std::clamp((mid - x) / half, -1.0, 1.0));
    auto f = [&](double theta) {
        const double st = std::sin(theta);
        const double xt = mid - half * std::cos(theta);
        if (xt <= 0.0) return (half * half) / (2.0 * std::numbers::pi * aspect_ratio) * (1.0 + std::cos(theta)) / half;
        return half * half * st * st / (2.0 * std::numbers::pi * aspect_ratio * xt);
    };
    return std::clamp(integrate_simpson(f, 0.0, theta_end, 1e-8, 40), 0.0, 1.0);
}

double spectrum_ks(const SpectrumReport& report) {
    const auto& sv = report.singular_values_scaled;
    if (sv.size() < 8) throw std::invalid_argument("spectrum_ks: need at least 8 singular values");
    std::vector<double> sorted = sv;
    std::sort(sorted.begin(), sorted.end());
    const bool square = report.aspect_ratio >= 1.0;
    const double n = static_cast<double>(sorted.size());
    double ks = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double f = square ? quarter_circle_cdf(sorted[i]) : mp_cdf(sorted[i], report.aspect_ratio);
        ks = std::max({ks, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return ks;
}

HistogramData histogram(std::span<const double> values, std::size_t n_bins) {
    if (values.empty()) throw std::invalid_argument("histogram: empty input");
    if (n_bins == 0) throw std::invalid_argument("histogram: need at least one bin");
    auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    double lo = *lo_it, hi = *hi_it;
    if (lo == hi) {
        lo -= 0.5;
        hi += 0.5;
    }
    HistogramData h;
    const double width = (hi - lo) / static_cast<double>(n_bins);
    for (std::size_t i = 0; i <= n_bins; ++i) h.bin_edges.push_back(lo + width * static_cast<double>(i));
    h.bin_edges.back() = hi;
    h.counts.assign(n_bins, 0);
    for (double v : values) {
        auto bin = static_cast<std::size_t>((v - lo) / width);
        h.counts[std::min(bin, n_bins - 1)]++;
    }
    return h;
}

}  // namespace shadownet
