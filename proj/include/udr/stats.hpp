#pragma once

// Small statistics kernels: ranks, rank correlation, order statistics.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "udr/core.hpp"

namespace udr::stats {

/// 1-based ranks with ties assigned their average rank.
inline std::vector<double> average_ranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && x[order[j]] == x[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j + 1);  // mean of ranks i+1..j
        for (std::size_t t = i; t < j; ++t) ranks[order[t]] = avg;
        i = j;
    }
    return ranks;
}

inline double mean(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

/// Variance with the given delta degrees of freedom.
inline double variance(std::span<const double> x, int ddof = 0) {
    if (x.size() <= static_cast<std::size_t>(ddof)) return 0.0;
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - static_cast<std::size_t>(ddof));
}

/// Pearson correlation; 0 when either input is constant.
inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Spearman rank correlation with average-rank ties; 0 for constant input.
inline double spearman(std::span<const double> x, std::span<const double> y) {
    auto rx = average_ranks(x);
    auto ry = average_ranks(y);
    return pearson(rx, ry);
}

/// Median; the mean of the two central values for even counts.
inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty sequence");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Quantile by linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw std::invalid_argument("quantile of empty sequence");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

/// Plug-in entropy (nats) of a count vector.
inline double entropy_from_counts(std::span<const double> counts) {
    double total = 0.0;
    for (double c : counts) total += c;
    if (total <= 0.0) return 0.0;
    double h = 0.0;
    for (double c : counts) {
        if (c > 0.0) {
            const double p = c / total;
            h -= p * std::log(p);
        }
    }
    return h;
}

/// Column means and population standard deviations.
struct ColumnMoments {
    std::vector<double> mean;
    std::vector<double> sd;
};

inline ColumnMoments column_moments(const MatrixD& m) {
    ColumnMoments out{std::vector<double>(m.cols(), 0.0), std::vector<double>(m.cols(), 0.0)};
    const double n = static_cast<double>(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out.mean[c] += m(r, c);
    for (auto& v : out.mean) v /= n;
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) {
            const double d = m(r, c) - out.mean[c];
            out.sd[c] += d * d;
        }
    for (auto& v : out.sd) v = std::sqrt(v / n);
    return out;
}

/// Zero mean, unit variance per column; zero-variance columns become all zero.
inline MatrixD standardize_columns(const MatrixD& m) {
    auto mom = column_moments(m);
    MatrixD out(m.rows(), m.cols());
    for (std::size_t c = 0; c < m.cols(); ++c) {
        // relative guard so round-off on a constant column does not get amplified
        const bool degenerate = mom.sd[c] <= 1e-12 * std::max(1.0, std::abs(mom.mean[c]));
        for (std::size_t r = 0; r < m.rows(); ++r)
            out(r, c) = degenerate ? 0.0 : (m(r, c) - mom.mean[c]) / mom.sd[c];
    }
    return out;
}

}  // namespace udr::stats
