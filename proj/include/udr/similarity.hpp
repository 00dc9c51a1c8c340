#pragma once

// Cross-model latent similarity matrices. Rows index the latents of the
// first model, columns those of the second; entries are absolute
// similarities clipped to [0, 1].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "udr/core.hpp"
#include "udr/lasso.hpp"
#include "udr/rng.hpp"
#include "udr/stats.hpp"

namespace udr {

enum class SimilarityMethod { spearman, lasso };

inline const char* to_string(SimilarityMethod m) { return m == SimilarityMethod::spearman ? "spearman" : "lasso"; }

inline SimilarityMethod similarity_method_from_string(const std::string& s) {
    if (s == "spearman") return SimilarityMethod::spearman;
    if (s == "lasso") return SimilarityMethod::lasso;
    throw ValidationError("unknown similarity method '" + s + "'");
}

struct SimilarityMatrix {
    MatrixD entries;
    SimilarityMethod method = SimilarityMethod::spearman;
};

struct SpearmanOptions {
    std::size_t n_samples = 1000;
};

struct LassoOptions {
    std::size_t n_samples = 10000;
    lasso::CvOptions cv;  // 3 folds, 20-point grid down to 1e-3 * lambda_max
};

struct LassoDiagnostics {
    double lambda = 0.0;
    int iterations = 0;
    bool converged = true;
    double dual_gap = 0.0;
    std::vector<double> objective_trace;
};

struct LassoSimilarity {
    SimilarityMatrix matrix;
    LassoDiagnostics diagnostics;
};

namespace detail {

inline void check_aligned(const LatentResponse& a, const LatentResponse& b) {
    if (a.num_samples() != b.num_samples() || a.sample_ids() != b.sample_ids())
        throw ValidationError("latent responses are not over the same ordered sample set");
}

/// Rows shared by both models: all of them, or a seeded uniform draw
/// without replacement, in ascending order.
inline std::vector<std::size_t> shared_rows(std::size_t n_total, std::size_t n_wanted, std::uint64_t seed) {
    std::vector<std::size_t> rows;
    if (n_wanted == 0 || n_wanted >= n_total) {
        rows.resize(n_total);
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        return rows;
    }
    Rng rng(seed);
    rows = rng.sample_without_replacement(n_total, n_wanted);
    std::sort(rows.begin(), rows.end());
    return rows;
}

/// Centred, unit-norm rank vectors per column (zero vector for a constant column).
inline std::vector<std::vector<double>> unit_rank_columns(const MatrixD& values, const std::vector<std::size_t>& rows) {
    std::vector<std::vector<double>> out(values.cols());
    std::vector<double> col(rows.size());
    for (std::size_t c = 0; c < values.cols(); ++c) {
        for (std::size_t i = 0; i < rows.size(); ++i) col[i] = values(rows[i], c);
        auto r = stats::average_ranks(col);
        const double m = stats::mean(r);
        double ss = 0.0;
        for (auto& v : r) {
            v -= m;
            ss += v * v;
        }
        const double norm = std::sqrt(ss);
        for (auto& v : r) v = norm > 0.0 ? v / norm : 0.0;
        out[c] = std::move(r);
    }
    return out;
}

}  // namespace detail

/// Entry (a, b) = |Spearman(zi_a, zj_b)| over the same sampled rows.
inline SimilarityMatrix spearman_similarity(const LatentResponse& zi, const LatentResponse& zj,
                                            const SpearmanOptions& opt = {}, std::uint64_t seed = 0) {
    detail::check_aligned(zi, zj);
    const auto rows = detail::shared_rows(zi.num_samples(), opt.n_samples, seed);
    const auto ri = detail::unit_rank_columns(zi.values(), rows);
    const auto rj = detail::unit_rank_columns(zj.values(), rows);
    SimilarityMatrix out{MatrixD(ri.size(), rj.size(), 0.0), SimilarityMethod::spearman};
    for (std::size_t a = 0; a < ri.size(); ++a)
        for (std::size_t b = 0; b < rj.size(); ++b) {
            double dot = 0.0;
            for (std::size_t n = 0; n < rows.size(); ++n) dot += ri[a][n] * rj[b][n];
            out.entries(a, b) = std::min(std::abs(dot), 1.0);
        }
    return out;
}

/// Regresses the standardised latents of `zi` on those of `zj` with the
/// multi-task Lasso; entry (a, b) = min(|W(b, a)|, 1).
inline LassoSimilarity lasso_similarity(const LatentResponse& zi, const LatentResponse& zj,
                                        const LassoOptions& opt = {}, std::uint64_t seed = 0) {
    detail::check_aligned(zi, zj);
    const auto rows = detail::shared_rows(zi.num_samples(), opt.n_samples, seed);
    const MatrixD y = stats::standardize_columns(zi.values().select_rows(rows));
    const MatrixD x = stats::standardize_columns(zj.values().select_rows(rows));
    auto cvfit = lasso::fit_cv(x, y, opt.cv, derive_seed(seed, {0x6376ULL}));
    const auto& w = cvfit.fit.weights;
    LassoSimilarity out;
    out.matrix = {MatrixD(y.cols(), x.cols(), 0.0), SimilarityMethod::lasso};
    for (std::size_t a = 0; a < y.cols(); ++a)
        for (std::size_t b = 0; b < x.cols(); ++b) out.matrix.entries(a, b) = std::min(std::abs(w(b, a)), 1.0);
    out.diagnostics = {cvfit.cv.lambda(), cvfit.fit.iterations, cvfit.fit.converged, cvfit.fit.dual_gap,
                       std::move(cvfit.fit.objective_trace)};
    return out;
}

}  // namespace udr
