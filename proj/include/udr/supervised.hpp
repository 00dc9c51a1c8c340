#pragma once

// Supervised disentanglement baselines: the beta-VAE and FactorVAE
// classification metrics, the Mutual Information Gap and DCI
// Disentanglement. All return a score in [0, 1] plus a diagnostic string
// that is non-empty whenever a degenerate case was hit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "udr/core.hpp"
#include "udr/lasso.hpp"
#include "udr/rng.hpp"
#include "udr/stats.hpp"

namespace udr::metrics {

struct MetricResult {
    double score = 0.0;
    std::string diagnostic;
};

/// Maps a batch of factor assignments (rows) to latent mean vectors.
class EncoderOracle {
public:
    using EncodeFn = std::function<MatrixD(const MatrixI&)>;

    EncoderOracle(EncodeFn fn, std::size_t latent_dim) : fn_(std::move(fn)), latent_dim_(latent_dim) {}

    template <typename Encoder>
        requires requires(const Encoder& e, const MatrixI& f) {
            { e.encode(f) } -> std::convertible_to<MatrixD>;
            { e.latent_dim() } -> std::convertible_to<std::size_t>;
        }
    static EncoderOracle from(std::shared_ptr<const Encoder> enc) {
        const auto dim = enc->latent_dim();
        return EncoderOracle([enc](const MatrixI& f) { return enc->encode(f); }, dim);
    }

    MatrixD encode(const MatrixI& factors) const {
        auto out = fn_(factors);
        if (out.rows() != factors.rows() || out.cols() != latent_dim_)
            throw ValidationError("encoder oracle returned a matrix of the wrong shape");
        return out;
    }
    std::size_t latent_dim() const noexcept { return latent_dim_; }

private:
    EncodeFn fn_;
    std::size_t latent_dim_;
};

/// Oracle backed by a stored response over a factor grid: looks each
/// requested assignment up among the grid's rows.
inline EncoderOracle grid_lookup_oracle(const FactorGrid& grid, const LatentResponse& response) {
    if (grid.size() != response.num_samples())
        throw ValidationError("grid lookup oracle: grid and response row counts differ");
    auto index = std::make_shared<std::unordered_map<std::uint64_t, std::size_t>>();
    for (std::size_t n = 0; n < grid.size(); ++n) index->emplace(grid.spec().flat_index(grid.assignments().row(n)), n);
    auto spec = grid.spec();
    auto values = std::make_shared<MatrixD>(response.values());
    return EncoderOracle(
        [index, spec, values](const MatrixI& f) {
            MatrixD out(f.rows(), values->cols());
            for (std::size_t r = 0; r < f.rows(); ++r) {
                auto it = index->find(spec.flat_index(f.row(r)));
                if (it == index->end())
                    throw ValidationError("factor combination not present in the stored grid");
                auto src = values->row(it->second);
                std::copy(src.begin(), src.end(), out.row(r).begin());
            }
            return out;
        },
        response.num_latents());
}

namespace detail {

/// `n` uniformly drawn assignments; factor `fixed` (if >= 0) held at `value`.
inline MatrixI sample_factors(const FactorSpec& spec, Rng& rng, std::size_t n, int fixed = -1, int value = 0) {
    MatrixI out(n, spec.size());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < spec.size(); ++k)
            out(r, k) = static_cast<int>(k) == fixed
                            ? value
                            : static_cast<std::int32_t>(rng.uniform_int(static_cast<std::uint64_t>(spec[k].cardinality)));
    return out;
}

inline std::vector<double> column_variances(const MatrixD& z, int ddof) {
    std::vector<double> out(z.cols());
    for (std::size_t c = 0; c < z.cols(); ++c) out[c] = stats::variance(z.col(c), ddof);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// beta-VAE metric

struct BetaVaeOptions {
    std::size_t n_train = 10000;
    std::size_t n_test = 5000;
    std::size_t batch = 64;
    bool absolute_differences = true;  // false: signed mean of differences
    int epochs = 200;
    double learning_rate = 0.1;
    double l2 = 1e-4;
};

/// Multinomial logistic regression trained by full-batch gradient descent
/// on standardised inputs.
class LinearClassifier {
public:
    void fit(const MatrixD& x, const std::vector<int>& labels, int classes, int epochs, double lr, double l2) {
        const std::size_t n = x.rows(), d = x.cols();
        const auto k = static_cast<std::size_t>(classes);
        auto mom = stats::column_moments(x);
        mean_ = mom.mean;
        sd_ = mom.sd;
        const MatrixD xs = standardize(x);
        w_ = MatrixD(k, d + 1, 0.0);
        MatrixD grad(k, d + 1);
        std::vector<double> p(k);
        for (int e = 0; e < epochs; ++e) {
            std::fill(grad.data().begin(), grad.data().end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                probabilities(xs.row(i), p);
                for (std::size_t c = 0; c < k; ++c) {
                    const double err = p[c] - (labels[i] == static_cast<int>(c) ? 1.0 : 0.0);
                    for (std::size_t j = 0; j < d; ++j) grad(c, j) += err * xs(i, j);
                    grad(c, d) += err;
                }
            }
            for (std::size_t c = 0; c < k; ++c)
                for (std::size_t j = 0; j <= d; ++j) {
                    double g = grad(c, j) / static_cast<double>(n);
                    if (j < d) g += l2 * w_(c, j);
                    w_(c, j) -= lr * g;
                }
        }
    }

    int predict(std::span<const double> x) const {
        std::vector<double> xs(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) xs[j] = sd_[j] > 0.0 ? (x[j] - mean_[j]) / sd_[j] : 0.0;
        std::vector<double> p(w_.rows());
        probabilities(xs, p);
        return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    }

private:
    MatrixD standardize(const MatrixD& x) const {
        MatrixD out(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = sd_[j] > 0.0 ? (x(i, j) - mean_[j]) / sd_[j] : 0.0;
        return out;
    }

    void probabilities(std::span<const double> x, std::vector<double>& p) const {
        const std::size_t d = x.size();
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < w_.rows(); ++c) {
            double s = w_(c, d);
            for (std::size_t j = 0; j < d; ++j) s += w_(c, j) * x[j];
            p[c] = s;
            mx = std::max(mx, s);
        }
        double total = 0.0;
        for (auto& v : p) {
            v = std::exp(v - mx);
            total += v;
        }
        for (auto& v : p) v /= total;
    }

    std::vector<double> mean_, sd_;
    MatrixD w_;
};

namespace detail {

inline void beta_vae_points(const EncoderOracle& oracle, const FactorSpec& spec, const BetaVaeOptions& opt,
                            std::size_t count, Rng& rng, MatrixD& features, std::vector<int>& labels) {
    const std::size_t L = oracle.latent_dim();
    const auto K = spec.size();
    features = MatrixD(count, L, 0.0);
    labels.assign(count, 0);
    for (std::size_t i = 0; i < count; ++i) {
        const int k = static_cast<int>(rng.uniform_int(K));
        const int value = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec[static_cast<std::size_t>(k)].cardinality)));
        const auto z1 = oracle.encode(sample_factors(spec, rng, opt.batch, k, value));
        const auto z2 = oracle.encode(sample_factors(spec, rng, opt.batch, k, value));
        auto f = features.row(i);
        for (std::size_t b = 0; b < opt.batch; ++b)
            for (std::size_t l = 0; l < L; ++l) {
                const double diff = z1(b, l) - z2(b, l);
                f[l] += opt.absolute_differences ? std::abs(diff) : diff;
            }
        for (auto& v : f) v /= static_cast<double>(opt.batch);
        labels[i] = k;
    }
}

}  // namespace detail

/// Accuracy of a linear classifier predicting which factor was held fixed
/// from batch-averaged latent differences.
inline MetricResult beta_vae_metric(const EncoderOracle& oracle, const FactorSpec& spec,
                                    const BetaVaeOptions& opt = {}, std::uint64_t seed = 0) {
    if (spec.size() < 2) throw ValidationError("beta-VAE metric needs K >= 2 factors");
    Rng rng(seed);
    MatrixD train_x, test_x;
    std::vector<int> train_y, test_y;
    detail::beta_vae_points(oracle, spec, opt, opt.n_train, rng, train_x, train_y);
    detail::beta_vae_points(oracle, spec, opt, opt.n_test, rng, test_x, test_y);
    LinearClassifier clf;
    clf.fit(train_x, train_y, static_cast<int>(spec.size()), opt.epochs, opt.learning_rate, opt.l2);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_x.rows(); ++i)
        if (clf.predict(test_x.row(i)) == test_y[i]) ++correct;
    return {static_cast<double>(correct) / static_cast<double>(std::max<std::size_t>(1, test_x.rows())), {}};
}

// ---------------------------------------------------------------------------
// FactorVAE metric

struct FactorVaeOptions {
    std::size_t n_prune = 10000;
    std::size_t n_votes = 10000;
    std::size_t n_test = 5000;
    std::size_t batch = 64;
    double var_threshold = 0.05;
};

struct FactorVaeResult {
    MetricResult result;
    std::vector<bool> kept;                // latents surviving the variance prune
    std::vector<std::vector<int>> votes;   // [latent][factor]
};

inline FactorVaeResult factorvae_metric_detailed(const EncoderOracle& oracle, const FactorSpec& spec,
                                                 const FactorVaeOptions& opt = {}, std::uint64_t seed = 0) {
    const std::size_t L = oracle.latent_dim();
    const std::size_t K = spec.size();
    Rng rng(seed);
    FactorVaeResult out;
    const auto global_var = detail::column_variances(oracle.encode(detail::sample_factors(spec, rng, opt.n_prune)), 1);
    out.kept.resize(L);
    bool any = false;
    for (std::size_t l = 0; l < L; ++l) {
        out.kept[l] = global_var[l] >= opt.var_threshold;
        any = any || out.kept[l];
    }
    out.votes.assign(L, std::vector<int>(K, 0));
    if (!any) {
        out.result = {0.0, "all latents pruned: every global variance is below " + std::to_string(opt.var_threshold)};
        return out;
    }

    auto draw = [&](int& label) {
        const int k = static_cast<int>(rng.uniform_int(K));
        const int value = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec[static_cast<std::size_t>(k)].cardinality)));
        const auto var = detail::column_variances(oracle.encode(detail::sample_factors(spec, rng, opt.batch, k, value)), 1);
        std::size_t best = L;
        double best_v = std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < L; ++l) {
            if (!out.kept[l]) continue;
            const double v = var[l] / global_var[l];
            if (v < best_v) {
                best_v = v;
                best = l;
            }
        }
        label = k;
        return best;
    };

    for (std::size_t i = 0; i < opt.n_votes; ++i) {
        int label;
        const auto l = draw(label);
        ++out.votes[l][static_cast<std::size_t>(label)];
    }
    std::vector<int> classify(L, 0);
    for (std::size_t l = 0; l < L; ++l)
        classify[l] = static_cast<int>(std::max_element(out.votes[l].begin(), out.votes[l].end()) - out.votes[l].begin());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < opt.n_test; ++i) {
        int label;
        const auto l = draw(label);
        if (classify[l] == label) ++correct;
    }
    out.result.score = static_cast<double>(correct) / static_cast<double>(std::max<std::size_t>(1, opt.n_test));
    return out;
}

/// Majority-vote accuracy from the argmin normalised-variance latent.
inline MetricResult factorvae_metric(const EncoderOracle& oracle, const FactorSpec& spec,
                                     const FactorVaeOptions& opt = {}, std::uint64_t seed = 0) {
    return factorvae_metric_detailed(oracle, spec, opt, seed).result;
}

// ---------------------------------------------------------------------------
// Mutual Information Gap

enum class Binning { equal_width, quantile };

struct MigOptions {
    std::size_t n_samples = 10000;
    int bins = 20;
    Binning binning = Binning::equal_width;
};

/// Bin index per value: equal-width over the observed range, or by rank
/// (ties share a bin, so any strictly monotone transform maps to the same bins).
inline std::vector<int> discretize(std::span<const double> x, int bins, Binning binning) {
    std::vector<int> out(x.size(), 0);
    if (x.empty()) return out;
    if (binning == Binning::quantile) {
        const auto r = stats::average_ranks(x);
        const double n = static_cast<double>(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            out[i] = std::min(bins - 1, static_cast<int>(std::floor((r[i] - 1.0) * bins / n)));
        return out;
    }
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) return out;
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = std::clamp(static_cast<int>(std::floor((x[i] - lo) / (hi - lo) * bins)), 0, bins - 1);
    return out;
}

/// Plug-in mutual information (nats) between two discrete label vectors.
inline double discrete_mutual_information(const std::vector<int>& a, int na, const std::vector<int>& b, int nb) {
    std::vector<double> joint(static_cast<std::size_t>(na * nb), 0.0), pa(static_cast<std::size_t>(na), 0.0),
        pb(static_cast<std::size_t>(nb), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[static_cast<std::size_t>(a[i] * nb + b[i])] += 1.0;
        pa[static_cast<std::size_t>(a[i])] += 1.0;
        pb[static_cast<std::size_t>(b[i])] += 1.0;
    }
    const double n = static_cast<double>(a.size());
    double mi = 0.0;
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < nb; ++j) {
            const double c = joint[static_cast<std::size_t>(i * nb + j)];
            if (c > 0.0) mi += c / n * std::log(c * n / (pa[static_cast<std::size_t>(i)] * pb[static_cast<std::size_t>(j)]));
        }
    return std::max(0.0, mi);
}

inline MetricResult mutual_information_gap(const MatrixD& latents, const MatrixI& factors, const MigOptions& opt = {},
                                           std::uint64_t seed = 0) {
    if (latents.rows() != factors.rows()) throw ValidationError("MIG: latents and factors have different row counts");
    if (opt.bins < 2) throw ValidationError("MIG: need at least 2 bins");
    if (latents.rows() < static_cast<std::size_t>(opt.bins)) throw ValidationError("MIG: fewer samples than bins");
    std::vector<std::size_t> rows(latents.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    if (opt.n_samples > 0 && opt.n_samples < rows.size()) {
        Rng rng(seed);
        rows = rng.sample_without_replacement(latents.rows(), opt.n_samples);
        std::sort(rows.begin(), rows.end());
    }
    const std::size_t L = latents.cols(), K = factors.cols();
    std::vector<std::vector<int>> zb(L);
    std::vector<double> col(rows.size());
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t i = 0; i < rows.size(); ++i) col[i] = latents(rows[i], l);
        zb[l] = discretize(col, opt.bins, opt.binning);
    }
    double total = 0.0;
    int used = 0;
    std::string diag;
    for (std::size_t k = 0; k < K; ++k) {
        // relabel observed factor values as 0..m-1
        std::vector<int> v(rows.size());
        std::unordered_map<int, int> code;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto [it, inserted] = code.emplace(factors(rows[i], k), static_cast<int>(code.size()));
            v[i] = it->second;
        }
        const int m = static_cast<int>(code.size());
        if (m < 2) {
            diag += (diag.empty() ? "" : "; ") + std::string("factor ") + std::to_string(k) + " constant in sample, excluded";
            continue;
        }
        std::vector<double> counts(static_cast<std::size_t>(m), 0.0);
        for (int x : v) counts[static_cast<std::size_t>(x)] += 1.0;
        const double h = stats::entropy_from_counts(counts);
        std::vector<double> mi(L);
        for (std::size_t l = 0; l < L; ++l) mi[l] = discrete_mutual_information(zb[l], opt.bins, v, m);
        std::sort(mi.begin(), mi.end(), std::greater<>());
        const double second = L > 1 ? mi[1] : 0.0;
        total += std::max(0.0, (mi[0] - second) / h);
        ++used;
    }
    if (used == 0) return {0.0, diag.empty() ? "no usable factors" : diag};
    return {std::clamp(total / used, 0.0, 1.0), diag};
}

// ---------------------------------------------------------------------------
// DCI Disentanglement

enum class ImportanceMethod { lasso, tree_ensemble };

struct DciOptions {
    ImportanceMethod method = ImportanceMethod::lasso;
    std::size_t n_train = 10000;
    std::size_t n_test = 1000;
    lasso::CvOptions lasso = [] {
        lasso::CvOptions o;
        o.rule = lasso::CvRule::one_standard_error;
        o.solver.penalty = lasso::Penalty::per_target;
        return o;
    }();
    int n_trees = 10;
    int max_depth = 4;
    std::size_t min_leaf = 5;
};

/// Disentanglement from a K x L importance matrix: one minus the base-K
/// entropy of each latent's importance distribution over factors, weighted
/// by the latent's share of total importance.
inline MetricResult dci_from_importance(const MatrixD& importance) {
    const std::size_t K = importance.rows(), L = importance.cols();
    if (K < 2) throw ValidationError("DCI needs K >= 2 factors");
    double total = 0.0;
    for (double v : importance.data()) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("importance entries must be finite and >= 0");
        total += v;
    }
    if (total <= 0.0) return {0.0, "all-zero importance matrix"};
    double d = 0.0;
    const double log_k = std::log(static_cast<double>(K));
    for (std::size_t l = 0; l < L; ++l) {
        double col = 0.0;
        for (std::size_t k = 0; k < K; ++k) col += importance(k, l);
        if (col <= 0.0) continue;
        double h = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double p = importance(k, l) / col;
            if (p > 0.0) h -= p * std::log(p) / log_k;
        }
        d += (col / total) * (1.0 - h);
    }
    return {std::clamp(d, 0.0, 1.0), {}};
}

namespace detail {

struct TreeFit {
    std::vector<double> importance;  // per feature, unnormalised impurity decrease
};

inline void grow(const MatrixD& x, const std::vector<double>& y, std::vector<std::size_t>& idx, std::size_t lo,
                 std::size_t hi, int depth, const DciOptions& opt, std::vector<double>& imp) {
    const std::size_t n = hi - lo;
    if (depth >= opt.max_depth || n < 2 * opt.min_leaf) return;
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
        sum += y[idx[i]];
        sq += y[idx[i]] * y[idx[i]];
    }
    const double sse = sq - sum * sum / static_cast<double>(n);
    if (sse <= 1e-12) return;

    double best_gain = 0.0;
    std::size_t best_feat = x.cols(), best_pos = 0;
    std::vector<std::size_t> work(idx.begin() + static_cast<std::ptrdiff_t>(lo), idx.begin() + static_cast<std::ptrdiff_t>(hi));
    for (std::size_t f = 0; f < x.cols(); ++f) {
        std::sort(work.begin(), work.end(), [&](std::size_t a, std::size_t b) { return x(a, f) < x(b, f); });
        double ls = 0.0, lq = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double v = y[work[i]];
            ls += v;
            lq += v * v;
            const std::size_t nl = i + 1, nr = n - nl;
            if (nl < opt.min_leaf || nr < opt.min_leaf) continue;
            if (x(work[i], f) == x(work[i + 1], f)) continue;
            const double rs = sum - ls, rq = sq - lq;
            const double child = (lq - ls * ls / static_cast<double>(nl)) + (rq - rs * rs / static_cast<double>(nr));
            const double gain = sse - child;
            if (gain > best_gain + 1e-12) {
                best_gain = gain;
                best_feat = f;
                best_pos = nl;
            }
        }
    }
    if (best_feat == x.cols()) return;
    std::sort(work.begin(), work.end(), [&](std::size_t a, std::size_t b) { return x(a, best_feat) < x(b, best_feat); });
    std::copy(work.begin(), work.end(), idx.begin() + static_cast<std::ptrdiff_t>(lo));
    imp[best_feat] += best_gain;
    grow(x, y, idx, lo, lo + best_pos, depth + 1, opt, imp);
    grow(x, y, idx, lo + best_pos, hi, depth + 1, opt, imp);
}

}  // namespace detail

/// K x L importance matrix of latents for predicting each factor.
inline MatrixD importance_matrix(const MatrixD& latents, const MatrixI& factors, const DciOptions& opt = {},
                                 std::uint64_t seed = 0, std::string* diagnostic = nullptr) {
    if (latents.rows() != factors.rows()) throw ValidationError("DCI: latents and factors have different row counts");
    const std::size_t N = latents.rows(), L = latents.cols(), K = factors.cols();
    Rng rng(seed);
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    const std::size_t n_train = std::min(opt.n_train, N);
    std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::sort(train.begin(), train.end());
    const MatrixD x = latents.select_rows(train);
    MatrixD y(n_train, K);
    for (std::size_t i = 0; i < n_train; ++i)
        for (std::size_t k = 0; k < K; ++k) y(i, k) = factors(train[i], k);

    MatrixD imp(K, L, 0.0);
    if (opt.method == ImportanceMethod::lasso) {
        auto fit = lasso::fit_cv(stats::standardize_columns(x), stats::standardize_columns(y), opt.lasso,
                                 derive_seed(seed, {0x646369ULL}));
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t l = 0; l < L; ++l) imp(k, l) = std::abs(fit.fit.weights(l, k));
        if (diagnostic && !fit.fit.converged) *diagnostic = "lasso did not converge within the iteration cap";
        return imp;
    }
    for (std::size_t k = 0; k < K; ++k) {
        const auto target = y.col(k);
        std::vector<double> acc(L, 0.0);
        for (int t = 0; t < opt.n_trees; ++t) {
            std::vector<std::size_t> idx(n_train);
            for (auto& v : idx) v = static_cast<std::size_t>(rng.uniform_int(n_train));
            std::vector<double> tree_imp(L, 0.0);
            detail::grow(x, target, idx, 0, n_train, 0, opt, tree_imp);
            const double s = std::accumulate(tree_imp.begin(), tree_imp.end(), 0.0);
            if (s > 0.0)
                for (std::size_t l = 0; l < L; ++l) acc[l] += tree_imp[l] / s;
        }
        for (std::size_t l = 0; l < L; ++l) imp(k, l) = acc[l] / opt.n_trees;
    }
    return imp;
}

inline MetricResult dci_disentanglement(const MatrixD& latents, const MatrixI& factors, const DciOptions& opt = {},
                                        std::uint64_t seed = 0) {
    if (factors.cols() < 2) throw ValidationError("DCI needs K >= 2 factors");
    std::string diag;
    auto imp = importance_matrix(latents, factors, opt, seed, &diag);
    auto res = dci_from_importance(imp);
    if (!diag.empty()) res.diagnostic = res.diagnostic.empty() ? diag : res.diagnostic + "; " + diag;
    return res;
}

}  // namespace udr::metrics
