#pragma once

// Multi-task Lasso by coordinate descent on sufficient statistics.
//
//   min_W  1/(2n) ||X W - Y||_F^2 + lambda * sum_j ||W_j.||_2      (grouped)
//   min_W  1/(2n) ||X W - Y||_F^2 + lambda * sum_jt |W_jt|          (per target)
//
// Every quantity the solver, the duality gap and the cross-validation
// error need is a function of G = X'X/n, C = X'Y/n and ||Y||^2/n, so the
// data are touched once per fold and each sweep costs O(P^2 T).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "udr/core.hpp"
#include "udr/rng.hpp"

namespace udr::lasso {

enum class Penalty { grouped, per_target };
enum class CvRule { min_error, one_standard_error };

/// Normalised sufficient statistics of one regression problem.
struct Gram {
    MatrixD xx;        // P x P, X'X / n
    MatrixD xy;        // P x T, X'Y / n
    std::vector<double> yy_t;  // ||Y_t||^2 / n per target
    double yy = 0.0;   // ||Y||_F^2 / n
    std::size_t n = 0;
};

/// Unnormalised sums; folds add and subtract cheaply.
struct GramSums {
    MatrixD xx, xy;
    std::vector<double> yy_t;
    std::size_t n = 0;

    GramSums(std::size_t p, std::size_t t) : xx(p, p, 0.0), xy(p, t, 0.0), yy_t(t, 0.0) {}

    void accumulate(std::span<const double> x, std::span<const double> y) {
        const std::size_t P = xx.rows(), T = xy.cols();
        for (std::size_t a = 0; a < P; ++a) {
            const double xa = x[a];
            if (xa == 0.0) continue;
            for (std::size_t b = a; b < P; ++b) xx(a, b) += xa * x[b];
            for (std::size_t t = 0; t < T; ++t) xy(a, t) += xa * y[t];
        }
        for (std::size_t t = 0; t < T; ++t) yy_t[t] += y[t] * y[t];
        ++n;
    }

    GramSums& operator-=(const GramSums& o) {
        for (std::size_t i = 0; i < xx.data().size(); ++i) xx.data()[i] -= o.xx.data()[i];
        for (std::size_t i = 0; i < xy.data().size(); ++i) xy.data()[i] -= o.xy.data()[i];
        for (std::size_t t = 0; t < yy_t.size(); ++t) yy_t[t] -= o.yy_t[t];
        n -= o.n;
        return *this;
    }

    GramSums& operator+=(const GramSums& o) {
        for (std::size_t i = 0; i < xx.data().size(); ++i) xx.data()[i] += o.xx.data()[i];
        for (std::size_t i = 0; i < xy.data().size(); ++i) xy.data()[i] += o.xy.data()[i];
        for (std::size_t t = 0; t < yy_t.size(); ++t) yy_t[t] += o.yy_t[t];
        n += o.n;
        return *this;
    }

    Gram normalised() const {
        Gram g{xx, xy, yy_t, 0.0, n};
        const double inv = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
        const std::size_t P = xx.rows();
        for (std::size_t a = 0; a < P; ++a)
            for (std::size_t b = a; b < P; ++b) {
                g.xx(a, b) *= inv;
                g.xx(b, a) = g.xx(a, b);
            }
        for (auto& v : g.xy.data()) v *= inv;
        for (auto& v : g.yy_t) {
            v *= inv;
            g.yy += v;
        }
        return g;
    }
};

inline Gram make_gram(const MatrixD& x, const MatrixD& y) {
    if (x.rows() != y.rows()) throw ValidationError("lasso: X and Y row counts differ");
    GramSums s(x.cols(), y.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) s.accumulate(x.row(r), y.row(r));
    return s.normalised();
}

struct SolverOptions {
    int max_iter = 1000;
    double tol = 1e-4;
    Penalty penalty = Penalty::grouped;
    bool record_objective = false;
};

struct Fit {
    MatrixD weights;  // P x T
    int iterations = 0;
    bool converged = false;
    double dual_gap = 0.0;
    std::vector<double> objective_trace;  // one entry per sweep when recorded
};

inline double penalty_value(const MatrixD& w, Penalty pen) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.rows(); ++j) {
        if (pen == Penalty::grouped) {
            double r = 0.0;
            for (double v : w.row(j)) r += v * v;
            s += std::sqrt(r);
        } else {
            for (double v : w.row(j)) s += std::abs(v);
        }
    }
    return s;
}

/// ||XW - Y||^2 / n from the statistics.
inline double residual_ms(const Gram& g, const MatrixD& w) {
    const std::size_t P = w.rows(), T = w.cols();
    double quad = 0.0, cross = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t a = 0; a < P; ++a) {
            const double wa = w(a, t);
            if (wa == 0.0) continue;
            cross += wa * g.xy(a, t);
            double s = 0.0;
            for (std::size_t b = 0; b < P; ++b) s += g.xx(a, b) * w(b, t);
            quad += wa * s;
        }
    }
    return std::max(0.0, quad - 2.0 * cross + g.yy);
}

inline double objective(const Gram& g, const MatrixD& w, double lambda, Penalty pen) {
    return 0.5 * residual_ms(g, w) + lambda * penalty_value(w, pen);
}

/// Smallest lambda at which W = 0 is optimal.
inline double lambda_max(const Gram& g, Penalty pen) {
    double m = 0.0;
    for (std::size_t j = 0; j < g.xy.rows(); ++j) {
        if (pen == Penalty::grouped) {
            double r = 0.0;
            for (double v : g.xy.row(j)) r += v * v;
            m = std::max(m, std::sqrt(r));
        } else {
            for (double v : g.xy.row(j)) m = std::max(m, std::abs(v));
        }
    }
    return m;
}

/// `count` log-spaced values from lambda_max down to ratio * lambda_max.
inline std::vector<double> lambda_grid(double lmax, int count = 20, double ratio = 1e-3) {
    std::vector<double> out;
    if (lmax <= 0.0) return {0.0};
    if (count <= 1) return {lmax};
    const double lo = std::log(lmax * ratio), hi = std::log(lmax);
    for (int i = 0; i < count; ++i) out.push_back(std::exp(hi + (lo - hi) * i / (count - 1)));
    out.front() = lmax;
    return out;
}

namespace detail {

// Duality gap in normalised units (sklearn's construction divided by n).
inline double dual_gap(const Gram& g, const MatrixD& w, const MatrixD& gw, double lambda, Penalty pen) {
    const std::size_t P = w.rows(), T = w.cols();
    double quad = 0.0, cross = 0.0;
    for (std::size_t a = 0; a < P; ++a)
        for (std::size_t t = 0; t < T; ++t) {
            quad += w(a, t) * gw(a, t);
            cross += w(a, t) * g.xy(a, t);
        }
    if (pen == Penalty::grouped) {
        const double rn = std::max(0.0, quad - 2.0 * cross + g.yy);
        double dual_norm = 0.0;
        for (std::size_t a = 0; a < P; ++a) {
            double s = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                const double v = g.xy(a, t) - gw(a, t);
                s += v * v;
            }
            dual_norm = std::max(dual_norm, std::sqrt(s));
        }
        double c = 1.0, gap;
        if (dual_norm > lambda) {
            c = lambda / dual_norm;
            gap = 0.5 * (rn + rn * c * c);
        } else {
            gap = rn;
        }
        return gap + lambda * penalty_value(w, pen) - c * (g.yy - cross);
    }
    // per target: sum of independent Lasso gaps
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        double q = 0.0, cr = 0.0, l1 = 0.0, dual_norm = 0.0;
        for (std::size_t a = 0; a < P; ++a) {
            q += w(a, t) * gw(a, t);
            cr += w(a, t) * g.xy(a, t);
            l1 += std::abs(w(a, t));
            dual_norm = std::max(dual_norm, std::abs(g.xy(a, t) - gw(a, t)));
        }
        const double rn = std::max(0.0, q - 2.0 * cr + g.yy_t[t]);
        double c = 1.0, gap;
        if (dual_norm > lambda) {
            c = lambda / dual_norm;
            gap = 0.5 * (rn + rn * c * c);
        } else {
            gap = rn;
        }
        total += gap + lambda * l1 - c * (g.yy_t[t] - cr);
    }
    return total;
}

}  // namespace detail

/// Cyclic coordinate descent. Stops after max_iter sweeps or once the
/// largest coefficient update relative to the largest coefficient falls
/// below tol and the duality gap is below tol * ||Y||^2 / n.
inline Fit solve(const Gram& g, double lambda, const SolverOptions& opt, const MatrixD* warm = nullptr) {
    const std::size_t P = g.xy.rows(), T = g.xy.cols();
    Fit fit;
    fit.weights = warm ? *warm : MatrixD(P, T, 0.0);
    MatrixD& w = fit.weights;
    MatrixD gw(P, T, 0.0);  // G * W
    for (std::size_t a = 0; a < P; ++a)
        for (std::size_t b = 0; b < P; ++b) {
            const double gab = g.xx(a, b);
            if (gab == 0.0) continue;
            for (std::size_t t = 0; t < T; ++t) gw(a, t) += gab * w(b, t);
        }
    const double gap_tol = opt.tol * g.yy;
    std::vector<double> tmp(T), delta(T);

    // Visit predictors by decreasing correlation mass with the targets, so
    // the sweep order follows the data rather than the column labels.
    std::vector<double> mass(P, 0.0);
    for (std::size_t j = 0; j < P; ++j)
        for (std::size_t t = 0; t < T; ++t) mass[j] += g.xy(j, t) * g.xy(j, t);
    std::vector<std::size_t> order(P);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mass[a] > mass[b]; });

    for (int it = 0; it < opt.max_iter; ++it) {
        double w_max = 0.0, d_w_max = 0.0;
        for (const std::size_t j : order) {
            const double gjj = g.xx(j, j);
            if (gjj <= 0.0) {
                // zero-variance predictor stays at zero
                for (std::size_t t = 0; t < T; ++t) tmp[t] = 0.0;
            } else {
                for (std::size_t t = 0; t < T; ++t) tmp[t] = g.xy(j, t) - gw(j, t) + gjj * w(j, t);
                if (opt.penalty == Penalty::grouped) {
                    double norm = 0.0;
                    for (double v : tmp) norm += v * v;
                    norm = std::sqrt(norm);
                    const double scale = norm > lambda ? (1.0 - lambda / norm) / gjj : 0.0;
                    for (auto& v : tmp) v *= scale;
                } else {
                    for (auto& v : tmp) {
                        const double mag = std::abs(v) - lambda;
                        v = mag > 0.0 ? std::copysign(mag, v) / gjj : 0.0;
                    }
                }
            }
            bool changed = false;
            for (std::size_t t = 0; t < T; ++t) {
                delta[t] = tmp[t] - w(j, t);
                if (delta[t] != 0.0) changed = true;
                d_w_max = std::max(d_w_max, std::abs(delta[t]));
                w_max = std::max(w_max, std::abs(tmp[t]));
                w(j, t) = tmp[t];
            }
            if (changed) {
                for (std::size_t a = 0; a < P; ++a) {
                    const double gaj = g.xx(a, j);
                    if (gaj == 0.0) continue;
                    for (std::size_t t = 0; t < T; ++t) gw(a, t) += gaj * delta[t];
                }
            }
        }
        fit.iterations = it + 1;
        if (opt.record_objective) fit.objective_trace.push_back(objective(g, w, lambda, opt.penalty));
        if (w_max == 0.0 || d_w_max / w_max < opt.tol || it == opt.max_iter - 1) {
            fit.dual_gap = detail::dual_gap(g, w, gw, lambda, opt.penalty);
            if (fit.dual_gap < gap_tol || w_max == 0.0) {
                fit.converged = true;
                break;
            }
        }
    }
    return fit;
}

struct CvResult {
    std::vector<double> lambdas;   // descending
    std::vector<double> mean_error;
    std::vector<double> std_error;
    std::size_t chosen = 0;
    double lambda() const { return lambdas[chosen]; }
};

struct CvFit {
    Fit fit;
    CvResult cv;
};

struct CvOptions {
    int folds = 3;
    std::vector<double> lambdas;  // empty: default grid from lambda_max
    int grid_size = 20;
    double grid_ratio = 1e-3;
    CvRule rule = CvRule::min_error;
    SolverOptions solver;
};

/// K-fold cross-validated lambda over a warm-started descending path,
/// then a refit on all rows at the chosen lambda.
inline CvFit fit_cv(const MatrixD& x, const MatrixD& y, const CvOptions& opt, std::uint64_t seed) {
    const std::size_t N = x.rows(), P = x.cols(), T = y.cols();
    if (N != y.rows()) throw ValidationError("lasso: X and Y row counts differ");
    const int folds = std::max(1, std::min<int>(opt.folds, static_cast<int>(N)));

    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<GramSums> fold_sums(static_cast<std::size_t>(folds), GramSums(P, T));
    for (std::size_t i = 0; i < N; ++i) {
        const auto r = order[i];
        fold_sums[i % static_cast<std::size_t>(folds)].accumulate(x.row(r), y.row(r));
    }
    GramSums total(P, T);
    for (const auto& f : fold_sums) total += f;
    const Gram full = total.normalised();

    CvResult cv;
    if (!opt.lambdas.empty()) {
        cv.lambdas = opt.lambdas;
        std::sort(cv.lambdas.begin(), cv.lambdas.end(), std::greater<>());
    } else {
        cv.lambdas = lambda_grid(lambda_max(full, opt.solver.penalty), opt.grid_size, opt.grid_ratio);
    }
    const std::size_t G = cv.lambdas.size();
    cv.mean_error.assign(G, 0.0);
    cv.std_error.assign(G, 0.0);

    if (G > 1 && folds > 1) {
        MatrixD errors(static_cast<std::size_t>(folds), G, 0.0);
        SolverOptions path_opt = opt.solver;
        path_opt.record_objective = false;
        for (int f = 0; f < folds; ++f) {
            GramSums train = total;
            train -= fold_sums[static_cast<std::size_t>(f)];
            const Gram tr = train.normalised();
            const Gram va = fold_sums[static_cast<std::size_t>(f)].normalised();
            MatrixD warm(P, T, 0.0);
            for (std::size_t l = 0; l < G; ++l) {
                auto fit = solve(tr, cv.lambdas[l], path_opt, &warm);
                warm = fit.weights;
                errors(static_cast<std::size_t>(f), l) = residual_ms(va, fit.weights) / static_cast<double>(T);
            }
        }
        for (std::size_t l = 0; l < G; ++l) {
            double m = 0.0;
            for (int f = 0; f < folds; ++f) m += errors(static_cast<std::size_t>(f), l);
            m /= folds;
            double v = 0.0;
            for (int f = 0; f < folds; ++f) {
                const double d = errors(static_cast<std::size_t>(f), l) - m;
                v += d * d;
            }
            cv.mean_error[l] = m;
            cv.std_error[l] = std::sqrt(v / folds) / std::sqrt(static_cast<double>(folds));
        }
        std::size_t best = 0;
        for (std::size_t l = 1; l < G; ++l)
            if (cv.mean_error[l] < cv.mean_error[best]) best = l;
        if (opt.rule == CvRule::one_standard_error) {
            const double bound = cv.mean_error[best] + cv.std_error[best];
            for (std::size_t l = 0; l <= best; ++l)
                if (cv.mean_error[l] <= bound) {
                    best = l;
                    break;
                }
        }
        cv.chosen = best;
    }

    // warm-start the refit along the path down to the chosen lambda
    MatrixD warm(P, T, 0.0);
    SolverOptions path_opt = opt.solver;
    path_opt.record_objective = false;
    for (std::size_t l = 0; l < cv.chosen; ++l) warm = solve(full, cv.lambdas[l], path_opt, &warm).weights;
    CvFit out{solve(full, cv.lambda(), opt.solver, &warm), std::move(cv)};
    return out;
}

}  // namespace udr::lasso
