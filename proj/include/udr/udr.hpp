#pragma once

// Unsupervised Disentanglement Ranking.
//
// Each model is compared against P partner models. A comparison builds the
// similarity matrix R between the two models' latents and scores how close
// R is to a one-to-one matching over the informative latents; the model's
// score is the median over its partners.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "udr/core.hpp"
#include "udr/parallel.hpp"
#include "udr/rng.hpp"
#include "udr/similarity.hpp"
#include "udr/stats.hpp"

namespace udr {

/// KL strictly above this marks a latent as informative.
inline constexpr double kKlThreshold = 0.01;

struct InformativeMask {
    std::vector<bool> mask;
    int d = 0;
};

inline InformativeMask informative_mask(const std::vector<double>& kl) {
    InformativeMask out;
    out.mask.reserve(kl.size());
    for (double v : kl) {
        if (!(v >= 0.0)) throw ValidationError("informative_mask: KL entries must be >= 0");
        out.mask.push_back(v > kKlThreshold);
        if (v > kKlThreshold) ++out.d;
    }
    return out;
}

/// Which latents enter the row and column sums that normalise each maximum.
/// `informative` restricts them to informative latents, so uninformative
/// latents drop out of the score entirely; `all` sums over every latent.
enum class DenominatorScope { informative, all };

struct PairScore {
    std::string model_i;
    std::string model_j;
    double score = 0.0;
    int d_i = 0;
    int d_j = 0;
};

/// Pairwise score of a similarity matrix. Rows belong to the model with
/// `kl_rows`, columns to the model with `kl_cols`. A row or column with no
/// similarity mass contributes 0, and two fully collapsed models score 0.
inline PairScore udr_pair_score(const MatrixD& r, const std::vector<double>& kl_rows,
                                const std::vector<double>& kl_cols,
                                DenominatorScope scope = DenominatorScope::informative) {
    if (r.rows() != kl_rows.size() || r.cols() != kl_cols.size())
        throw ValidationError("udr_pair_score: similarity matrix does not match KL vector lengths");
    const auto mi = informative_mask(kl_rows);
    const auto mj = informative_mask(kl_cols);
    PairScore out;
    out.d_i = mi.d;
    out.d_j = mj.d;
    if (mi.d + mj.d == 0) return out;

    const bool restrict = scope == DenominatorScope::informative;
    double total = 0.0;
    for (std::size_t b = 0; b < r.cols(); ++b) {
        if (!mj.mask[b]) continue;
        double mx = 0.0, sum = 0.0;
        for (std::size_t a = 0; a < r.rows(); ++a) {
            if (restrict && !mi.mask[a]) continue;
            mx = std::max(mx, r(a, b));
            sum += r(a, b);
        }
        if (sum > 0.0) total += mx * mx / sum;
    }
    for (std::size_t a = 0; a < r.rows(); ++a) {
        if (!mi.mask[a]) continue;
        double mx = 0.0, sum = 0.0;
        for (std::size_t b = 0; b < r.cols(); ++b) {
            if (restrict && !mj.mask[b]) continue;
            mx = std::max(mx, r(a, b));
            sum += r(a, b);
        }
        if (sum > 0.0) total += mx * mx / sum;
    }
    out.score = std::clamp(total / static_cast<double>(mi.d + mj.d), 0.0, 1.0);
    return out;
}

enum class PairingMode { within_hyper, all_to_all };

inline const char* to_string(PairingMode m) { return m == PairingMode::within_hyper ? "within_hyper" : "all_to_all"; }

struct PairingPlan {
    PairingMode mode = PairingMode::within_hyper;
    int p = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::size_t>> partners;  // by record index; empty = not scored
    bool capped = false;  // some model had fewer than P candidates
};

struct PairingOptions {
    /// all_to_all only: restrict the pool to this many randomly chosen seeds
    /// per hyper (0 = every model).
    int a2a_seeds_per_hyper = 0;
};

inline PairingPlan build_pairing_plan(const ModelSet& set, PairingMode mode, int p, std::uint64_t seed,
                                      const PairingOptions& opt = {}) {
    if (p < 1) throw ValidationError("pairing plan needs P >= 1");
    const std::size_t M = set.size();
    PairingPlan plan{mode, p, seed, std::vector<std::vector<std::size_t>>(M), false};

    std::vector<bool> in_pool(M, true);
    if (mode == PairingMode::all_to_all) {
        if (M < 2) throw ValidationError("all-to-all pairing needs at least 2 models");
        if (opt.a2a_seeds_per_hyper > 0) {
            std::map<int, std::vector<std::size_t>> by_hyper;
            for (std::size_t i = 0; i < M; ++i) by_hyper[set[i].hyper_index].push_back(i);
            std::fill(in_pool.begin(), in_pool.end(), false);
            Rng rng(derive_seed(seed, {0x706f6f6cULL}));
            for (auto& [h, idx] : by_hyper) {
                auto pick = rng.sample_without_replacement(idx.size(), static_cast<std::size_t>(opt.a2a_seeds_per_hyper));
                for (auto k : pick) in_pool[idx[k]] = true;
            }
        }
    }

    for (std::size_t i = 0; i < M; ++i) {
        if (!in_pool[i]) continue;
        std::vector<std::size_t> candidates;
        for (std::size_t j = 0; j < M; ++j) {
            if (j == i || !in_pool[j]) continue;
            if (mode == PairingMode::within_hyper && set[j].hyper_index != set[i].hyper_index) continue;
            candidates.push_back(j);
        }
        if (candidates.empty())
            throw ValidationError("model '" + set[i].model_id + "' has no pairing candidates (need S >= 2)");
        if (static_cast<std::size_t>(p) > candidates.size()) plan.capped = true;
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
        auto pick = rng.sample_without_replacement(candidates.size(), static_cast<std::size_t>(p));
        for (auto k : pick) plan.partners[i].push_back(candidates[k]);
    }
    return plan;
}

struct SimilarityConfig {
    SimilarityMethod method = SimilarityMethod::lasso;
    SpearmanOptions spearman;
    LassoOptions lasso;
    DenominatorScope scope = DenominatorScope::informative;
};

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed for an unordered model pair; identical for (i, j) and (j, i).
inline std::uint64_t pair_seed(std::uint64_t seed, const std::string& a, const std::string& b) {
    const auto ha = fnv1a(a), hb = fnv1a(b);
    return derive_seed(seed, {std::min(ha, hb), std::max(ha, hb)});
}

/// Score of one unordered pair. Spearman similarity is symmetric, so one
/// matrix serves both directions; Lasso is directional and the two
/// regressions' scores are averaged.
inline PairScore score_pair(const ModelRecord& mi, const ModelRecord& mj, const SimilarityConfig& cfg,
                            std::uint64_t seed) {
    const auto s = pair_seed(seed, mi.model_id, mj.model_id);
    const auto& ri = mi.response;
    const auto& rj = mj.response;
    PairScore out;
    if (cfg.method == SimilarityMethod::spearman) {
        auto sim = spearman_similarity(ri, rj, cfg.spearman, s);
        out = udr_pair_score(sim.entries, ri.kl(), rj.kl(), cfg.scope);
    } else {
        auto forward = lasso_similarity(ri, rj, cfg.lasso, s);   // predicts i from j
        auto backward = lasso_similarity(rj, ri, cfg.lasso, s);  // predicts j from i
        auto a = udr_pair_score(forward.matrix.entries, ri.kl(), rj.kl(), cfg.scope);
        auto b = udr_pair_score(backward.matrix.entries, rj.kl(), ri.kl(), cfg.scope);
        out = a;
        out.score = 0.5 * (a.score + b.score);
    }
    out.model_i = mi.model_id;
    out.model_j = mj.model_id;
    return out;
}

/// Lazily computed, memoised pair scores over one model set.
class PairScoreCache {
public:
    PairScoreCache(const ModelSet& set, SimilarityConfig cfg, std::uint64_t seed)
        : set_(&set), cfg_(std::move(cfg)), seed_(seed) {}

    /// Computes every missing pair referenced by `plan`, using `jobs` threads.
    void fill(const PairingPlan& plan, unsigned jobs = 1) {
        std::set<std::pair<std::size_t, std::size_t>> wanted;
        for (std::size_t i = 0; i < plan.partners.size(); ++i)
            for (auto j : plan.partners[i]) {
                auto key = std::minmax(i, j);
                if (!cache_.contains(key)) wanted.insert(key);
            }
        std::vector<std::pair<std::size_t, std::size_t>> missing(wanted.begin(), wanted.end());
        std::vector<PairScore> results(missing.size());
        parallel_for(missing.size(), jobs, [&](std::size_t k) {
            const auto [a, b] = missing[k];
            results[k] = score_pair((*set_)[a], (*set_)[b], cfg_, seed_);
        });
        for (std::size_t k = 0; k < missing.size(); ++k) cache_[missing[k]] = results[k];
    }

    const PairScore& get(std::size_t i, std::size_t j) {
        auto key = std::minmax(i, j);
        auto it = cache_.find(key);
        if (it == cache_.end()) it = cache_.emplace(key, score_pair((*set_)[key.first], (*set_)[key.second], cfg_, seed_)).first;
        return it->second;
    }

    /// Stores an externally computed score for the unordered pair (i, j).
    void put(std::size_t i, std::size_t j, PairScore score) { cache_[std::minmax(i, j)] = std::move(score); }

    std::size_t size() const noexcept { return cache_.size(); }
    const SimilarityConfig& config() const noexcept { return cfg_; }

private:
    const ModelSet* set_;
    SimilarityConfig cfg_;
    std::uint64_t seed_;
    std::map<std::pair<std::size_t, std::size_t>, PairScore> cache_;
};

inline std::string udr_metric_name(PairingMode mode, SimilarityMethod method) {
    std::string name = mode == PairingMode::within_hyper ? "udr" : "udr_a2a";
    return name + (method == SimilarityMethod::spearman ? "_s" : "_l");
}

struct UdrResult {
    ScoreTable table;
    std::vector<PairScore> pairs;  // one per unordered pair used
};

/// Median pair score per model over the plan's partners, read from `cache`.
inline UdrResult aggregate_udr(const ModelSet& set, const PairingPlan& plan, PairScoreCache& cache,
                               const std::string& metric) {
    UdrResult out;
    std::map<std::pair<std::size_t, std::size_t>, bool> seen;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (plan.partners[i].empty()) continue;
        std::vector<double> scores;
        const int d = informative_mask(set[i].response.kl()).d;
        for (auto j : plan.partners[i]) {
            const auto& ps = cache.get(i, j);
            scores.push_back(ps.score);
            auto key = std::minmax(i, j);
            if (!seen[key]) {
                seen[key] = true;
                out.pairs.push_back(ps);
            }
        }
        out.table.add({set[i].model_id, set[i].hyper_index, set[i].seed_index, metric,
                       std::clamp(stats::median(scores), 0.0, 1.0), d});
    }
    out.table.sort();
    return out;
}

inline UdrResult udr_scores(const ModelSet& set, const PairingPlan& plan, const SimilarityConfig& cfg,
                            std::uint64_t seed, unsigned jobs = 1) {
    if (plan.partners.size() != set.size()) throw ValidationError("pairing plan does not match the model set");
    PairScoreCache cache(set, cfg, seed);
    cache.fill(plan, jobs);
    return aggregate_udr(set, plan, cache, udr_metric_name(plan.mode, cfg.method));
}

}  // namespace udr
