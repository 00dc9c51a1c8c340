#pragma once

// Experiment-level analyses over score tables: cross-metric rank
// correlations, per-hyperparameter quartile summaries and the stability of
// UDR rankings as the number of partners P changes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "udr/core.hpp"
#include "udr/io.hpp"
#include "udr/stats.hpp"
#include "udr/udr.hpp"

namespace udr::harness {

/// Spearman rho between two score slices keyed by model id.
inline double rank_correlation(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
    if (a.size() != b.size()) throw ValidationError("rank_correlation: model sets differ in size");
    if (a.size() < 3) throw ValidationError("rank_correlation: need at least 3 models");
    std::vector<double> x, y;
    x.reserve(a.size());
    y.reserve(a.size());
    for (const auto& [id, v] : a) {
        auto it = b.find(id);
        if (it == b.end()) throw ValidationError("rank_correlation: model '" + id + "' missing from second slice");
        x.push_back(v);
        y.push_back(it->second);
    }
    return stats::spearman(x, y);
}

struct CorrelationRow {
    std::string metric_a;
    std::string metric_b;
    double rho = 0.0;
    std::size_t n_models = 0;
};

struct CorrelationReport {
    std::vector<CorrelationRow> rows;
    double mean_rho = 0.0;  // unweighted over rows
};

/// Every unordered pair of metrics in the table, in sorted metric order.
/// A pair is correlated over the models scored by both metrics.
inline CorrelationReport correlation_report(const ScoreTable& table) {
    auto metrics = table.metrics();
    std::sort(metrics.begin(), metrics.end());
    if (metrics.size() < 2) throw ValidationError("correlation report needs at least 2 metrics in the score table");
    CorrelationReport out;
    for (std::size_t i = 0; i < metrics.size(); ++i)
        for (std::size_t j = i + 1; j < metrics.size(); ++j) {
            auto a = table.slice(metrics[i]);
            auto b = table.slice(metrics[j]);
            std::map<std::string, double> ca, cb;
            for (const auto& [id, v] : a)
                if (auto it = b.find(id); it != b.end()) {
                    ca[id] = v;
                    cb[id] = it->second;
                }
            out.rows.push_back({metrics[i], metrics[j], rank_correlation(ca, cb), ca.size()});
        }
    double s = 0.0;
    for (const auto& r : out.rows) s += r.rho;
    out.mean_rho = s / static_cast<double>(out.rows.size());
    return out;
}

struct SweepCell {
    std::string metric;
    int hyper_index = 0;
    std::size_t n = 0;
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

struct SweepSummary {
    std::vector<SweepCell> cells;            // sorted by (metric, hyper)
    std::map<std::string, int> best_hyper;   // argmax median per metric, smallest index on ties
};

/// Quartiles over seeds per (metric, hyper). Every model of `set` must have
/// a score for every metric in `metrics` (all table metrics when empty).
inline SweepSummary sweep_summary(const ScoreTable& table, const ModelSet& set, std::vector<std::string> metrics = {}) {
    if (metrics.empty()) metrics = table.metrics();
    if (metrics.empty()) throw ValidationError("sweep summary: score table is empty");
    std::sort(metrics.begin(), metrics.end());
    SweepSummary out;
    for (const auto& m : metrics) {
        const auto slice = table.slice(m);
        std::map<int, std::vector<double>> groups;
        for (const auto& rec : set.records()) {
            auto it = slice.find(rec.model_id);
            if (it == slice.end())
                throw ValidationError("sweep summary: model '" + rec.model_id + "' has no '" + m + "' score");
            groups[rec.hyper_index].push_back(it->second);
        }
        std::optional<std::pair<int, double>> best;
        for (auto& [h, v] : groups) {
            if (v.empty()) throw ValidationError("sweep summary: empty group");
            SweepCell c{m, h, v.size(), *std::min_element(v.begin(), v.end()), stats::quantile(v, 0.25),
                        stats::quantile(v, 0.5), stats::quantile(v, 0.75), *std::max_element(v.begin(), v.end())};
            if (!best || c.median > best->second) best = std::pair{h, c.median};
            out.cells.push_back(c);
        }
        out.best_hyper[m] = best->first;
    }
    return out;
}

struct PSweepRow {
    int p = 0;
    std::size_t repeats = 0;
    double mean_rho = 0.0;
    double std_rho = 0.0;  // population standard deviation over repeats

    friend bool operator==(const PSweepRow&, const PSweepRow&) = default;
};

struct PSweepOptions {
    std::vector<int> p_values;
    int repeats = 20;
    PairingMode mode = PairingMode::within_hyper;
    SimilarityConfig similarity;
    unsigned jobs = 1;
};

/// For each P, rebuilds `repeats` pairing plans, recomputes UDR from a shared
/// pair-score cache and correlates it with the reference ranking.
inline std::vector<PSweepRow> p_sweep_study(const ModelSet& set, const std::map<std::string, double>& reference,
                                            const PSweepOptions& opt, std::uint64_t seed) {
    if (opt.repeats < 1) throw ValidationError("p-sweep needs at least one repeat");
    std::size_t max_partners = set.size() - 1;
    if (opt.mode == PairingMode::within_hyper) {
        std::map<int, std::size_t> counts;
        for (const auto& r : set.records()) ++counts[r.hyper_index];
        for (const auto& [h, c] : counts) max_partners = std::min(max_partners, c - 1);
    }
    for (int p : opt.p_values)
        if (p < 1 || static_cast<std::size_t>(p) > max_partners)
            throw ValidationError("p-sweep: P=" + std::to_string(p) + " exceeds the " + std::to_string(max_partners) +
                                  " available partners");

    PairScoreCache cache(set, opt.similarity, seed);
    const auto metric = udr_metric_name(opt.mode, opt.similarity.method);
    std::vector<PSweepRow> out;
    for (int p : opt.p_values) {
        std::vector<double> rhos;
        for (int r = 0; r < opt.repeats; ++r) {
            const auto plan_seed = derive_seed(seed, {0x7073ULL, static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(r)});
            const auto plan = build_pairing_plan(set, opt.mode, p, plan_seed);
            cache.fill(plan, opt.jobs);
            const auto res = aggregate_udr(set, plan, cache, metric);
            rhos.push_back(rank_correlation(res.table.slice(metric), reference));
        }
        out.push_back({p, rhos.size(), stats::mean(rhos), std::sqrt(stats::variance(rhos, 0))});
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV writers

namespace fs = std::filesystem;

namespace detail {
inline std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io::IoError("cannot write " + path.string());
    return f;
}
}  // namespace detail

inline void write_correlations(const CorrelationReport& rep, const fs::path& path) {
    auto f = detail::open_out(path);
    f << "metric_a,metric_b,rho,n_models\n";
    for (const auto& r : rep.rows)
        f << r.metric_a << ',' << r.metric_b << ',' << io::format_double(r.rho) << ',' << r.n_models << '\n';
    if (!f) throw io::IoError("write failed: " + path.string());
}

inline void write_sweep_summary(const SweepSummary& s, const fs::path& path) {
    auto f = detail::open_out(path);
    f << "metric,hyper_index,n,min,q1,median,q3,max,best\n";
    for (const auto& c : s.cells)
        f << c.metric << ',' << c.hyper_index << ',' << c.n << ',' << io::format_double(c.min) << ','
          << io::format_double(c.q1) << ',' << io::format_double(c.median) << ',' << io::format_double(c.q3) << ','
          << io::format_double(c.max) << ',' << (s.best_hyper.at(c.metric) == c.hyper_index ? 1 : 0) << '\n';
    if (!f) throw io::IoError("write failed: " + path.string());
}

inline void write_p_sweep(const std::vector<PSweepRow>& rows, const std::string& udr_metric,
                          const std::string& reference_metric, const fs::path& path) {
    auto f = detail::open_out(path);
    f << "p,repeats,udr_metric,reference_metric,mean_rho,std_rho\n";
    for (const auto& r : rows)
        f << r.p << ',' << r.repeats << ',' << udr_metric << ',' << reference_metric << ','
          << io::format_double(r.mean_rho) << ',' << io::format_double(r.std_rho) << '\n';
    if (!f) throw io::IoError("write failed: " + path.string());
}

}  // namespace udr::harness
