#pragma once

// Scoring whole model sets with the supervised metrics, so that their rows
// land in the same ScoreTable as UDR.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "udr/core.hpp"
#include "udr/parallel.hpp"
#include "udr/simulator.hpp"
#include "udr/supervised.hpp"
#include "udr/udr.hpp"

namespace udr {

enum class SupervisedMetric { beta_vae, factor_vae, mig, dci };

inline const char* to_string(SupervisedMetric m) {
    switch (m) {
        case SupervisedMetric::beta_vae: return "betavae";
        case SupervisedMetric::factor_vae: return "factorvae";
        case SupervisedMetric::mig: return "mig";
        case SupervisedMetric::dci: return "dci";
    }
    return "";
}

struct SupervisedOptions {
    metrics::BetaVaeOptions beta_vae;
    metrics::FactorVaeOptions factor_vae;
    metrics::MigOptions mig;
    metrics::DciOptions dci;
};

struct Diagnostic {
    std::string model_id;
    std::string message;
};

struct SupervisedResult {
    ScoreTable table;
    std::vector<Diagnostic> diagnostics;
};

/// Oracle for one record: the stored simulator config when present,
/// otherwise a lookup into the set's factor grid.
inline metrics::EncoderOracle oracle_for(const ModelSet& set, std::size_t i) {
    if (!set.factor_grid()) throw ValidationError("factor labels required: model set has no factor grid");
    const auto& rec = set[i];
    if (auto it = rec.metadata.find("encoder"); it != rec.metadata.end()) {
        auto enc = std::make_shared<const sim::SimulatedEncoder>(set.factor_grid()->spec(),
                                                                  sim::encoder_config_from_json(it->second));
        return metrics::EncoderOracle::from(enc);
    }
    return metrics::grid_lookup_oracle(*set.factor_grid(), rec.response);
}

/// Seed of one model's evaluation; independent of evaluation order.
inline std::uint64_t model_seed(std::uint64_t seed, const std::string& model_id) {
    return derive_seed(seed, {fnv1a(model_id)});
}

inline SupervisedResult supervised_scores(const ModelSet& set, SupervisedMetric metric, std::uint64_t seed,
                                          const SupervisedOptions& opt = {}, unsigned jobs = 1) {
    if (!set.factor_grid()) throw ValidationError("factor labels required: model set has no factor grid");
    const auto& grid = *set.factor_grid();
    std::vector<metrics::MetricResult> results(set.size());
    parallel_for(set.size(), jobs, [&](std::size_t i) {
        const auto s = model_seed(seed, set[i].model_id);
        switch (metric) {
            case SupervisedMetric::beta_vae:
                results[i] = metrics::beta_vae_metric(oracle_for(set, i), grid.spec(), opt.beta_vae, s);
                break;
            case SupervisedMetric::factor_vae:
                results[i] = metrics::factorvae_metric(oracle_for(set, i), grid.spec(), opt.factor_vae, s);
                break;
            case SupervisedMetric::mig:
                results[i] = metrics::mutual_information_gap(set[i].response.values(), grid.assignments(), opt.mig, s);
                break;
            case SupervisedMetric::dci:
                results[i] = metrics::dci_disentanglement(set[i].response.values(), grid.assignments(), opt.dci, s);
                break;
        }
    });
    SupervisedResult out;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& r = set[i];
        out.table.add({r.model_id, r.hyper_index, r.seed_index, to_string(metric), results[i].score,
                       informative_mask(r.response.kl()).d});
        if (!results[i].diagnostic.empty()) out.diagnostics.push_back({r.model_id, results[i].diagnostic});
    }
    out.table.sort();
    return out;
}

}  // namespace udr
