// udr_rank: simulate model populations, score them with UDR and the
// supervised metrics, and build rank-correlation reports.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "udr/udr_rank.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("UDR_RANK_SEED")) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (used == std::string(env).size()) return v;
        } catch (const std::exception&) {
        }
        throw UsageError(std::string("UDR_RANK_SEED is not an unsigned integer: '") + env + "'");
    }
    return 0;
}

void progress(const std::string& msg) { std::cerr << "[udr_rank] " << msg << '\n'; }

/// Adds (or replaces) this invocation's entry in <out>/run_manifest.json.
void record_run(const fs::path& out_dir, const std::string& key, json entry, const json& extra = {}) {
    const auto path = out_dir / "run_manifest.json";
    json manifest = json::object();
    if (fs::exists(path)) {
        std::ifstream in(path);
        try {
            manifest = json::parse(in);
        } catch (const json::exception&) {
            manifest = json::object();
        }
    }
    manifest["tool"] = "udr_rank";
    manifest["version"] = udr::kVersion;
    manifest["runs"][key] = std::move(entry);
    for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw udr::io::IoError("cannot write " + path.string());
    f << manifest.dump(2) << '\n';
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(cell, &used));
            if (used != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            throw UsageError("expected a comma-separated list of integers, got '" + s + "'");
        }
    }
    return out;
}

// --------------------------------------------------------------------------

struct SimulateArgs {
    std::string preset = "dsprites-mini";
    int hypers = 6;
    int seeds = 10;
    std::string out;
    std::optional<std::uint64_t> seed;
    int latents = 10;
    std::string schedule = "benchmark";
    std::string maps = "identity";
    std::string mixing = "pairwise";
    std::size_t sample = 0;
};

int cmd_simulate(const SimulateArgs& a) {
    if (a.hypers < 1) throw UsageError("--hypers must be >= 1");
    if (a.seeds < 1) throw UsageError("--seeds must be >= 1");
    const auto seed = resolve_seed(a.seed);
    const auto spec = udr::sim::preset(a.preset);
    udr::sim::GridMode mode = udr::sim::FullGrid{};
    if (a.sample > 0) mode = udr::sim::UniformSample{a.sample, udr::derive_seed(seed, {0x67726964ULL})};
    const auto grid = udr::sim::make_factor_grid(spec, mode);
    const auto schedule = a.schedule == "linear" ? udr::sim::linear_schedule(a.hypers)
                                                 : udr::sim::benchmark_schedule(a.hypers);
    udr::sim::PopulationOptions opt;
    opt.n_latents = a.latents;
    opt.maps = a.maps == "random" ? udr::sim::MapPolicy::random : udr::sim::MapPolicy::identity;
    opt.mixing = a.mixing == "orthogonal" ? udr::sim::MixingMode::orthogonal : udr::sim::MixingMode::pairwise;
    progress("simulating " + std::to_string(a.hypers * a.seeds) + " models on " + a.preset + " (" +
             std::to_string(grid.size()) + " samples)");
    const auto set = udr::sim::simulate_population(grid, a.hypers, a.seeds, schedule, seed, opt);
    udr::io::save_model_set(set, a.out);

    std::cout << "models " << set.size() << "\nsamples " << set.num_samples() << "\nlatents " << set.num_latents()
              << "\nschedule " << a.schedule << "\n";
    for (int h = 0; h < a.hypers; ++h) {
        const auto& q = schedule[static_cast<std::size_t>(h)];
        std::cout << "  hyper " << h << ": mixing_angle " << udr::io::format_double(q.mixing_angle) << ", noise_sd "
                  << udr::io::format_double(q.noise_sd) << "\n";
    }
    record_run(a.out, "simulate",
               {{"preset", a.preset}, {"hypers", a.hypers}, {"seeds", a.seeds}, {"seed", seed}, {"latents", a.latents},
                {"schedule", a.schedule}, {"maps", a.maps}, {"mixing", a.mixing}, {"sample", a.sample}});
    return 0;
}

// --------------------------------------------------------------------------

struct ScoreArgs {
    std::string models;
    std::string out;
    std::string metric = "udr";
    std::string method = "spearman";
    int p = 10;
    std::optional<std::uint64_t> seed;
    unsigned jobs = udr::default_jobs();
    int a2a_seeds = 0;
    std::string mig_binning = "equal_width";
    std::string dci_importance = "lasso";
    bool signed_betavae = false;
    std::string denominators = "informative";
};

int cmd_score(const ScoreArgs& a) {
    const auto seed = resolve_seed(a.seed);
    const fs::path out = a.out.empty() ? fs::path(a.models) : fs::path(a.out);
    progress("loading model set " + a.models);
    const auto set = udr::io::load_model_set(a.models);
    if (set.empty()) throw udr::ValidationError("model set is empty");

    udr::ScoreTable fresh;
    std::vector<udr::Diagnostic> diags;
    json details = {{"metric", a.metric}, {"seed", seed}, {"models", fs::absolute(a.models).string()}};

    if (a.metric == "udr" || a.metric == "udr-a2a") {
        udr::SimilarityConfig cfg;
        cfg.method = udr::similarity_method_from_string(a.method);
        cfg.scope = a.denominators == "all" ? udr::DenominatorScope::all : udr::DenominatorScope::informative;
        const auto mode = a.metric == "udr" ? udr::PairingMode::within_hyper : udr::PairingMode::all_to_all;
        udr::PairingOptions popt;
        popt.a2a_seeds_per_hyper = a.a2a_seeds;
        const auto plan = udr::build_pairing_plan(set, mode, a.p, udr::derive_seed(seed, {0x706c616eULL}), popt);
        if (plan.capped) {
            std::size_t effective = 0;
            for (const auto& p : plan.partners) effective = std::max(effective, p.size());
            progress("warning: P=" + std::to_string(a.p) + " exceeds the available partners; capped at " +
                     std::to_string(effective));
        }
        progress("scoring " + udr::udr_metric_name(mode, cfg.method) + " with P=" + std::to_string(a.p) + " on " +
                 std::to_string(a.jobs) + " job(s)");
        auto res = udr::udr_scores(set, plan, cfg, seed, a.jobs);
        fresh = std::move(res.table);
        details.update({{"method", a.method}, {"p", a.p}, {"capped", plan.capped}, {"a2a_seeds", a.a2a_seeds},
                        {"denominators", a.denominators}, {"pairs", res.pairs.size()}});
    } else {
        udr::SupervisedMetric m;
        if (a.metric == "betavae") m = udr::SupervisedMetric::beta_vae;
        else if (a.metric == "factorvae") m = udr::SupervisedMetric::factor_vae;
        else if (a.metric == "mig") m = udr::SupervisedMetric::mig;
        else if (a.metric == "dci") m = udr::SupervisedMetric::dci;
        else throw UsageError("unknown metric '" + a.metric + "'");
        if (!set.factor_grid())
            throw udr::ValidationError("factor labels required: '" + a.metric + "' needs a factor grid in the model set");
        udr::SupervisedOptions opt;
        opt.mig.binning = a.mig_binning == "quantile" ? udr::metrics::Binning::quantile : udr::metrics::Binning::equal_width;
        opt.dci.method = a.dci_importance == "trees" ? udr::metrics::ImportanceMethod::tree_ensemble
                                                     : udr::metrics::ImportanceMethod::lasso;
        opt.beta_vae.absolute_differences = !a.signed_betavae;
        progress("scoring " + a.metric + " on " + std::to_string(set.size()) + " models with " +
                 std::to_string(a.jobs) + " job(s)");
        auto res = udr::supervised_scores(set, m, seed, opt, a.jobs);
        fresh = std::move(res.table);
        diags = std::move(res.diagnostics);
        details.update({{"mig_binning", a.mig_binning}, {"dci_importance", a.dci_importance},
                        {"betavae_signed", a.signed_betavae}});
    }
    for (const auto& d : diags) progress("diagnostic: " + d.model_id + ": " + d.message);

    fs::create_directories(out);
    const auto scores_path = out / "scores.csv";
    udr::ScoreTable table;
    if (fs::exists(scores_path)) table = udr::io::read_score_table(scores_path);
    table.merge(fresh);
    udr::io::write_score_table(table, scores_path);
    json dj = json::array();
    for (const auto& d : diags) dj.push_back({{"model_id", d.model_id}, {"message", d.message}});
    details["diagnostics"] = dj;
    record_run(out, "score:" + fresh.rows().front().metric, details);
    progress("wrote " + std::to_string(fresh.size()) + " rows to " + scores_path.string());
    return 0;
}

// --------------------------------------------------------------------------

struct ReportArgs {
    std::string models;
    std::string out;
    std::string scores;
    std::string p_sweep;
    std::string reference = "mig";
    std::string method = "spearman";
    int repeats = 20;
    std::optional<std::uint64_t> seed;
    unsigned jobs = udr::default_jobs();
};

int cmd_report(const ReportArgs& a) {
    const auto seed = resolve_seed(a.seed);
    const fs::path out = a.out.empty() ? fs::path(a.models) : fs::path(a.out);
    const fs::path scores_path = a.scores.empty() ? out / "scores.csv" : fs::path(a.scores);
    if (!fs::exists(scores_path)) throw udr::io::IoError("no score table at " + scores_path.string());
    const auto table = udr::io::read_score_table(scores_path);
    if (table.metrics().size() < 2)
        throw udr::ValidationError("insufficient metrics: the report needs at least 2 metrics in " + scores_path.string());
    const auto set = udr::io::load_model_set(a.models);

    fs::create_directories(out);
    const auto corr = udr::harness::correlation_report(table);
    udr::harness::write_correlations(corr, out / "correlations.csv");
    const auto sweep = udr::harness::sweep_summary(table, set);
    udr::harness::write_sweep_summary(sweep, out / "sweep_summary.csv");
    progress("wrote correlations.csv (" + std::to_string(corr.rows.size()) + " rows) and sweep_summary.csv");

    json summary = {{"mean_rho", corr.mean_rho}, {"best_hyper", sweep.best_hyper}};
    json details = {{"seed", seed}, {"scores", fs::absolute(scores_path).string()}, {"models", fs::absolute(a.models).string()}};
    if (!a.p_sweep.empty()) {
        udr::harness::PSweepOptions opt;
        opt.p_values = parse_int_list(a.p_sweep);
        opt.repeats = a.repeats;
        opt.similarity.method = udr::similarity_method_from_string(a.method);
        opt.jobs = a.jobs;
        const auto reference = table.slice(a.reference);
        if (reference.empty()) throw udr::ValidationError("reference metric '" + a.reference + "' not in the score table");
        progress("p-sweep over " + a.p_sweep + " with " + std::to_string(a.repeats) + " repeats");
        const auto rows = udr::harness::p_sweep_study(set, reference, opt, udr::derive_seed(seed, {0x7073776565ULL}));
        const auto udr_metric = udr::udr_metric_name(opt.mode, opt.similarity.method);
        udr::harness::write_p_sweep(rows, udr_metric, a.reference, out / "p_sweep.csv");
        details.update({{"p_sweep", opt.p_values}, {"repeats", a.repeats}, {"reference", a.reference}, {"method", a.method}});
        progress("wrote p_sweep.csv (" + std::to_string(rows.size()) + " rows)");
    }
    record_run(out, "report", details, {{"summary", summary}});
    return 0;
}

// --------------------------------------------------------------------------

struct ValidateArgs {
    std::string models;
    std::optional<std::uint64_t> seed;
};

int cmd_validate(const ValidateArgs& a) {
    const auto seed = resolve_seed(a.seed);
    int failures = 0;
    auto check = [&](bool ok, const std::string& what) {
        std::cout << (ok ? "ok   " : "FAIL ") << what << '\n';
        if (!ok) ++failures;
    };
    const auto set = udr::io::load_model_set(a.models);
    check(true, "manifest loads: " + std::to_string(set.size()) + " models, N=" + std::to_string(set.num_samples()) +
                    ", L=" + std::to_string(set.num_latents()));
    bool finite = true;
    for (const auto& r : set.records())
        for (double v : r.response.values().data()) finite = finite && std::isfinite(v);
    check(finite, "all latent values finite");
    std::size_t collapsed = 0;
    for (const auto& r : set.records())
        if (udr::informative_mask(r.response.kl()).d == 0) ++collapsed;
    check(true, std::to_string(collapsed) + " fully collapsed model(s)");
    check(set.factor_grid().has_value(), "factor grid present (needed by supervised metrics)");

    if (set.size() >= 2) {
        udr::Rng rng(seed);
        const auto pick = rng.sample_without_replacement(set.size(), 2);
        const auto& mi = set[pick[0]];
        const auto& mj = set[pick[1]];
        udr::SimilarityConfig cfg;
        cfg.method = udr::SimilarityMethod::spearman;
        const auto ab = udr::score_pair(mi, mj, cfg, seed);
        const auto ba = udr::score_pair(mj, mi, cfg, seed);
        check(ab.score >= 0.0 && ab.score <= 1.0, "pair score in [0, 1] (" + mi.model_id + ", " + mj.model_id + ")");
        check(std::abs(ab.score - ba.score) < 1e-12, "pair score symmetric");

        // permuting and sign-flipping the latents of one model leaves the score unchanged
        const auto L = mj.response.num_latents();
        std::vector<std::size_t> perm(L);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(perm);
        udr::MatrixD v(mj.response.num_samples(), L);
        std::vector<double> kl(L);
        for (std::size_t l = 0; l < L; ++l) {
            const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
            kl[l] = mj.response.kl()[perm[l]];
            for (std::size_t n = 0; n < v.rows(); ++n) v(n, l) = sign * mj.response.values()(n, perm[l]);
        }
        auto moved = mj;
        moved.response = udr::LatentResponse(std::move(v), std::move(kl), mj.response.sample_ids());
        const auto pm = udr::score_pair(mi, moved, cfg, seed);
        check(std::abs(pm.score - ab.score) < 1e-9, "pair score invariant to latent permutation and sign");
    }

    const auto local = fs::is_directory(a.models) ? fs::path(a.models) / "scores.csv"
                                                  : fs::path(a.models).parent_path() / "scores.csv";
    if (fs::exists(local)) {
        const auto table = udr::io::read_score_table(local);
        bool known = true;
        for (const auto& r : table.rows()) known = known && set.find(r.model_id).has_value();
        check(known, "scores.csv rows refer to models in the set (" + std::to_string(table.size()) + " rows)");
    }
    if (failures > 0) throw udr::ValidationError(std::to_string(failures) + " validation check(s) failed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised disentanglement ranking of model populations"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML/INI file with default option values");

    std::optional<std::uint64_t> seed;
    auto add_seed = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "Random seed (falls back to $UDR_RANK_SEED, then 0)");
    };

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Generate a simulated model population");
    sim->add_option("--preset", sa.preset, "Factor space preset")
        ->check(CLI::IsMember(udr::sim::preset_names()))
        ->capture_default_str();
    sim->add_option("--hypers", sa.hypers, "Number of hyperparameter settings H")->capture_default_str();
    sim->add_option("--seeds", sa.seeds, "Seeds per hyperparameter setting S")->capture_default_str();
    sim->add_option("--out", sa.out, "Output directory")->required();
    sim->add_option("--latents", sa.latents, "Latent dimensions per model")->capture_default_str();
    sim->add_option("--schedule", sa.schedule, "Quality schedule")
        ->check(CLI::IsMember({"benchmark", "linear"}))
        ->capture_default_str();
    sim->add_option("--maps", sa.maps, "Per-factor response maps")
        ->check(CLI::IsMember({"identity", "random"}))
        ->capture_default_str();
    sim->add_option("--mixing", sa.mixing, "Entanglement mode")
        ->check(CLI::IsMember({"pairwise", "orthogonal"}))
        ->capture_default_str();
    sim->add_option("--sample", sa.sample, "Draw this many rows instead of the full grid (0 = full grid)");
    add_seed(sim);

    ScoreArgs sc;
    auto* score = app.add_subcommand("score", "Score a model set and merge rows into scores.csv");
    score->add_option("--models", sc.models, "Model set directory or manifest")->required();
    score->add_option("--out", sc.out, "Output directory (default: the model set directory)");
    score->add_option("--metric", sc.metric, "Metric to compute")
        ->check(CLI::IsMember({"udr", "udr-a2a", "betavae", "factorvae", "mig", "dci"}))
        ->capture_default_str();
    score->add_option("--method", sc.method, "UDR similarity method")
        ->check(CLI::IsMember({"spearman", "lasso"}))
        ->capture_default_str();
    score->add_option("--p", sc.p, "Pairwise comparisons per model P")->check(CLI::PositiveNumber)->capture_default_str();
    score->add_option("--jobs", sc.jobs, "Concurrent evaluations")->check(CLI::PositiveNumber);
    score->add_option("--a2a-seeds", sc.a2a_seeds, "udr-a2a: seeds per hyper in the partner pool (0 = all)");
    score->add_option("--mig-binning", sc.mig_binning, "MIG discretisation")
        ->check(CLI::IsMember({"equal_width", "quantile"}))
        ->capture_default_str();
    score->add_option("--dci-importance", sc.dci_importance, "DCI importance estimator")
        ->check(CLI::IsMember({"lasso", "trees"}))
        ->capture_default_str();
    score->add_flag("--signed-betavae", sc.signed_betavae, "beta-VAE metric: signed mean of differences");
    score->add_option("--denominators", sc.denominators, "UDR sums over informative or all latents")
        ->check(CLI::IsMember({"informative", "all"}))
        ->capture_default_str();
    add_seed(score);

    ReportArgs ra;
    auto* report = app.add_subcommand("report", "Correlations, sweep summary and optional P-sweep");
    report->add_option("--models", ra.models, "Model set directory or manifest")->required();
    report->add_option("--out", ra.out, "Output directory (default: the model set directory)");
    report->add_option("--scores", ra.scores, "Score table (default: <out>/scores.csv)");
    report->add_option("--p-sweep", ra.p_sweep, "Comma-separated P values for the stability study");
    report->add_option("--reference", ra.reference, "Reference metric of the P-sweep")->capture_default_str();
    report->add_option("--method", ra.method, "UDR similarity method of the P-sweep")
        ->check(CLI::IsMember({"spearman", "lasso"}))
        ->capture_default_str();
    report->add_option("--repeats", ra.repeats, "Resampled plans per P")->check(CLI::PositiveNumber)->capture_default_str();
    report->add_option("--jobs", ra.jobs, "Concurrent evaluations")->check(CLI::PositiveNumber);
    add_seed(report);

    ValidateArgs va;
    auto* validate = app.add_subcommand("validate", "Run invariant checks on a model set");
    validate->add_option("--models", va.models, "Model set directory or manifest")->required();
    add_seed(validate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "udr_rank: usage error: " << e.what() << '\n';
        return 2;
    }

    try {
        sa.seed = sc.seed = ra.seed = va.seed = seed;
        if (*sim) return cmd_simulate(sa);
        if (*score) return cmd_score(sc);
        if (*report) return cmd_report(ra);
        if (*validate) return cmd_validate(va);
    } catch (const UsageError& e) {
        std::cerr << "udr_rank: usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "udr_rank: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
