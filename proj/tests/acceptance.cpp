// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Every tolerance is fixed below.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "udr/udr_rank.hpp"

using namespace udr;
namespace fs = std::filesystem;

namespace {

// Criterion 1
constexpr int kOracleMatrices = 1000;
constexpr std::size_t kOracleMaxDim = 8;
constexpr double kOracleTol = 1e-12;
constexpr double kOracleSeconds = 5.0;
// Criterion 2
constexpr int kInvariancePairs = 50;
constexpr double kSpearmanInvTol = 1e-9;
constexpr double kLassoInvTol = 1e-6;
constexpr int kDeadLatents = 3;
constexpr double kDeadTol = 0.02;
constexpr double kInvarianceSeconds = 120.0;
// Criterion 3
constexpr double kIdentitySpearmanTol = 1e-6;
constexpr double kIdentityLassoMin = 0.95;
// Criterion 4
constexpr int kMonotoneSeeds = 10;
constexpr double kMonotoneNoise = 0.05;
// Criterion 5
constexpr double kCleanBetaMin = 0.95, kCleanMigMin = 0.95, kCleanDciMin = 0.98;
constexpr double kChanceTol = 0.05, kNoiseMigMax = 0.05;
constexpr double kDciHand = 0.1887, kDciHandTol = 1e-4;
// Criterion 6
constexpr int kAgreementHypers = 6, kAgreementSeeds = 10;
constexpr double kAgreementRhoMin = 0.8;
constexpr double kAgreementSeconds = 300.0;
// Criterion 7
constexpr int kSweepHypers = 6, kSweepSeeds = 50, kSweepRepeats = 20;
constexpr int kSweepSmallP = 5, kSweepLargeP = 45;
constexpr double kSweepMeanSlack = 0.02;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

// ---------------------------------------------------------------------------
// Criterion 1: pair score against brute-force oracles.

/// Pair score written straight from the formula over all latents, with
/// indicator weights on the outer sums.
double oracle_all(const MatrixD& r, const std::vector<double>& kl_a, const std::vector<double>& kl_b) {
    double d_a = 0, d_b = 0;
    for (double k : kl_a) d_a += k > 0.01 ? 1 : 0;
    for (double k : kl_b) d_b += k > 0.01 ? 1 : 0;
    if (d_a + d_b == 0) return 0.0;
    double cols = 0.0;
    for (std::size_t b = 0; b < r.cols(); ++b) {
        double r_a = 0.0, s = 0.0;
        for (std::size_t a = 0; a < r.rows(); ++a) {
            if (r(a, b) > r_a) r_a = r(a, b);
            s += r(a, b);
        }
        const double ind = kl_b[b] > 0.01 ? 1.0 : 0.0;
        if (s != 0.0) cols += r_a * r_a * ind / s;
    }
    double rows = 0.0;
    for (std::size_t a = 0; a < r.rows(); ++a) {
        double r_b = 0.0, s = 0.0;
        for (std::size_t b = 0; b < r.cols(); ++b) {
            if (r(a, b) > r_b) r_b = r(a, b);
            s += r(a, b);
        }
        const double ind = kl_a[a] > 0.01 ? 1.0 : 0.0;
        if (s != 0.0) rows += r_b * r_b * ind / s;
    }
    return (cols + rows) / (d_a + d_b);
}

/// Default semantics: cut R down to its informative rows and columns, then
/// apply the formula with every remaining latent informative.
double oracle_informative(const MatrixD& r, const std::vector<double>& kl_a, const std::vector<double>& kl_b) {
    std::vector<std::size_t> ra, cb;
    for (std::size_t a = 0; a < kl_a.size(); ++a)
        if (kl_a[a] > 0.01) ra.push_back(a);
    for (std::size_t b = 0; b < kl_b.size(); ++b)
        if (kl_b[b] > 0.01) cb.push_back(b);
    if (ra.empty() && cb.empty()) return 0.0;
    if (ra.empty() || cb.empty()) return 0.0;
    const MatrixD sub = r.select_rows(ra).select_cols(cb);
    return oracle_all(sub, std::vector<double>(ra.size(), 1.0), std::vector<double>(cb.size(), 1.0)) ;
}

Outcome criterion_1() {
    const auto t0 = Clock::now();
    Rng rng(2024);
    double worst_inf = 0.0, worst_all = 0.0;
    for (int m = 0; m < kOracleMatrices; ++m) {
        const auto la = 1 + rng.uniform_int(kOracleMaxDim), lb = 1 + rng.uniform_int(kOracleMaxDim);
        MatrixD r(la, lb);
        for (auto& v : r.data()) v = rng.uniform() < 0.1 ? 0.0 : rng.uniform();
        auto kl = [&](std::size_t n) {
            std::vector<double> k(n);
            for (auto& v : k) v = rng.uniform() < 0.3 ? rng.uniform(0.0, 0.01) : rng.uniform(0.0101, 2.0);
            return k;
        };
        const auto ka = kl(la), kb = kl(lb);
        worst_inf = std::max(worst_inf, std::abs(udr_pair_score(r, ka, kb).score - oracle_informative(r, ka, kb)));
        worst_all = std::max(worst_all,
                             std::abs(udr_pair_score(r, ka, kb, DenominatorScope::all).score - oracle_all(r, ka, kb)));
    }
    MatrixD id(4, 4, 0.0);
    for (std::size_t i = 0; i < 4; ++i) id(i, i) = 1.0;
    const std::vector<double> on4(4, 1.0), on3(3, 1.0), on2(2, 1.0);
    const double h1 = udr_pair_score(id, on4, on4).score;
    const double h2 = udr_pair_score(MatrixD(3, 2, {1, 0, 0, 1, 0, 0}), on3, on2).score;
    const double h3 = udr_pair_score(MatrixD(2, 2, 1.0), on2, on2).score;
    const bool hand = h1 == 1.0 && std::abs(h2 - 0.8) <= 1e-15 && h3 == 0.5;
    const double secs = seconds_since(t0);
    return {worst_inf <= kOracleTol && worst_all <= kOracleTol && hand && secs < kOracleSeconds,
            fmt("max |diff| %.2e (informative), %.2e (all latents) over %d matrices; hand cases %.17g/%.17g/%.17g; %.2fs",
                worst_inf, worst_all, kOracleMatrices, h1, h2, h3, secs)};
}

// ---------------------------------------------------------------------------
// Criterion 2: invariances.

LatentResponse permute_and_flip(const LatentResponse& r, Rng& rng) {
    std::vector<std::size_t> perm(r.num_latents());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    MatrixD v(r.num_samples(), r.num_latents());
    std::vector<double> kl(r.num_latents());
    for (std::size_t l = 0; l < perm.size(); ++l) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        kl[l] = r.kl()[perm[l]];
        for (std::size_t n = 0; n < v.rows(); ++n) v(n, l) = sign * r.values()(n, perm[l]);
    }
    return LatentResponse(std::move(v), std::move(kl), r.sample_ids());
}

LatentResponse with_dead_latents(const LatentResponse& r, int extra, std::uint64_t seed) {
    const std::size_t L = r.num_latents() + static_cast<std::size_t>(extra);
    MatrixD v(r.num_samples(), L);
    Rng rng(seed);
    for (std::size_t n = 0; n < v.rows(); ++n) {
        for (std::size_t l = 0; l < r.num_latents(); ++l) v(n, l) = r.values()(n, l);
        for (std::size_t l = r.num_latents(); l < L; ++l) v(n, l) = rng.normal();
    }
    auto kl = r.kl();
    for (int e = 0; e < extra; ++e) kl.push_back(rng.uniform(0.0, 0.005));
    return LatentResponse(std::move(v), std::move(kl), r.sample_ids());
}

Outcome criterion_2() {
    const auto t0 = Clock::now();
    const auto spec = sim::preset("grid4");
    const auto grid = sim::make_factor_grid(spec, sim::FullGrid{});
    Rng rng(77);
    sim::QualitySchedule schedule;
    for (int p = 0; p < kInvariancePairs; ++p)
        schedule.push_back({rng.uniform(0.0, std::numbers::pi / 4), rng.uniform(0.05, 0.5), static_cast<int>(rng.uniform_int(3))});
    const auto set = sim::simulate_population(grid, kInvariancePairs, 2, schedule, 99);

    std::vector<double> d_s(kInvariancePairs), d_l(kInvariancePairs), dead_s(kInvariancePairs), dead_l(kInvariancePairs);
    parallel_for(static_cast<std::size_t>(kInvariancePairs), default_jobs(), [&](std::size_t p) {
        const auto& a = set[2 * p];
        const auto& b = set[2 * p + 1];
        Rng local(derive_seed(5, {p}));
        auto a2 = a, b2 = b;
        a2.response = permute_and_flip(a.response, local);
        b2.response = permute_and_flip(b.response, local);
        auto a3 = a;
        a3.response = with_dead_latents(a.response, kDeadLatents, derive_seed(6, {p}));
        auto b3 = b;
        b3.response = with_dead_latents(b.response, kDeadLatents, derive_seed(7, {p}));
        for (auto method : {SimilarityMethod::spearman, SimilarityMethod::lasso}) {
            SimilarityConfig cfg;
            cfg.method = method;
            const double base = score_pair(a, b, cfg, 11).score;
            const double moved = score_pair(a2, b2, cfg, 11).score;
            const double dead = score_pair(a3, b3, cfg, 11).score;
            (method == SimilarityMethod::spearman ? d_s : d_l)[p] = std::abs(base - moved);
            (method == SimilarityMethod::spearman ? dead_s : dead_l)[p] = std::abs(base - dead);
        }
    });
    auto mx = [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); };
    const double secs = seconds_since(t0);
    return {mx(d_s) < kSpearmanInvTol && mx(d_l) < kLassoInvTol && mx(dead_s) < kDeadTol && mx(dead_l) < kDeadTol &&
                secs < kInvarianceSeconds,
            fmt("permutation+sign max change %.2e (spearman), %.2e (lasso); %d dead latents max change %.2e "
                "(spearman), %.2e (lasso); %d pairs; %.1fs",
                mx(d_s), mx(d_l), kDeadLatents, mx(dead_s), mx(dead_l), kInvariancePairs, secs)};
}

// ---------------------------------------------------------------------------
// Criterion 3: identity recovery.

Outcome criterion_3() {
    const auto grid = sim::make_factor_grid(sim::preset("grid4"), sim::FullGrid{});
    const auto set = sim::simulate_population(grid, 1, 2, {{0.0, 0.0, 0}}, 3);
    SimilarityConfig cfg;
    cfg.method = SimilarityMethod::spearman;
    // Correlate over every grid point: on the balanced grid distinct factors
    // then have exactly zero rank correlation. A 1000-row subsample leaves
    // chance correlations near 1/sqrt(1000) in the denominators.
    cfg.spearman.n_samples = 0;
    const double s = score_pair(set[0], set[1], cfg, 1).score;
    cfg.spearman.n_samples = 1000;
    const double s_sub = score_pair(set[0], set[1], cfg, 1).score;
    cfg.method = SimilarityMethod::lasso;
    const double l = score_pair(set[0], set[1], cfg, 1).score;
    return {std::abs(s - 1.0) <= kIdentitySpearmanTol && l >= kIdentityLassoMin,
            fmt("UDR_ij %.12f (spearman, all %zu rows), %.6f (lasso); spearman on a 1000-row subsample %.4f", s,
                grid.size(), l, s_sub)};
}

// ---------------------------------------------------------------------------
// Criterion 4: entanglement monotonicity.

Outcome criterion_4() {
    const auto grid = sim::make_factor_grid(sim::preset("grid4"), sim::FullGrid{});
    const double pi = std::numbers::pi;
    const std::vector<double> angles{0.0, pi / 16, pi / 8, pi / 4};
    sim::QualitySchedule schedule;
    for (double a : angles) schedule.push_back({a, kMonotoneNoise, 0});
    const auto set = sim::simulate_population(grid, static_cast<int>(angles.size()), kMonotoneSeeds, schedule, 41);
    const auto plan = build_pairing_plan(set, PairingMode::within_hyper, kMonotoneSeeds - 1, 2);
    bool pass = true;
    std::string detail;
    for (auto method : {SimilarityMethod::spearman, SimilarityMethod::lasso}) {
        SimilarityConfig cfg;
        cfg.method = method;
        const auto res = udr_scores(set, plan, cfg, 4, default_jobs());
        std::vector<double> mean(angles.size(), 0.0);
        for (const auto& r : res.table.rows()) mean[static_cast<std::size_t>(r.hyper_index)] += r.score / kMonotoneSeeds;
        detail += std::string(to_string(method)) + " means";
        for (std::size_t h = 0; h < mean.size(); ++h) {
            detail += fmt(" %.4f", mean[h]);
            if (h > 0 && !(mean[h] < mean[h - 1])) pass = false;
        }
        detail += "; ";
    }
    return {pass, detail + "angles 0, pi/16, pi/8, pi/4"};
}

// ---------------------------------------------------------------------------
// Criterion 5: supervised metric sanity.

Outcome criterion_5() {
    using namespace udr::metrics;
    const auto spec = sim::preset("grid4");
    const auto grid = sim::make_factor_grid(spec, sim::FullGrid{});
    const auto cfg = sim::draw_encoder_config(spec, {0.0, 0.0, 0}, {}, 5);
    const auto oracle = EncoderOracle::from(std::make_shared<const sim::SimulatedEncoder>(spec, cfg));
    const auto clean = sim::simulate_encoder(grid, cfg);
    const double K = static_cast<double>(spec.size());

    const double beta = beta_vae_metric(oracle, spec, {}, 1).score;
    const double fvae = factorvae_metric(oracle, spec, {}, 1).score;
    const double mig = mutual_information_gap(clean.values(), grid.assignments(), {}, 1).score;
    const double dci = dci_disentanglement(clean.values(), grid.assignments(), {}, 1).score;

    const EncoderOracle noise(
        [&](const MatrixI& f) {
            MatrixD out(f.rows(), 10);
            for (std::size_t r = 0; r < f.rows(); ++r)
                for (std::size_t l = 0; l < 10; ++l) out(r, l) = hashed_normal(31, spec.flat_index(f.row(r)), l);
            return out;
        },
        10);
    const auto nz = noise.encode(grid.assignments());
    const double n_beta = beta_vae_metric(noise, spec, {}, 2).score;
    const double n_fvae = factorvae_metric(noise, spec, {}, 2).score;
    const double n_mig = mutual_information_gap(nz, grid.assignments(), {}, 2).score;
    const auto n_dci = dci_disentanglement(nz, grid.assignments(), {}, 2);
    const double hand = dci_from_importance(MatrixD(2, 1, {0.75, 0.25})).score;

    const bool pass = fvae == 1.0 && beta >= kCleanBetaMin && mig >= kCleanMigMin && dci >= kCleanDciMin &&
                      std::abs(n_beta - 1.0 / K) <= kChanceTol && std::abs(n_fvae - 1.0 / K) <= kChanceTol &&
                      n_mig <= kNoiseMigMax && n_dci.diagnostic.find("all-zero importance") != std::string::npos &&
                      std::abs(hand - kDciHand) <= kDciHandTol;
    return {pass, fmt("clean: factorvae %.4f betavae %.4f mig %.4f dci %.4f; noise: betavae %.4f factorvae %.4f mig "
                      "%.4f dci %.4f (%s); hand D_i %.6f",
                      fvae, beta, mig, dci, n_beta, n_fvae, n_mig, n_dci.score, n_dci.diagnostic.c_str(), hand)};
}

// ---------------------------------------------------------------------------
// Criterion 6: cross-metric agreement.

Outcome criterion_6() {
    const auto t0 = Clock::now();
    const auto grid = sim::make_factor_grid(sim::preset("grid4"), sim::FullGrid{});
    const auto set = sim::simulate_population(grid, kAgreementHypers, kAgreementSeeds,
                                              sim::benchmark_schedule(kAgreementHypers), 606);
    const auto jobs = default_jobs();
    const auto plan = build_pairing_plan(set, PairingMode::within_hyper, kAgreementSeeds - 1, 6);
    ScoreTable table;
    for (auto method : {SimilarityMethod::spearman, SimilarityMethod::lasso}) {
        SimilarityConfig cfg;
        cfg.method = method;
        table.merge(udr_scores(set, plan, cfg, 6, jobs).table);
    }
    for (auto m : {SupervisedMetric::beta_vae, SupervisedMetric::factor_vae, SupervisedMetric::mig, SupervisedMetric::dci})
        table.merge(supervised_scores(set, m, 6, {}, jobs).table);

    const auto sweep = harness::sweep_summary(table, set);
    const int best = sweep.best_hyper.at("udr_s");
    bool pass = true;
    std::string detail;
    for (const auto* u : {"udr_s", "udr_l"})
        for (const auto* s : {"betavae", "factorvae", "mig", "dci"}) {
            const double rho = harness::rank_correlation(table.slice(u), table.slice(s));
            detail += fmt("rho(%s,%s) %.3f; ", u, s, rho);
            pass = pass && rho >= kAgreementRhoMin;
        }
    detail += "best hyper";
    for (const auto& [metric, h] : sweep.best_hyper) {
        detail += fmt(" %s=%d", metric.c_str(), h);
        pass = pass && h == best;
    }
    const double secs = seconds_since(t0);
    return {pass && secs < kAgreementSeconds, detail + fmt("; %.1fs", secs)};
}

// ---------------------------------------------------------------------------
// Criterion 7: P-sweep stability.

Outcome criterion_7() {
    const auto grid = sim::make_factor_grid(sim::preset("grid4"), sim::UniformSample{4000, 70});
    const auto set = sim::simulate_population(grid, kSweepHypers, kSweepSeeds, sim::benchmark_schedule(kSweepHypers), 707);
    const auto mig = supervised_scores(set, SupervisedMetric::mig, 7, {}, default_jobs()).table.slice("mig");
    harness::PSweepOptions opt;
    opt.p_values = {kSweepSmallP, kSweepLargeP};
    opt.repeats = kSweepRepeats;
    opt.similarity.method = SimilarityMethod::spearman;
    opt.jobs = default_jobs();
    const auto rows = harness::p_sweep_study(set, mig, opt, 7);
    const auto& small = rows[0];
    const auto& large = rows[1];
    return {large.std_rho <= small.std_rho && large.mean_rho >= small.mean_rho - kSweepMeanSlack,
            fmt("P=%d rho %.4f +- %.4f; P=%d rho %.4f +- %.4f; %d repeats", small.p, small.mean_rho, small.std_rho,
                large.p, large.mean_rho, large.std_rho, kSweepRepeats)};
}

// ---------------------------------------------------------------------------
// Criterion 8: end-to-end reproducibility through the command-line tool.

#ifdef UDR_RANK_EXE
int run_tool(const std::string& args) {
    const std::string cmd = std::string("\"") + UDR_RANK_EXE + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome criterion_8() {
    const auto root = fs::temp_directory_path() / "udr_acceptance_repro";
    fs::remove_all(root);
    std::vector<fs::path> dirs{root / "run_a", root / "run_b"};
    for (const auto& d : dirs) {
        const std::string s = d.string();
        const std::vector<std::string> steps{
            "simulate --preset dsprites-mini --hypers 4 --seeds 8 --sample 1500 --seed 88 --out " + s,
            "score --models " + s + " --metric udr --method spearman --p 7 --seed 88",
            "score --models " + s + " --metric udr --method lasso --p 3 --seed 88",
            "score --models " + s + " --metric mig --seed 88",
            "score --models " + s + " --metric dci --seed 88",
            "report --models " + s + " --p-sweep 3,7 --repeats 5 --seed 88"};
        for (const auto& step : steps)
            if (run_tool(step) != 0) return {false, "command failed: udr_rank " + step};
    }
    std::string detail;
    bool pass = true;
    for (const auto* name : {"scores.csv", "correlations.csv", "sweep_summary.csv", "p_sweep.csv"}) {
        const auto a = slurp(dirs[0] / name), b = slurp(dirs[1] / name);
        const bool same = !a.empty() && a == b;
        pass = pass && same;
        detail += fmt("%s %s (%zu bytes); ", name, same ? "identical" : "DIFFERENT", a.size());
    }
    fs::remove_all(root);
    return {pass, detail + "two runs, same seeds"};
}
#else
Outcome criterion_8() { return {false, "built without the udr_rank tool"}; }
#endif

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 pair-score oracle equivalence", criterion_1},
        {"2 permutation, sign and dead-latent invariance", criterion_2},
        {"3 identity recovery", criterion_3},
        {"4 entanglement monotonicity", criterion_4},
        {"5 supervised metric sanity", criterion_5},
        {"6 cross-metric agreement", criterion_6},
        {"7 P-sweep stability", criterion_7},
        {"8 end-to-end reproducibility", criterion_8},
    };
    // optional filter: run only the listed criterion numbers
    std::vector<std::string> only(argv + 1, argv + argc);
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name.substr(0, 1)) == only.end()) continue;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
