#include <gtest/gtest.h>

#include <numbers>
#include <set>

#include "udr/simulator.hpp"
#include "udr/udr.hpp"

using namespace udr;

namespace {

std::vector<double> informative(std::size_t n) { return std::vector<double>(n, 1.0); }

ModelSet grid4_population(int hypers, int seeds, const sim::QualitySchedule& schedule, std::size_t n = 2000) {
    const auto grid = sim::make_factor_grid(sim::preset("grid4"), sim::UniformSample{n, 6});
    return sim::simulate_population(grid, hypers, seeds, schedule, 31);
}

}  // namespace

TEST(InformativeMask, ThresholdIsStrict) {
    const auto m = informative_mask({0.005, 0.02, 0.0});
    EXPECT_EQ(m.mask, (std::vector<bool>{false, true, false}));
    EXPECT_EQ(m.d, 1);
    EXPECT_EQ(informative_mask({0.0, 0.0}).d, 0);
    EXPECT_FALSE(informative_mask({0.01}).mask[0]);
    EXPECT_THROW(informative_mask({-0.1}), ValidationError);
}

TEST(PairScore, HandDerivedCases) {
    MatrixD id(3, 3, 0.0);
    for (std::size_t i = 0; i < 3; ++i) id(i, i) = 1.0;
    EXPECT_EQ(udr_pair_score(id, informative(3), informative(3)).score, 1.0);
    EXPECT_DOUBLE_EQ(udr_pair_score(MatrixD(3, 2, {1, 0, 0, 1, 0, 0}), informative(3), informative(2)).score, 0.8);
    EXPECT_EQ(udr_pair_score(MatrixD(2, 2, 1.0), informative(2), informative(2)).score, 0.5);
    EXPECT_EQ(udr_pair_score(MatrixD(2, 2, 0.0), informative(2), informative(2)).score, 0.0);
}

TEST(PairScore, CollapsedModelsAndShapeErrors) {
    const auto ps = udr_pair_score(MatrixD(2, 2, 1.0), {0.0, 0.0}, {0.0, 0.001});
    EXPECT_EQ(ps.score, 0.0);
    EXPECT_EQ(ps.d_i + ps.d_j, 0);
    EXPECT_THROW(udr_pair_score(MatrixD(2, 3, 1.0), informative(2), informative(2)), ValidationError);
}

TEST(PairScore, UninformativeLatentsAreMasked) {
    // Row 2 is uninformative and carries spurious similarity to column 0.
    const MatrixD r(3, 2, {1, 0, 0, 1, 0.9, 0.1});
    const std::vector<double> kl_i{1, 1, 0.001};
    const auto masked = udr_pair_score(r, kl_i, informative(2));
    EXPECT_DOUBLE_EQ(masked.score, 1.0);
    const auto all = udr_pair_score(r, kl_i, informative(2), DenominatorScope::all);
    EXPECT_NEAR(all.score, (1.0 / 1.9 + 1.0 / 1.1 + 1.0 + 1.0) / 4.0, 1e-15);
}

TEST(Pairing, WithinHyperPartnersShareHyperAndAreDistinct) {
    const auto set = grid4_population(3, 5, sim::linear_schedule(3), 50);
    const auto plan = build_pairing_plan(set, PairingMode::within_hyper, 3, 11);
    EXPECT_FALSE(plan.capped);
    for (std::size_t i = 0; i < set.size(); ++i) {
        ASSERT_EQ(plan.partners[i].size(), 3u);
        std::set<std::size_t> uniq(plan.partners[i].begin(), plan.partners[i].end());
        EXPECT_EQ(uniq.size(), 3u);
        for (auto j : plan.partners[i]) {
            EXPECT_NE(j, i);
            EXPECT_EQ(set[j].hyper_index, set[i].hyper_index);
        }
    }
    EXPECT_EQ(plan.partners, build_pairing_plan(set, PairingMode::within_hyper, 3, 11).partners);
    EXPECT_NE(plan.partners, build_pairing_plan(set, PairingMode::within_hyper, 3, 12).partners);
}

TEST(Pairing, CapIsFlaggedAndUsesEveryPeer) {
    const auto set = grid4_population(2, 4, sim::linear_schedule(2), 50);
    const auto plan = build_pairing_plan(set, PairingMode::within_hyper, 50, 1);
    EXPECT_TRUE(plan.capped);
    for (const auto& p : plan.partners) EXPECT_EQ(p.size(), 3u);
    const auto two = grid4_population(1, 2, sim::linear_schedule(1), 50);
    const auto pair_plan = build_pairing_plan(two, PairingMode::within_hyper, 1, 1);
    EXPECT_EQ(pair_plan.partners[0], std::vector<std::size_t>{1});
    EXPECT_EQ(pair_plan.partners[1], std::vector<std::size_t>{0});
    const auto one = grid4_population(1, 1, sim::linear_schedule(1), 50);
    EXPECT_THROW(build_pairing_plan(one, PairingMode::within_hyper, 1, 1), ValidationError);
    EXPECT_THROW(build_pairing_plan(one, PairingMode::all_to_all, 1, 1), ValidationError);
}

TEST(Pairing, AllToAllPoolSpansEveryModel) {
    const auto set = grid4_population(6, 10, sim::linear_schedule(6), 20);
    const auto plan = build_pairing_plan(set, PairingMode::all_to_all, 100, 2);
    EXPECT_TRUE(plan.capped);
    for (const auto& p : plan.partners) EXPECT_EQ(p.size(), 59u);
    const auto sub = build_pairing_plan(set, PairingMode::all_to_all, 5, 2);
    bool crosses = false;
    for (std::size_t i = 0; i < set.size(); ++i)
        for (auto j : sub.partners[i]) crosses = crosses || set[j].hyper_index != set[i].hyper_index;
    EXPECT_TRUE(crosses);

    PairingOptions opt;
    opt.a2a_seeds_per_hyper = 2;
    const auto capped = build_pairing_plan(set, PairingMode::all_to_all, 100, 2, opt);
    std::size_t scored = 0;
    for (const auto& p : capped.partners)
        if (!p.empty()) {
            ++scored;
            EXPECT_EQ(p.size(), 11u);
        }
    EXPECT_EQ(scored, 12u);
}

TEST(UdrScores, MedianAggregationConventions) {
    // Three partners per model with known pair scores, through a pre-filled cache.
    const auto set = grid4_population(1, 4, sim::linear_schedule(1), 50);
    PairingPlan plan{PairingMode::within_hyper, 3, 0, {{1, 2, 3}, {0}, {0}, {0, 1}}, false};
    PairScoreCache cache(set, {}, 0);
    cache.put(0, 1, {"h0_s0", "h0_s1", 0.2, 4, 4});
    cache.put(2, 0, {"h0_s0", "h0_s2", 0.5, 4, 4});
    cache.put(0, 3, {"h0_s0", "h0_s3", 0.9, 4, 4});
    cache.put(1, 3, {"h0_s1", "h0_s3", 0.4, 4, 4});
    const auto res = aggregate_udr(set, plan, cache, "udr_s");
    const auto s = res.table.slice("udr_s");
    EXPECT_DOUBLE_EQ(s.at("h0_s0"), 0.5);
    EXPECT_DOUBLE_EQ(s.at("h0_s1"), 0.2);
    EXPECT_DOUBLE_EQ(s.at("h0_s3"), 0.5 * (0.9 + 0.4));
    EXPECT_EQ(cache.size(), 4u);
    EXPECT_EQ(res.pairs.size(), 4u);
}

TEST(UdrScores, SpearmanPairIsSymmetricAndSeeded) {
    const auto set = grid4_population(1, 3, {{0.2, 0.1, 0}});
    SimilarityConfig cfg;
    cfg.method = SimilarityMethod::spearman;
    const auto a = score_pair(set[0], set[1], cfg, 9);
    const auto b = score_pair(set[1], set[0], cfg, 9);
    EXPECT_EQ(a.score, b.score);
    cfg.method = SimilarityMethod::lasso;
    EXPECT_NEAR(score_pair(set[0], set[1], cfg, 9).score, score_pair(set[1], set[0], cfg, 9).score, 1e-12);
}

TEST(UdrScores, SubsetEncoderScoresTwoSmallOverSmallPlusLarge) {
    const auto spec = sim::preset("grid4");
    const auto grid = sim::make_factor_grid(spec, sim::FullGrid{});
    auto make = [&](int active, std::uint64_t seed) {
        sim::EncoderConfig c = sim::draw_encoder_config(spec, {0.0, 0.0, 10 - active}, {}, seed);
        return ModelRecord{"m" + std::to_string(seed), 0, static_cast<int>(seed),
                           sim::simulate_encoder(grid, c), {}};
    };
    const auto small = make(2, 1), large = make(3, 2);
    SimilarityConfig cfg;
    cfg.method = SimilarityMethod::spearman;
    cfg.spearman.n_samples = 0;  // every row: factors are exactly independent on the full grid
    EXPECT_NEAR(score_pair(small, large, cfg, 0).score, 2.0 * 2 / (2 + 3), 1e-9);
}

TEST(UdrScores, CleanHyperBeatsEntangledHyper) {
    const auto set = grid4_population(2, 5, {{std::numbers::pi / 4, 0.1, 0}, {0.0, 0.1, 0}});
    const auto plan = build_pairing_plan(set, PairingMode::within_hyper, 4, 1);
    for (auto method : {SimilarityMethod::spearman, SimilarityMethod::lasso}) {
        SimilarityConfig cfg;
        cfg.method = method;
        const auto res = udr_scores(set, plan, cfg, 3);
        const auto name = udr_metric_name(PairingMode::within_hyper, method);
        std::vector<double> h0, h1;
        for (const auto& r : res.table.rows()) {
            EXPECT_GE(r.score, 0.0);
            EXPECT_LE(r.score, 1.0);
            EXPECT_EQ(r.metric, name);
            (r.hyper_index == 0 ? h0 : h1).push_back(r.score);
        }
        EXPECT_GT(stats::median(h1), stats::median(h0));
        EXPECT_EQ(res.table, udr_scores(set, plan, cfg, 3, 2).table);
    }
}
