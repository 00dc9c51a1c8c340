#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "udr/io.hpp"
#include "udr/simulator.hpp"

namespace fs = std::filesystem;
using namespace udr;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("udr_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Result run(const std::string& args, const std::string& env = "") {
    static int counter = 0;
    const auto base = fs::temp_directory_path() / ("udr_cli_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    const std::string cmd = env + (env.empty() ? "" : " ") + std::string("\"") + UDR_RANK_EXE + "\" " + args + " >\"" +
                            base.string() + ".out\" 2>\"" + base.string() + ".err\"";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(base.string() + ".out");
    r.err = slurp(base.string() + ".err");
    fs::remove(base.string() + ".out");
    fs::remove(base.string() + ".err");
    return r;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Cli, SimulateWritesSixtyRecords) {
    const auto dir = scratch("sim60");
    const auto r = run("simulate --preset dsprites-mini --hypers 6 --seeds 10 --seed 1 --out " + dir.string());
    ASSERT_EQ(r.code, 0) << r.err;
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".f64") ++files;
    EXPECT_EQ(files, 60u);
    EXPECT_EQ(io::load_model_set(dir).size(), 60u);
    EXPECT_NE(r.out.find("models 60"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "run_manifest.json"));
}

TEST(Cli, ZeroSeedsIsAUsageError) {
    const auto dir = scratch("zero");
    const auto r = run("simulate --preset grid4 --seeds 0 --out " + dir.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("usage error"), std::string::npos);
    EXPECT_EQ(count_lines(r.err), 1u);
}

TEST(Cli, UnknownFlagsFail) {
    EXPECT_NE(run("simulate --bogus").code, 0);
    EXPECT_NE(run("").code, 0);
}

TEST(Cli, CarsPresetHasModelAndRotationFactors) {
    const auto dir = scratch("cars");
    ASSERT_EQ(run("simulate --preset cars3d --hypers 1 --seeds 2 --sample 300 --out " + dir.string()).code, 0);
    const auto set = io::load_model_set(dir);
    ASSERT_TRUE(set.factor_grid());
    EXPECT_EQ(set.factor_grid()->spec().cardinalities(), (std::vector<int>{199, 24}));
}

TEST(Cli, PIsCappedOnTwoSeedSets) {
    const auto dir = scratch("cap");
    ASSERT_EQ(run("simulate --preset grid4 --hypers 2 --seeds 2 --sample 400 --out " + dir.string()).code, 0);
    const auto r = run("score --models " + dir.string() + " --metric udr --method lasso --p 5 --seed 3");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("capped at 1"), std::string::npos);
    const auto table = io::read_score_table(dir / "scores.csv");
    EXPECT_EQ(table.slice("udr_l").size(), 4u);
}

TEST(Cli, SupervisedMetricWithoutFactorsNamesTheMissingInput) {
    const auto dir = scratch("nofactors");
    const auto grid = sim::make_factor_grid(sim::preset("grid4"), sim::UniformSample{200, 1});
    const auto full = sim::simulate_population(grid, 1, 3, sim::linear_schedule(1), 4);
    io::save_model_set(ModelSet(full.records()), dir);
    const auto r = run("score --models " + dir.string() + " --metric mig");
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("factor labels required"), std::string::npos);
    std::size_t error_lines = 0;
    std::istringstream lines(r.err);
    for (std::string line; std::getline(lines, line);)
        if (line.rfind("udr_rank: error", 0) == 0) ++error_lines;
    EXPECT_EQ(error_lines, 1u);
}

TEST(Cli, ScoreIsIdempotentAndSeedFallsBackToEnvironment) {
    const auto dir = scratch("idem");
    ASSERT_EQ(run("simulate --preset grid4 --hypers 2 --seeds 3 --sample 400 --out " + dir.string(), "UDR_RANK_SEED=7").code, 0);
    const auto other = scratch("idem_flag");
    ASSERT_EQ(run("simulate --preset grid4 --hypers 2 --seeds 3 --sample 400 --seed 7 --out " + other.string()).code, 0);
    EXPECT_EQ(slurp(dir / "model_00004.f64"), slurp(other / "model_00004.f64"));

    ASSERT_EQ(run("score --models " + dir.string() + " --metric udr --p 2 --seed 5").code, 0);
    const auto first = slurp(dir / "scores.csv");
    ASSERT_EQ(run("score --models " + dir.string() + " --metric udr --p 2 --seed 5").code, 0);
    EXPECT_EQ(slurp(dir / "scores.csv"), first);
    EXPECT_EQ(count_lines(first), 7u);
}

TEST(Cli, ReportProducesCorrelationAndPSweepRows) {
    const auto dir = scratch("report");
    ASSERT_EQ(run("simulate --preset grid4 --hypers 1 --seeds 46 --sample 300 --seed 2 --out " + dir.string()).code, 0);
    ASSERT_EQ(run("score --models " + dir.string() + " --metric udr --p 5 --seed 2").code, 0);
    const auto lone = run("report --models " + dir.string());
    EXPECT_NE(lone.code, 0);
    EXPECT_NE(lone.err.find("insufficient metrics"), std::string::npos);
    ASSERT_EQ(run("score --models " + dir.string() + " --metric mig --seed 2").code, 0);
    const auto r = run("report --models " + dir.string() + " --p-sweep 5,15,45 --repeats 3 --seed 2");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(count_lines(slurp(dir / "correlations.csv")), 2u);
    EXPECT_EQ(count_lines(slurp(dir / "p_sweep.csv")), 4u);
    EXPECT_EQ(count_lines(slurp(dir / "sweep_summary.csv")), 3u);
}

TEST(Cli, ValidateAcceptsGoodSetsAndRejectsBrokenOnes) {
    const auto dir = scratch("validate");
    ASSERT_EQ(run("simulate --preset grid4 --hypers 1 --seeds 3 --sample 200 --out " + dir.string()).code, 0);
    const auto ok = run("validate --models " + dir.string());
    EXPECT_EQ(ok.code, 0) << ok.err;
    EXPECT_EQ(ok.out.find("FAIL"), std::string::npos);
    fs::remove(dir / "model_00002.f64");
    EXPECT_NE(run("validate --models " + dir.string()).code, 0);
}

// Full pipeline on the 6 x 50 benchmark population, compared with committed goldens.
TEST(CliGolden, BenchmarkPipelineMatchesGoldenFiles) {
    const auto dir = scratch("golden");
    const std::string d = dir.string();
    ASSERT_EQ(run("simulate --preset dsprites-mini --hypers 6 --seeds 50 --sample 2000 --seed 1 --out " + d).code, 0);
    ASSERT_EQ(run("score --models " + d + " --metric udr --method spearman --p 50 --seed 1").code, 0);
    ASSERT_EQ(run("score --models " + d + " --metric mig --seed 1").code, 0);
    ASSERT_EQ(run("score --models " + d + " --metric dci --seed 1").code, 0);
    const auto r = run("report --models " + d + " --p-sweep 5,15,45 --seed 1");
    ASSERT_EQ(r.code, 0) << r.err;

    const fs::path golden = fs::path(UDR_GOLDEN_DIR) / "benchmark";
    const bool update = std::getenv("UDR_UPDATE_GOLDEN") != nullptr;
    for (const auto* name : {"scores.csv", "correlations.csv", "sweep_summary.csv", "p_sweep.csv"}) {
        if (update) {
            fs::create_directories(golden);
            fs::copy_file(dir / name, golden / name, fs::copy_options::overwrite_existing);
        }
        ASSERT_TRUE(fs::exists(golden / name)) << "missing golden " << name;
        EXPECT_EQ(slurp(dir / name), slurp(golden / name)) << name << " differs from its golden file";
    }
}
