#include <smahp/io.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const std::string kCli = SMAHP_CLI_PATH;

int run(const std::string& args)
{
    const int rc = std::system((kCli + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Scratch {
    fs::path dir;
    Scratch()
    {
        dir = fs::temp_directory_path() /
              (std::string("smahp_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
};

// small simulated dataset written as CSV; returns the analyze input flags
std::string toy_inputs(const fs::path& dir, int n = 120)
{
    auto scn = smahp::SimScenario::preset("I", n);
    scn.p = 20;
    scn.k = 20;
    scn.seed = 5;
    smahp::write_dataset_csv(smahp::generate(scn).data, dir);
    return "--survival " + (dir / "survival.csv").string() + " --exposures " + (dir / "exposures.csv").string() +
           " --mediators " + (dir / "mediators.csv").string() + " --covariates " + (dir / "covariates.csv").string();
}

} // namespace

TEST(Cli, AnalyzeToyFixture)
{
    Scratch s;
    const auto in = toy_inputs(s.dir);
    ASSERT_EQ(run("analyze " + in + " --out " + (s.dir / "res.tsv").string()), 0);
    const auto [header, rows] = smahp::read_tsv(s.dir / "res.tsv");
    EXPECT_EQ(header.size(), 12u);
    EXPECT_TRUE(fs::exists(s.dir / "res.meta"));
    EXPECT_NE(slurp(s.dir / "res.meta").find("method\tsmahp"), std::string::npos);
}

TEST(Cli, AnalyzeIsByteIdenticalAndMethodLabelled)
{
    Scratch s;
    const auto in = toy_inputs(s.dir);
    for (const char* m : {"smahp", "sis-sis", "naive"}) {
        const auto a = s.dir / (std::string(m) + "_a.tsv");
        const auto b = s.dir / (std::string(m) + "_b.tsv");
        ASSERT_EQ(run("analyze " + in + " --method " + m + " --seed 3 --out " + a.string()), 0);
        ASSERT_EQ(run("analyze " + in + " --method " + m + " --seed 3 --out " + b.string()), 0);
        EXPECT_EQ(slurp(a), slurp(b)) << m;
        auto ma = a, mb = b;
        ma.replace_extension(".meta");
        mb.replace_extension(".meta");
        EXPECT_EQ(slurp(ma), slurp(mb)) << m;
        EXPECT_NE(slurp(ma).find(std::string("method\t") + m), std::string::npos);
    }
}

TEST(Cli, UnknownFlagIsUsageError)
{
    Scratch s;
    const auto in = toy_inputs(s.dir);
    EXPECT_EQ(run("analyze " + in + " --out " + (s.dir / "x.tsv").string() + " --bogus 1"), 1);
    EXPECT_FALSE(fs::exists(s.dir / "x.tsv"));
    EXPECT_EQ(run(""), 1);
    EXPECT_EQ(run("frobnicate"), 1);
    EXPECT_EQ(run("analyze " + in + " --out " + (s.dir / "x.tsv").string() + " --method nope"), 1);
}

TEST(Cli, DataErrorExitsTwoWithoutPartialOutput)
{
    Scratch s;
    toy_inputs(s.dir);
    std::ofstream(s.dir / "bad_surv.csv") << "id,time,status\nrow1,0,1\n";
    const std::string in = "--survival " + (s.dir / "bad_surv.csv").string() + " --exposures " +
                           (s.dir / "exposures.csv").string() + " --mediators " + (s.dir / "mediators.csv").string();
    EXPECT_EQ(run("analyze " + in + " --out " + (s.dir / "y.tsv").string()), 2);
    EXPECT_FALSE(fs::exists(s.dir / "y.tsv"));
}

TEST(Cli, ConfigFileAndUnknownKey)
{
    Scratch s;
    const auto in = toy_inputs(s.dir);
    std::ofstream(s.dir / "good.cfg") << "fdr_q = 0.1\nstep1_mediation_penalty = lasso\n";
    std::ofstream(s.dir / "bad.cfg") << "fdr = 0.1\n";
    ASSERT_EQ(run("analyze " + in + " --config " + (s.dir / "good.cfg").string() + " --out " + (s.dir / "g.tsv").string()), 0);
    const auto meta = slurp(s.dir / "g.meta");
    EXPECT_NE(meta.find("config.fdr_q\t0.1"), std::string::npos);
    EXPECT_NE(meta.find("config.step1_mediation_penalty\tlasso"), std::string::npos);
    // flag overrides the file
    ASSERT_EQ(run("analyze " + in + " --config " + (s.dir / "good.cfg").string() + " --q 0.2 --out " +
                  (s.dir / "h.tsv").string()),
              0);
    EXPECT_NE(slurp(s.dir / "h.meta").find("config.fdr_q\t0.2"), std::string::npos);
    EXPECT_EQ(run("analyze " + in + " --config " + (s.dir / "bad.cfg").string() + " --out " + (s.dir / "b.tsv").string()), 1);
}

TEST(Cli, SimulateIsDeterministic)
{
    Scratch s;
    const auto a = s.dir / "a", b = s.dir / "b";
    ASSERT_EQ(run("simulate --scenario I --censoring 0.25 --reps 2 --seed 7 --out " + a.string()), 0);
    ASSERT_EQ(run("simulate --scenario I --censoring 0.25 --reps 2 --seed 7 --out " + b.string()), 0);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        ++files;
        const auto rel = fs::relative(e.path(), a);
        EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    }
    EXPECT_EQ(files, 11u);  // manifest + 2 x (4 csv + truth)
}

TEST(Cli, BenchmarkWritesTable)
{
    Scratch s;
    const auto out = s.dir / "bench.tsv";
    ASSERT_EQ(run("benchmark --scenarios I --methods naive,sis-sis --reps 2 --n 100 --seed 3 --out " + out.string()), 0);
    const auto [h, rows] = smahp::read_tsv(out);
    EXPECT_EQ(rows.size(), 2u);
    EXPECT_TRUE(fs::exists(s.dir / "bench.timing"));
}
