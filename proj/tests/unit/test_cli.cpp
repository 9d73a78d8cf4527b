#include <gslogit/cli.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gslogit;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir()
    {
        static int counter = 0;
        path_ = fs::temp_directory_path() / ("gslogit-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }
    std::string operator/(const std::string& leaf) const { return (path_ / leaf).string(); }

private:
    fs::path path_;
};

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(std::vector<std::string> args) { return cli::run(std::move(args)); }

std::vector<std::string> small_sim(const TempDir& t, const std::string& out)
{
    return {"simulate", "--out", t / out, "--set", "simulate.n=60", "--set", "simulate.p=6", "--set", "simulate.s0=1", "--seed", "11"};
}

std::vector<std::string> small_fit(const TempDir& t, const std::string& sim, const std::string& out)
{
    return {"fit",          "--out",      t / out,
            "--design",     t / (sim + "/design.csv"),
            "--groups",     t / (sim + "/groups.csv"),
            "--response",   t / (sim + "/response.csv"),
            "--truth",      t / (sim + "/truth.csv"),
            "--set",        "sampler.n_iter=5000",
            "--set",        "sampler.burn_in=500",
            "--set",        "prior.lambda_override=2",
            "--seed",       "5"};
}

} // namespace

TEST(Config, EmptyFileEchoesDefaults)
{
    TempDir t;
    std::ofstream(t / "empty.ini").close();
    RunConfig c;
    config::apply_ini(c, t / "empty.ini");
    EXPECT_EQ(config::echo(c), config::echo(RunConfig{}));
}

TEST(Config, EchoRoundTrips)
{
    TempDir t;
    RunConfig c;
    config::apply_assignment(c, "simulate.n=123");
    config::apply_assignment(c, "prior.lambda_override=3.5");
    config::apply_assignment(c, "experiment.n_grid=50,100");
    std::ofstream(t / "echo.ini") << config::echo(c);
    RunConfig back;
    config::apply_ini(back, t / "echo.ini");
    EXPECT_EQ(config::echo(back), config::echo(c));
    EXPECT_EQ(back.n, 123);
    ASSERT_TRUE(back.lambda_override.has_value());
    EXPECT_EQ(*back.lambda_override, 3.5);
}

TEST(Config, RejectsSmallM2NamingTheKey)
{
    RunConfig c;
    config::apply_assignment(c, "experiment.M2=3");
    try {
        config::validate(c);
        FAIL() << "expected an input error";
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("experiment.M2"), std::string::npos);
    }
}

TEST(Config, RejectsUnknownKeysAndBadValues)
{
    RunConfig c;
    EXPECT_THROW(config::apply_assignment(c, "model.nope=1"), InputError);
    EXPECT_THROW(config::apply_assignment(c, "model.m=three"), InputError);
    EXPECT_THROW(config::apply_assignment(c, "no_equals_sign"), InputError);
    TempDir t;
    std::ofstream(t / "bad.ini") << "[sampler]\nmystery = 4\n";
    EXPECT_THROW(config::apply_ini(c, t / "bad.ini"), InputError);
}

TEST(Config, DefaultTableListsEveryKey)
{
    const std::string table = config::default_table();
    for (const auto& f : config::fields()) EXPECT_NE(table.find(f.key), std::string::npos) << f.key;
}

TEST(Cli, FlagOverridesFile)
{
    TempDir t;
    std::ofstream(t / "run.ini") << "[run]\nseed = 5\n[simulate]\nn = 40\np = 4\ns0 = 1\n";
    EXPECT_EQ(run_cli({"simulate", "--config", t / "run.ini", "--seed", "9", "--out", t / "o"}), 0);
    RunConfig echoed;
    config::apply_ini(echoed, t / "o/config.ini");
    EXPECT_EQ(echoed.seed, 9u);
    EXPECT_EQ(echoed.n, 40);
}

TEST(Cli, SetOverridesFile)
{
    TempDir t;
    std::ofstream(t / "run.ini") << "[simulate]\nn = 40\np = 4\ns0 = 1\n";
    EXPECT_EQ(run_cli({"simulate", "-c", t / "run.ini", "--set", "simulate.n=50", "--out", t / "o"}), 0);
    RunConfig echoed;
    config::apply_ini(echoed, t / "o/config.ini");
    EXPECT_EQ(echoed.n, 50);
}

TEST(Cli, FitWithoutResponseIsUsageError)
{
    TempDir t;
    ASSERT_EQ(run_cli(small_sim(t, "sim")), 0);
    EXPECT_EQ(run_cli({"fit", "--out", t / "fit", "--design", t / "sim/design.csv", "--groups", t / "sim/groups.csv"}), 2);
}

TEST(Cli, BadValuesAreUsageErrors)
{
    TempDir t;
    EXPECT_EQ(run_cli({"simulate", "--out", t / "o", "--set", "experiment.M2=2"}), 2);
    EXPECT_EQ(run_cli({"simulate", "--bogus"}), 2);
    EXPECT_EQ(run_cli({}), 2);
}

TEST(Cli, IoFailuresExitThree)
{
    TempDir t;
    std::ofstream(t / "file").close();
    EXPECT_EQ(run_cli({"simulate", "--out", t / "file/sub"}), 3);
    EXPECT_EQ(run_cli({"fit", "--out", t / "o", "--design", t / "missing.csv", "--groups", t / "missing.csv", "--response", t / "missing.csv"}), 3);
    EXPECT_EQ(run_cli({"simulate", "--config", t / "missing.ini", "--out", t / "o"}), 3);
}

TEST(Cli, VerifySingleCheckPasses)
{
    TempDir t;
    EXPECT_EQ(run_cli({"verify", "--check", "selfconcordance", "--set", "verify.instances=20", "--out", t / "v"}), 0);
    const auto report = io::read_json(t / "v/check_selfconcordance.json");
    EXPECT_EQ(report["pass"], true);
    EXPECT_EQ(report["instances"], 20);
    EXPECT_TRUE(fs::exists(t / "v/manifest.json"));
    EXPECT_EQ(run_cli({"verify", "--check", "nonsense", "--out", t / "w"}), 2);
}

TEST(Cli, SimulateFitRoundTrip)
{
    TempDir t;
    ASSERT_EQ(run_cli(small_sim(t, "sim")), 0);
    for (const char* f : {"design.csv", "groups.csv", "response.csv", "truth.csv", "config.ini", "manifest.json"})
        EXPECT_TRUE(fs::exists(t / (std::string("sim/") + f))) << f;
    ASSERT_EQ(run_cli(small_fit(t, "sim", "fit")), 0);
    const auto summary = io::read_json(t / "fit/summary.json");
    EXPECT_EQ(summary["n"], 60);
    EXPECT_EQ(summary["p"], 6);
    EXPECT_EQ(summary["lambda"], 2.0);
    EXPECT_TRUE(summary.contains("distance_quantiles"));
    double total = 0.0;
    for (double v : summary["s_law"]) total += v;
    EXPECT_NEAR(total, 1.0, 1e-9);
    const auto manifest = io::read_json(t / "fit/manifest.json");
    EXPECT_EQ(manifest["subcommand"], "fit");
}

TEST(Cli, RerunFromEchoIsBitIdentical)
{
    TempDir t;
    ASSERT_EQ(run_cli(small_sim(t, "sim")), 0);
    ASSERT_EQ(run_cli(small_fit(t, "sim", "a")), 0);
    // the echoed config carries the data paths, seed and sampler settings
    ASSERT_EQ(run_cli({"fit", "--config", t / "a/config.ini", "--out", t / "b"}), 0);
    for (const char* f : {"chain.csv", "summary.json"}) EXPECT_EQ(slurp(t / (std::string("a/") + f)), slurp(t / (std::string("b/") + f))) << f;
    ASSERT_EQ(run_cli({"simulate", "--config", t / "sim/config.ini", "--out", t / "sim2"}), 0);
    for (const char* f : {"design.csv", "groups.csv", "response.csv", "truth.csv"})
        EXPECT_EQ(slurp(t / (std::string("sim/") + f)), slurp(t / (std::string("sim2/") + f))) << f;
}

TEST(Cli, EnvironmentSetsDefaultOutputDirectory)
{
    TempDir t;
    ::setenv("GSLOGIT_OUTPUT_DIR", (t / "env").c_str(), 1);
    const int code = run_cli({"simulate", "--set", "simulate.n=30", "--set", "simulate.p=4", "--set", "simulate.s0=1"});
    ::unsetenv("GSLOGIT_OUTPUT_DIR");
    EXPECT_EQ(code, 0);
    EXPECT_TRUE(fs::exists(t / "env/design.csv"));
}

TEST(Io, DesignRoundTrip)
{
    TempDir t;
    const GroupedDesign d = random_subgaussian_design(7, 3, GroupPartition::from_sizes({2, 1, 3}), EntryLaw::gaussian, 1);
    io::write_design_csv(t / "d.csv", d);
    io::write_groups_csv(t / "g.csv", d.partition());
    const GroupPartition part = io::read_groups_csv(t / "g.csv", d.d());
    const GroupedDesign back = io::read_design_csv(t / "d.csv", t / "g.csv", 3);
    EXPECT_EQ(back.matrix(), d.matrix());
    EXPECT_EQ(back.partition().sizes(), d.partition().sizes());
    EXPECT_EQ(part.sizes(), d.partition().sizes());
}

TEST(Io, NonContiguousGroupsRejected)
{
    TempDir t;
    std::ofstream(t / "g.csv") << "col,group\n1,a\n2,b\n3,a\n";
    EXPECT_FALSE(io::read_groups_csv(t / "g.csv", 3).contiguous());
    const GroupedDesign d = random_subgaussian_design(4, 2, GroupPartition::singletons(3), EntryLaw::gaussian, 2);
    io::write_design_csv(t / "d.csv", d);
    EXPECT_THROW(io::read_design_csv(t / "d.csv", t / "g.csv", 2), InputError);
}
