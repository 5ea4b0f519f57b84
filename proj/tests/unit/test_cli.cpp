#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override
    {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("pumpsched_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    CliRun run(const std::string& args, const std::string& env = "env -u PUMPSCHED_CONFIG") const
    {
        const auto out = dir_ / "stdout.txt";
        const auto err = dir_ / "stderr.txt";
        const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" + PUMPSCHED_CLI_PATH + "' " + args + " >'"
                                + out.string() + "' 2>'" + err.string() + "'";
        const int status = std::system(cmd.c_str());
        CliRun r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(out);
        r.err = slurp(err);
        return r;
    }

    fs::path dir_;
};

std::size_t line_count(const std::string& text)
{
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

} // namespace

TEST_F(Cli, VersionAndUsage)
{
    const auto v = run("--version");
    EXPECT_EQ(v.code, 0);
    EXPECT_FALSE(v.out.empty());
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("frobnicate").code, 1);
    EXPECT_EQ(run("simulate --days -3").code, 1);
    EXPECT_EQ(run("simulate --reward v7").code, 1);
    EXPECT_EQ(run("train").code, 1);
}

TEST_F(Cli, SynthValidateSlice)
{
    const auto s = run("dataset synth --days 2 --seed 4 --out synth");
    ASSERT_EQ(s.code, 0) << s.err;
    const auto csv = slurp(dir_ / "synth" / "synth.csv");
    EXPECT_EQ(line_count(csv), 2881u);
    EXPECT_TRUE(fs::exists(dir_ / "synth" / "manifest.json"));

    const auto v = run("dataset validate synth/synth.csv");
    EXPECT_EQ(v.code, 0) << v.err;
    EXPECT_NE(v.out.find("rows=2880 errors=0"), std::string::npos) << v.out;

    const auto sl = run("dataset slice synth/synth.csv --out slices");
    EXPECT_EQ(sl.code, 0) << sl.err;
    EXPECT_NE(sl.out.find("episodes=2"), std::string::npos) << sl.out;
    EXPECT_TRUE(fs::exists(dir_ / "slices" / "episode_001.csv"));
}

TEST_F(Cli, CorruptRowNamesLine)
{
    {
        std::ofstream out(dir_ / "bad.csv");
        out << "timestamp,demand,tank_level,kw_np1,kw_np2,kw_np3,kw_np4\n"
            << "2024-01-01T00:00,100,52,0,0,0,0\n"
            << "2024-01-01T00:01,100,52,0,0,0,0\n"
            << "2024-01-01T00:02,100,99,0,0,0,0\n";
    }
    const auto v = run("dataset validate bad.csv");
    EXPECT_EQ(v.code, 2);
    EXPECT_NE(v.err.find("line 4"), std::string::npos) << v.err;
    EXPECT_NE(v.out.find("errors=1"), std::string::npos) << v.out;

    const auto sim = run("simulate --demand bad.csv --horizon 3");
    EXPECT_EQ(sim.code, 2);
    EXPECT_NE(sim.err.find("line 4"), std::string::npos) << sim.err;

    {
        std::ofstream out(dir_ / "schema.csv");
        out << "timestamp,demand\n2024-01-01T00:00,1\n";
    }
    EXPECT_EQ(run("dataset validate schema.csv").code, 2);
}

TEST_F(Cli, SimulateWritesOutputs)
{
    const auto r = run("simulate --horizon 300 --schedule rule --seed 2 --out sim");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("minutes=300"), std::string::npos) << r.out;
    EXPECT_EQ(line_count(slurp(dir_ / "sim" / "trajectory.csv")), 301u);
    const auto manifest = nlohmann::json::parse(slurp(dir_ / "sim" / "manifest.json"));
    EXPECT_EQ(manifest["subcommand"], "simulate");
    EXPECT_EQ(manifest["seed"], 2);
}

TEST_F(Cli, TrainAndEval)
{
    ASSERT_EQ(run("dataset synth --days 2 --out d").code, 0);
    const auto t = run("train --dataset d/synth.csv --steps 5 --heads 2 --out t");
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_TRUE(fs::exists(dir_ / "t" / "checkpoint.bin"));
    // The default config expects a different ensemble size.
    EXPECT_EQ(run("eval --checkpoint t/checkpoint.bin --horizon 60 --out e").code, 2);
    {
        std::ofstream out(dir_ / "two.json");
        out << R"({"train": {"heads": 2}})";
    }
    const auto e = run("eval --checkpoint t/checkpoint.bin --horizon 60 --out e", "PUMPSCHED_CONFIG=two.json");
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_TRUE(fs::exists(dir_ / "e" / "comparison.json"));
    const auto manifest = nlohmann::json::parse(slurp(dir_ / "e" / "manifest.json"));
    EXPECT_EQ(manifest["config_path"], "two.json");
}

TEST_F(Cli, ConfigErrorsAndRuntimeFailures)
{
    {
        std::ofstream out(dir_ / "bad.json");
        out << R"({"tank": {"min_level": 60, "max_level": 50}})";
    }
    EXPECT_EQ(run("simulate --config bad.json").code, 2);
    EXPECT_EQ(run("simulate", "PUMPSCHED_CONFIG=bad.json").code, 2);
    EXPECT_EQ(run("simulate --config missing.json").code, 2);
    EXPECT_EQ(run("dataset validate nowhere.csv").code, 3);
    EXPECT_EQ(run("eval --checkpoint nowhere.bin").code, 3);
}
