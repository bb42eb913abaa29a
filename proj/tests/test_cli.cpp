#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
};

RunResult run(const std::string &args, const std::string &env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + std::string(ARQCD_CLI_PATH) + " " + args + " 2>/dev/null";
    RunResult r;
    FILE *pipe = popen(cmd.c_str(), "r");
    if (!pipe) {
        return r;
    }
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) {
        r.out.append(buf.data(), n);
    }
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::string> lines(const std::string &text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        out.push_back(line);
    }
    return out;
}

class Cli : public ::testing::Test {
  protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("arqcd_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::create_directories(dir_);
        std::ofstream(dir_ / "case1.json") << R"({"dim": 2, "order": 1,
            "coeffs": [[[0.7, 0.4], [0.2, 0.6]]], "innovation_cov": [[1.0, 0.5], [0.5, 1.0]]})";
        std::ofstream(dir_ / "a0.json") << R"({"dim": 1, "order": 1, "coeffs": [[0.0]], "innovation_cov": [[1.0]]})";
        std::ofstream(dir_ / "ar2.json") << R"({"dim": 2, "order": 2,
            "coeffs": [[[0.4, 0.3], [0.2, 0.1]], [[0.3, 0.2], [0.1, 0.2]]], "innovation_cov": [[1, 0], [0, 1]]})";
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string &name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

} // namespace

TEST_F(Cli, SimulateWithoutChange) {
    const auto r = run("simulate --model " + path("case1.json") + " --t0 inf --len 1000 --seed 7 --out " +
                       path("a.csv"));
    ASSERT_EQ(r.exit_code, 0);
    const auto rows = lines(slurp(path("a.csv")));
    ASSERT_EQ(rows.size(), 1001u);
    EXPECT_EQ(rows[0], "t,y_1,y_2,is_post_change");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].back(), '0');
    }
}

TEST_F(Cli, SimulateIsByteIdentical) {
    const std::string args = "simulate --model " + path("case1.json") + " --t0 inf --len 1000 --seed 7 --out ";
    ASSERT_EQ(run(args + path("a.csv")).exit_code, 0);
    ASSERT_EQ(run(args + path("b.csv")).exit_code, 0);
    EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
}

TEST_F(Cli, SimulateFlagsPostChangeRows) {
    const auto r = run("simulate --model " + path("case1.json") + " --t0 500 --len 1000 --seed 7");
    ASSERT_EQ(r.exit_code, 0);
    const auto rows = lines(r.out);
    ASSERT_EQ(rows.size(), 1001u);
    for (std::size_t t = 1; t <= 1000; ++t) {
        EXPECT_EQ(rows[t].back(), t >= 500 ? '1' : '0') << "t=" << t;
    }
}

TEST_F(Cli, ConfigErrorsExitTwo) {
    EXPECT_EQ(run("simulate --model " + path("case1.json") + " --len 10").exit_code, 2);
    EXPECT_EQ(run("simulate --model " + path("case1.json") + " --len 10 --t0 soon --seed 1").exit_code, 2);
    EXPECT_EQ(run("simulate --model " + path("missing.json") + " --len 10 --seed 1").exit_code, 2);
    EXPECT_EQ(run("arl --model " + path("case1.json") + " --gamma 100 --reps 10").exit_code, 2);
    EXPECT_EQ(run("detect --model " + path("case1.json") + " --detector bayes --threshold 1 --seed 1").exit_code, 2);
    EXPECT_EQ(run("detect --model " + path("case1.json") + " --threshold 1 --gamma 10 --seed 1").exit_code, 2);
    EXPECT_EQ(run("curve --model " + path("case1.json") + " --gammas 1000,100 --seed 1").exit_code, 2);
    EXPECT_EQ(run("frobnicate").exit_code, 2);
    EXPECT_EQ(run("").exit_code, 2);
    std::ofstream(path("unstable.json")) << R"({"dim": 1, "order": 1, "coeffs": [[1.5]], "innovation_cov": [[1]]})";
    EXPECT_EQ(run("k --model " + path("unstable.json") + " --seed 1").exit_code, 2);
}

TEST_F(Cli, DetectTinyThresholdStopsAtOne) {
    std::ofstream(path("traj.csv")) << "t,y_1,is_post_change\n1,3.0,0\n2,0.0,0\n";
    const auto r = run("detect --model " + path("a0.json") + " --trajectory " + path("traj.csv") +
                       " --detector stationary --threshold 0.0001");
    ASSERT_EQ(r.exit_code, 0);
    EXPECT_EQ(r.out.rfind("tau=1 ", 0), 0u) << r.out;
}

TEST_F(Cli, ErgodicAndStationaryAgreeWhenTransitionIsZero) {
    ASSERT_EQ(run("simulate --model " + path("a0.json") + " --t0 200 --len 2000 --seed 3 --out " + path("t.csv"))
                  .exit_code,
              0);
    const std::string common = "detect --model " + path("a0.json") + " --trajectory " + path("t.csv") + " --gamma 1000";
    const auto e = run(common + " --detector ergodic");
    const auto s = run(common + " --detector stationary");
    ASSERT_EQ(e.exit_code, 0);
    ASSERT_EQ(s.exit_code, 0);
    EXPECT_EQ(e.out.substr(0, e.out.find(' ')), s.out.substr(0, s.out.find(' ')));
    EXPECT_EQ(e.out.rfind("tau=", 0), 0u);
}

TEST_F(Cli, OgaRunsEndToEnd) {
    const auto r = run("detect --model " + path("case1.json") +
                       " --t0 100 --len 3000 --seed 5 --detector oga --beta 1e-3 --eps 1e-4 --gamma 1000 --out " +
                       path("trace.csv"));
    ASSERT_EQ(r.exit_code, 0);
    EXPECT_TRUE(r.out.rfind("tau=", 0) == 0 || r.out == "no alarm\n") << r.out;
    const auto rows = lines(slurp(path("trace.csv")));
    ASSERT_GE(rows.size(), 2u);
    EXPECT_EQ(rows[0], "t,increment,statistic,stopped,a_err_fro,r_err_fro");
}

TEST_F(Cli, CurveHasOneRowPerDetectorAndGamma) {
    const auto r = run("curve --model " + path("case1.json") +
                       " --gammas 100,1000,10000 --detectors ergodic,stationary --reps 8 --horizon 20000 --seed 11");
    ASSERT_EQ(r.exit_code, 0);
    const auto rows = lines(r.out);
    ASSERT_EQ(rows.size(), 7u);
    EXPECT_EQ(rows[0], "detector,gamma,threshold,arl_hat,arl_se,delay_hat,delay_se,n_censored");
    EXPECT_EQ(rows[1].rfind("ergodic,100,", 0), 0u);
    EXPECT_EQ(rows[6].rfind("stationary,10000,", 0), 0u);
}

TEST_F(Cli, WorkerCountDoesNotChangeOutput) {
    const std::string args =
        "curve --model " + path("case1.json") + " --gammas 10,100 --detectors ergodic,oga --reps 16 --horizon 5000 --seed 4";
    const auto one = run(args + " --workers 1");
    const auto eight = run(args + " --workers 8");
    const auto env = run(args + " --workers 1", "ARQCD_WORKERS=3");
    ASSERT_EQ(one.exit_code, 0);
    EXPECT_EQ(one.out, eight.out);
    EXPECT_EQ(one.out, env.out);
}

TEST_F(Cli, DriftConstantForZeroTransition) {
    const auto r = run("k --model " + path("a0.json") + " --horizon 100000 --reps 20 --seed 2 --burn-in 100");
    ASSERT_EQ(r.exit_code, 0);
    const auto rows = lines(r.out);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], "k_hat,k_se,reps,horizon,burn_in");
    std::istringstream cells(rows[1]);
    std::string k_hat, k_se;
    std::getline(cells, k_hat, ',');
    std::getline(cells, k_se, ',');
    EXPECT_NEAR(std::stod(k_hat), 0.15342640972002736, 4 * std::stod(k_se));
}

TEST_F(Cli, ArlAndDelayCommands) {
    const auto a = run("arl --model " + path("case1.json") + " --gamma 20 --reps 20 --horizon 5000 --seed 1");
    ASSERT_EQ(a.exit_code, 0);
    EXPECT_EQ(lines(a.out).size(), 2u);
    const auto d = run("delay --model " + path("case1.json") + " --gamma 20 --reps 20 --horizon 5000 --t0 10 --seed 1");
    ASSERT_EQ(d.exit_code, 0);
    EXPECT_EQ(lines(d.out)[0], "detector,threshold,t0,delay_hat,delay_se,n,n_censored,n_discarded");
}

TEST_F(Cli, LiftPrintsBlockForm) {
    const auto r = run("lift --model " + path("ar2.json"));
    ASSERT_EQ(r.exit_code, 0);
    EXPECT_NE(r.out.find("\"dim\": 4"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("\"order\": 1"), std::string::npos);
    // Lower-right block of the lifted transition starts with A1*A1 + A2 = 0.52.
    EXPECT_NE(r.out.find("0.52"), std::string::npos);
}

TEST_F(Cli, HigherOrderModelsRunOnBlocks) {
    const auto r = run("simulate --model " + path("ar2.json") + " --t0 3 --len 5 --seed 1");
    ASSERT_EQ(r.exit_code, 0);
    EXPECT_EQ(lines(r.out)[0], "t,y_1,y_2,y_3,y_4,is_post_change");
}
