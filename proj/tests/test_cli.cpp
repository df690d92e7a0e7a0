#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "support.hpp"

#ifndef ONEBIT_FL_CLI
#error "ONEBIT_FL_CLI must point at the command-line binary"
#endif

namespace {

struct Result {
    int code;
    std::string out;
};

Result invoke(const std::string& args) {
    const std::string cmd = std::string(ONEBIT_FL_CLI) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("cost prints the nominal reduction") {
    const auto r = invoke("cost");
    CHECK(r.code == 0);
    CHECK(r.out.find("0.996875 (99.69%)") != std::string::npos);
    CHECK(r.out.find("n = 203530, m = 20353, S = 20") != std::string::npos);
}

TEST_CASE("run with zero rounds writes a header-only CSV") {
    const auto dir = testing::scratch_dir("cli_t0");
    const auto r = invoke("run --rounds 0 --out " + dir.string());
    REQUIRE(r.code == 0);
    CHECK(slurp(dir / "metrics.csv") ==
          "round,mean_train_loss,mean_test_accuracy,uplink_bits,downlink_bits,potential_estimate,delta_max,"
          "sampling_error_term,grad_norm_sq\n");
    const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
    CHECK(summary["rounds"] == 0);
    CHECK(summary.contains("git_describe"));
    CHECK(summary.contains("wall_seconds"));
}

TEST_CASE("run is reproducible from its config echo") {
    const auto a = testing::scratch_dir("cli_a");
    const auto b = testing::scratch_dir("cli_b");
    REQUIRE(invoke("run --rounds 3 --clients 6 --participants 3 --seed 5 --broadcast-once --out " + a.string()).code ==
            0);
    // Replay from the echo, redirecting output.
    std::string echo = slurp(a / "config.txt");
    testing::write_text(b / "replay.cfg", echo);
    REQUIRE(invoke("run --config " + (b / "replay.cfg").string() + " --out " + b.string()).code == 0);
    CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
    CHECK(slurp(a / "metrics.csv").find("\n2,") != std::string::npos);
}

TEST_CASE("flags override file keys") {
    const auto dir = testing::scratch_dir("cli_override");
    testing::write_text(dir / "c.cfg", "T = 50\nalgorithm = fedavg\n");
    REQUIRE(invoke("run --config " + (dir / "c.cfg").string() + " --rounds 1 --algo local --out " + dir.string())
                .code == 0);
    const auto echo = slurp(dir / "config.txt");
    CHECK(echo.find("T = 1\n") != std::string::npos);
    CHECK(echo.find("algorithm = local\n") != std::string::npos);
}

TEST_CASE("validation errors exit with 1") {
    CHECK(invoke("run --m-ratio 1.5").code == 1);
    CHECK(invoke("run --participants 30").code == 1);
    CHECK(invoke("run --potential maybe").code == 1);
    CHECK(invoke("frobnicate").code == 1);
    const auto dir = testing::scratch_dir("cli_badkey");
    testing::write_text(dir / "bad.cfg", "foo = 1\n");
    const auto r = invoke("run --config " + (dir / "bad.cfg").string());
    CHECK(r.code == 1);
    CHECK(r.out.find("valid keys") != std::string::npos);
}

TEST_CASE("numeric failures exit with 2") {
    const auto dir = testing::scratch_dir("cli_nan");
    testing::write_text(dir / "d.csv", "0,1\n1,nan\n0,2\n1,3\n");
    const auto cfg = "dataset = csv\ntrain_path = " + (dir / "d.csv").string() +
                     "\ndim = 1\nK = 1\nS = 1\nbatch_size = 3\ntest_fraction = 0\nT = 1\n";
    testing::write_text(dir / "c.cfg", cfg);
    const auto r = invoke("run --config " + (dir / "c.cfg").string() + " --out " + dir.string());
    CHECK(r.code == 2);
}

TEST_CASE("check reports every diagnostic as passing") {
    const auto dir = testing::scratch_dir("cli_check");
    const auto r = invoke("check --rounds 20 --out " + (dir / "report.json").string());
    CHECK(r.code == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(j["all_pass"].get<bool>());
}
