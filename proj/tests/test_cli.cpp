#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

// End-to-end checks of the command-line runner: exit codes, artifact layout,
// and byte-level determinism of repeated runs.  FRACLOGI_BIN is injected by
// the build.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(FRACLOGI_BIN) + " " + args + " > cli_test_stdout.txt 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

const char* kEigenConfig = R"(
[grid]
dimension = 1
omega = -1 1
refuge = -0.4 0.4
resolution = 65

[operator]
s = 0.5
p = 2.0

[eigen]
domain = omega
)";

} // namespace

TEST_CASE("eigen mode writes report.json with lambda and the eigenfield CSV") {
    fs::remove_all("cli_out_eigen");
    write("cli_eigen.cfg", kEigenConfig);
    CHECK(run("eigen --config cli_eigen.cfg --out cli_out_eigen") == 0);
    auto j = nlohmann::json::parse(slurp("cli_out_eigen/report.json"));
    CHECK(j.contains("lambda"));
    CHECK(j["lambda"].get<double>() > 0.0);
    CHECK(fs::exists("cli_out_eigen/eigenfield.csv"));
    auto m = nlohmann::json::parse(slurp("cli_out_eigen/manifest.json"));
    CHECK(m["mode"] == "eigen");
    CHECK(m["grid"]["n_nodes"].get<std::size_t>() == 65);
}

TEST_CASE("repeated runs with identical config and seed are byte-identical") {
    write("cli_eigen.cfg", kEigenConfig);
    fs::remove_all("cli_out_a");
    fs::remove_all("cli_out_b");
    CHECK(run("eigen --config cli_eigen.cfg --out cli_out_a --seed 9") == 0);
    CHECK(run("eigen --config cli_eigen.cfg --out cli_out_b --seed 9") == 0);
    CHECK(slurp("cli_out_a/eigenfield.csv") == slurp("cli_out_b/eigenfield.csv"));
    CHECK(slurp("cli_out_a/report.json") == slurp("cli_out_b/report.json"));
}

TEST_CASE("unknown config keys exit with the validation code") {
    write("cli_bad.cfg", std::string(kEigenConfig) + "\n[grid]\n"); // duplicate section is fine; add junk key
    write("cli_bad.cfg", std::string(kEigenConfig) + "typo_key = 1\n");
    CHECK(run("eigen --config cli_bad.cfg --out cli_out_bad") == 2);
}

TEST_CASE("mode mismatch between config and subcommand is a validation error") {
    write("cli_mode.cfg", std::string(kEigenConfig) + "\n[run]\nmode = steady\n");
    CHECK(run("eigen --config cli_mode.cfg --out cli_out_mode") == 2);
}

TEST_CASE("evolve mode emits series, snapshots and summary with classification") {
    write("cli_evolve.cfg", R"(
[grid]
dimension = 1
omega = -1 1
refuge = -0.4 0.4
resolution = 65

[operator]
s = 0.5
p = 2.0

[problem]
q = 0.5
r = 2.0
lambda = 1.0

[scheme]
T = 0.2
dt = 0.01
snapshot_stride = 10

[evolve]
u0 = profile
)");
    fs::remove_all("cli_out_evolve");
    CHECK(run("evolve --config cli_evolve.cfg --out cli_out_evolve") == 0);
    CHECK(fs::exists("cli_out_evolve/series.csv"));
    CHECK(fs::exists("cli_out_evolve/fields/snap_0.csv"));
    CHECK(fs::exists("cli_out_evolve/fields/snap_20.csv"));
    auto j = nlohmann::json::parse(slurp("cli_out_evolve/summary.json"));
    CHECK(j.contains("classification"));
    CHECK(j["steps"].get<long>() == 20);

    // the header row of the series matches the documented columns
    std::ifstream f("cli_out_evolve/series.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == "t,linf,l2_omega,l2_refuge,E,E_refuge,I_refuge,dE_defect");
}

TEST_CASE("verify mode runs the invariant suite") {
    fs::remove_all("cli_out_verify");
    CHECK(run("verify --out cli_out_verify --seed 4") == 0);
    auto j = nlohmann::json::parse(slurp("cli_out_verify/report.json"));
    CHECK(j["failures"].get<int>() == 0);
    CHECK(j["checks"].size() >= 6);
}

TEST_CASE("classify mode reports well membership for a built-in datum") {
    write("cli_classify.cfg", R"(
[grid]
dimension = 1
omega = -1 1
refuge = -0.4 0.4
resolution = 65

[operator]
s = 0.5
p = 2.0

[problem]
q = 3.0
r = 2.0
lambda = 1.0

[classify]
initial = refuge_eigenfield
amplitude = 40.0
)");
    fs::remove_all("cli_out_classify");
    CHECK(run("classify --config cli_classify.cfg --out cli_out_classify") == 0);
    auto j = nlohmann::json::parse(slurp("cli_out_classify/report.json"));
    CHECK(j["well"]["membership"] == "in_H");
    CHECK(fs::exists("cli_out_classify/witness.csv"));
}

TEST_CASE("missing config file is a validation error") {
    CHECK(run("eigen --config does_not_exist.cfg --out cli_out_none") == 2);
}

TEST_CASE("inconclusive trajectory classification exits with its own code") {
    // flat series: neither stabilized (no target), nor blow-up, nor extinct
    write("cli_flat_series.csv",
          "t,linf,l2_omega,l2_refuge,E,E_refuge,I_refuge,dE_defect\n"
          "0,1,1,1,0,0,0,0\n0.1,1,1,1,0,0,0,0\n0.2,1,1,1,0,0,0,0\n0.3,1,1,1,0,0,0,0\n");
    write("cli_classify_traj.cfg", R"(
[grid]
dimension = 1
omega = -1 1
refuge = -0.4 0.4
resolution = 65

[operator]
s = 0.5
p = 2.0

[problem]
q = 3.0
r = 2.0
lambda = 1.0

[classify]
trajectory = cli_flat_series.csv
)");
    fs::remove_all("cli_out_traj");
    CHECK(run("classify --config cli_classify_traj.cfg --out cli_out_traj") == 4);
}

TEST_CASE("steady mode writes a certified state") {
    write("cli_steady.cfg", R"(
[grid]
dimension = 1
omega = -1 1
refuge = -0.4 0.4
resolution = 65

[operator]
s = 0.5
p = 2.0

[problem]
q = 0.5
r = 2.0
lambda = 1.0
)");
    fs::remove_all("cli_out_steady");
    CHECK(run("steady --config cli_steady.cfg --out cli_out_steady") == 0);
    auto j = nlohmann::json::parse(slurp("cli_out_steady/report.json"));
    CHECK(j["positive_solution"].get<bool>());
    CHECK(fs::exists("cli_out_steady/field.csv"));
}

TEST_CASE("manifest config echo re-runs to identical outputs") {
    write("cli_eigen.cfg", kEigenConfig);
    fs::remove_all("cli_out_echo_a");
    fs::remove_all("cli_out_echo_b");
    CHECK(run("eigen --config cli_eigen.cfg --out cli_out_echo_a") == 0);
    auto m = nlohmann::json::parse(slurp("cli_out_echo_a/manifest.json"));
    write("cli_echo.cfg", m["config_echo"].get<std::string>());
    CHECK(run("eigen --config cli_echo.cfg --out cli_out_echo_b") == 0);
    CHECK(slurp("cli_out_echo_a/eigenfield.csv") == slurp("cli_out_echo_b/eigenfield.csv"));
    CHECK(slurp("cli_out_echo_a/report.json") == slurp("cli_out_echo_b/report.json"));
}

TEST_CASE("scenario subcommand runs a named scenario and reports its checks") {
    fs::remove_all("cli_out_scen");
    CHECK(run("scenario --name vanish --out cli_out_scen") == 0);
    auto j = nlohmann::json::parse(slurp("cli_out_scen/report.json"));
    REQUIRE(j.size() == 1);
    CHECK(j[0]["name"] == "vanish");
    CHECK(j[0]["pass"].get<bool>());
    CHECK(fs::exists("cli_out_scen/vanish/vanish.csv"));
}
