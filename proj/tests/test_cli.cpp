#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "switsyn/controller.hpp"
#include "switsyn/model.hpp"

#include "json.hpp"

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace switsyn;

namespace {

std::string g_cli;
std::string g_src;
const char* kWork = "cli_scratch";

struct RunResult {
    int code = -1;
    std::string out;  // stdout and stderr combined
};

RunResult run_cli(const std::string& args) {
    RunResult r;
    std::string cmd = g_cli + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    char buf[4096];
    size_t got = 0;
    while ((got = fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, got);
    int st = pclose(p);
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

std::string at(const std::string& name) { return (fs::path(kWork) / name).string(); }

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Eigen::MatrixXd scalar(double v) {
    Eigen::MatrixXd m(1, 1);
    m << v;
    return m;
}

SystemSpec tiny_pair(const std::string& name) {
    SystemSpec sys;
    sys.name = name;
    for (int i = 0; i < 2; ++i) {
        SubsystemSpec sub;
        sub.n = sub.p = sub.u = sub.v = 1;
        sub.x0 = Eigen::VectorXd::Constant(1, i == 0 ? 1.0 : -1.0);
        RuleSpec rule;
        if (i == 0) {
            rule.A = scalar(-1.0);
            rule.B = scalar(1.0);
            rule.C = scalar(1.0);
            rule.Bw = scalar(0.1);
            rule.couplings[1] = {scalar(0.3), scalar(0.2)};
        } else {
            rule.A = scalar(-2.0);
            rule.B = scalar(0.5);
            rule.C = scalar(2.0);
            rule.Bw = scalar(0.15);
            rule.couplings[0] = {scalar(0.7), scalar(0.4)};
        }
        ModeSpec mode;
        mode.rules.push_back(rule);
        mode.memberships.push_back(MembershipFn::parse("1", "t"));
        mode.lambda = Eigen::VectorXd::Constant(1, -1.0);
        sub.modes.push_back(mode);
        TimeSchedule s;
        s.entries = {{0.0, 0}};
        sub.switching = s;
        sys.subs.push_back(sub);
    }
    return sys;
}

SystemSpec two_mode_pair(const std::string& name) {
    SystemSpec sys = tiny_pair(name);
    double shifted[2] = {-1.5, -2.5};
    for (int i = 0; i < 2; ++i) {
        SubsystemSpec& sub = sys.subs[static_cast<size_t>(i)];
        ModeSpec second = sub.modes[0];
        second.rules[0].A = scalar(shifted[i]);
        sub.modes.push_back(second);
        TimeSchedule s;
        s.entries = {{0.0, 0}, {2.0, 1}};
        sub.switching = s;
    }
    return sys;
}

// Shared fixture files, created once.
void ensure_fixtures() {
    static bool done = false;
    if (done) return;
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    save_system(tiny_pair("tiny"), at("tiny.sys"));
    save_system(tiny_pair("other"), at("other.sys"));
    save_system(two_mode_pair("twomode"), at("twomode.sys"));
    done = true;
}

}  // namespace

TEST_CASE("usage errors exit with the parse code") {
    ensure_fixtures();
    CHECK(run_cli("").code == 2);
    CHECK(run_cli("--help").code == 0);
    CHECK(run_cli("synth --no-such-flag").code == 2);
    CHECK(run_cli("frobnicate").code == 2);
}

TEST_CASE("missing required paths are reported") {
    ensure_fixtures();
    RunResult r = run_cli("synth");
    CHECK(r.code == 1);
    CHECK(r.out.find("missing --system") != std::string::npos);
}

TEST_CASE("validate passes the bundled example") {
    ensure_fixtures();
    RunResult r = run_cli("validate --system " + g_src + "/examples/paper_siv.sys");
    CHECK(r.code == 0);
    CHECK(r.out.find(": ok (") != std::string::npos);
}

TEST_CASE("validate distinguishes parse and semantic failures") {
    ensure_fixtures();
    {
        std::ofstream bad(at("truncated.sys"));
        bad << "system {\n  name = \"x\"\n";
    }
    RunResult r = run_cli("validate --system " + at("truncated.sys"));
    CHECK(r.code == 2);
    CHECK(r.out.find("error:") != std::string::npos);

    SystemSpec broken = tiny_pair("broken");
    broken.subs[0].modes[0].memberships[0] = MembershipFn::parse("0.4", "t");
    save_system(broken, at("broken.sys"));
    r = run_cli("validate --system " + at("broken.sys"));
    CHECK(r.code == 1);
    CHECK(r.out.find("violation:") != std::string::npos);

    CHECK(run_cli("validate --system " + at("nonexistent.sys")).code == 2);
}

TEST_CASE("synth writes a loadable controller plus diagnostics") {
    ensure_fixtures();
    RunResult r = run_cli("synth --system " + at("tiny.sys") + " --out " + at("tiny.ctl") +
                          " --zeta 4 --dump-conic " + at("conic.txt") + " --dump-blocks " +
                          at("blocks.txt"));
    CHECK(r.code == 0);
    CHECK(r.out.find("synth: layout coherent: feasible") != std::string::npos);
    CHECK(r.out.find("controller written to") != std::string::npos);

    ctrl::ControllerSet cs = ctrl::load_controller(at("tiny.ctl"));
    CHECK(cs.subs.size() == 2);
    CHECK(cs.system_name == "tiny");
    REQUIRE(cs.zeta2_option.has_value());
    CHECK((*cs.zeta2_option)[0] == 4.0);
    CHECK(!slurp(at("conic.txt")).empty());
    CHECK(!slurp(at("blocks.txt")).empty());
}

TEST_CASE("an impossible jump ratio exits with the infeasible code") {
    ensure_fixtures();
    RunResult r = run_cli("synth --system " + at("twomode.sys") + " --zeta 4 --mu 0.5");
    CHECK(r.code == 3);
    CHECK(r.out.find("growth cycle") != std::string::npos);
}

TEST_CASE("simulate writes csv plus summary or prints the summary") {
    ensure_fixtures();
    RunResult r = run_cli("simulate --system " + at("tiny.sys") + " --out " + at("open.csv") +
                          " --tend 0.1");
    CHECK(r.code == 0);
    nlohmann::json j = nlohmann::json::parse(slurp(at("open.json")));
    CHECK(j["controlled"] == false);
    CHECK(j["samples"] == 101);
    CHECK(j["zero_disturbance"] == true);
    std::string csv = slurp(at("open.csv"));
    CHECK(csv.rfind("t,mode1,", 0) == 0);

    r = run_cli("simulate --system " + at("tiny.sys") + " --tend 0.01");
    CHECK(r.code == 0);
    nlohmann::json inline_summary = nlohmann::json::parse(r.out);
    CHECK(inline_summary["samples"] == 11);
}

TEST_CASE("simulate closes the loop and flags name mismatches") {
    ensure_fixtures();
    REQUIRE(run_cli("synth --system " + at("tiny.sys") + " --out " + at("tiny.ctl") +
                    " --zeta 4")
                .code == 0);

    RunResult r = run_cli("simulate --system " + at("tiny.sys") + " --controller " +
                          at("tiny.ctl") + " --out " + at("closed.csv") + " --tend 0.1");
    CHECK(r.code == 0);
    nlohmann::json j = nlohmann::json::parse(slurp(at("closed.json")));
    CHECK(j["controlled"] == true);

    r = run_cli("simulate --system " + at("other.sys") + " --controller " + at("tiny.ctl") +
                " --tend 0.01");
    CHECK(r.code == 0);
    CHECK(r.out.find("warning: controller was synthesized for 'tiny'") != std::string::npos);
}

TEST_CASE("verify certifies a synthesized controller") {
    ensure_fixtures();
    REQUIRE(run_cli("synth --system " + at("tiny.sys") + " --out " + at("tiny.ctl") +
                    " --zeta 4")
                .code == 0);

    RunResult r = run_cli("verify --system " + at("tiny.sys") + " --controller " + at("tiny.ctl") +
                          " --out " + at("report.json") + " --tend 2 --runs 2");
    CHECK(r.code == 0);
    CHECK(r.out.find("verify: PASS") != std::string::npos);
    nlohmann::json j = nlohmann::json::parse(slurp(at("report.json")));
    CHECK(j["pass"] == true);
    CHECK(j["inequalities"]["source"] == "resynthesis");
}

TEST_CASE("verify fails a controller whose level is overstated") {
    ensure_fixtures();
    REQUIRE(run_cli("synth --system " + at("tiny.sys") + " --out " + at("tiny.ctl") +
                    " --zeta 4")
                .code == 0);
    ctrl::ControllerSet cs = ctrl::load_controller(at("tiny.ctl"));
    cs.subs[0].zeta2 = 1e-12;
    ctrl::save_controller(cs, at("overstated.ctl"));

    RunResult r = run_cli("verify --system " + at("tiny.sys") + " --controller " +
                          at("overstated.ctl") + " --tend 2 --runs 2 --no-resynth");
    CHECK(r.code == 1);
    CHECK(r.out.find("attenuation FAIL") != std::string::npos);
    CHECK(r.out.find("verify: FAIL") != std::string::npos);
}

TEST_CASE("a destabilized controller surfaces as divergence") {
    ensure_fixtures();
    REQUIRE(run_cli("synth --system " + at("tiny.sys") + " --out " + at("tiny.ctl") +
                    " --zeta 4")
                .code == 0);
    ctrl::ControllerSet cs = ctrl::load_controller(at("tiny.ctl"));
    for (auto& sc : cs.subs) sc.modes[0].gain[0] = 60.0 * sc.modes[0].mixer[0];
    ctrl::save_controller(cs, at("unstable.ctl"));

    RunResult r = run_cli("verify --system " + at("tiny.sys") + " --controller " +
                          at("unstable.ctl") + " --no-resynth");
    CHECK(r.code == 5);
    CHECK(r.out.find("state norm exceeded") != std::string::npos);
}

TEST_CASE("config keys fill in defaults and flags win") {
    ensure_fixtures();
    {
        std::ofstream cfg(at("cfg.json"));
        cfg << "{\n  \"system\": \"" << at("tiny.sys") << "\",\n  \"zeta\": 4.0,\n"
            << "  \"tend\": 0.1\n}\n";
    }
    RunResult r = run_cli("synth --config " + at("cfg.json"));
    CHECK(r.code == 0);
    CHECK(r.out.find("feasible") != std::string::npos);

    r = run_cli("simulate --config " + at("cfg.json"));
    CHECK(r.code == 0);
    CHECK(nlohmann::json::parse(r.out)["samples"] == 101);

    r = run_cli("simulate --config " + at("cfg.json") + " --tend 0.05");
    CHECK(r.code == 0);
    CHECK(nlohmann::json::parse(r.out)["samples"] == 51);
}

TEST_CASE("repro leaves a complete and reproducible bundle") {
    ensure_fixtures();
    std::string common = "repro --system " + at("tiny.sys") +
                         " --zeta 4 --tend 15 --runs 2 --out ";
    RunResult r1 = run_cli(common + at("bundle1"));
    CHECK(r1.code == 0);
    CHECK(r1.out.find("repro: PASS") != std::string::npos);
    RunResult r2 = run_cli(common + at("bundle2"));
    CHECK(r2.code == 0);

    const char* files[] = {"controller.ctl", "trajectory.csv",  "simulation.json",
                           "verification.json", "synthesis.txt", "config.json", "repro.json"};
    for (const char* f : files) {
        INFO(f);
        std::string a = slurp((fs::path(at("bundle1")) / f).string());
        std::string b = slurp((fs::path(at("bundle2")) / f).string());
        CHECK(!a.empty());
        CHECK(a == b);
    }
    nlohmann::json j = nlohmann::json::parse(slurp((fs::path(at("bundle1")) / "repro.json").string()));
    CHECK(j["certified"] == true);
    CHECK(j["settled"] == true);
    CHECK(j["pass"] == true);
}

int main(int argc, char** argv) {
    if (argc >= 3) {
        g_cli = argv[1];
        g_src = argv[2];
    } else {
        std::fprintf(stderr, "usage: test_cli <cli-binary> <source-dir>\n");
        return 64;
    }
    doctest::Context context;
    context.applyCommandLine(1, argv);
    return context.run();
}
