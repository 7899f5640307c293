// Acceptance harness. Runs the full pipeline on the bundled example plus a
// set of independent numerical oracles, printing one PASS/FAIL line per
// criterion. Exits with the number of failed criteria.
//
// Usage: acceptance <cli-binary> <source-dir>

#include "switsyn/controller.hpp"
#include "switsyn/error.hpp"
#include "switsyn/lmi.hpp"
#include "switsyn/model.hpp"
#include "switsyn/sdp.hpp"
#include "switsyn/sim.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace switsyn;

namespace {

int g_failures = 0;

void report(int id, const std::string& label, bool ok, const std::string& detail) {
    std::cout << "acceptance " << id << " (" << label << "): " << (ok ? "PASS" : "FAIL");
    if (!detail.empty()) std::cout << " " << detail;
    std::cout << "\n";
    if (!ok) ++g_failures;
}

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& cli, const std::string& args) {
    RunResult r;
    std::string cmd = "'" + cli + "' " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[512];
    while (fgets(buf, sizeof buf, pipe)) r.output += buf;
    int status = pclose(pipe);
    if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// Scalar single-rule plant for the integrator benchmark.
SystemSpec scalar_plant(double a) {
    SystemSpec sys;
    sys.name = "bench";
    SubsystemSpec sub;
    sub.n = 1;
    sub.p = 1;
    sub.u = 1;
    sub.v = 1;
    sub.x0 = Eigen::VectorXd::Ones(1);
    RuleSpec rule;
    rule.A = Eigen::MatrixXd::Constant(1, 1, a);
    rule.B = Eigen::MatrixXd::Ones(1, 1);
    rule.C = Eigen::MatrixXd::Ones(1, 1);
    rule.Bw = Eigen::MatrixXd::Zero(1, 1);
    ModeSpec mode;
    mode.rules.push_back(rule);
    mode.memberships.push_back(MembershipFn::parse("1", "bench"));
    mode.lambda = Eigen::VectorXd::Constant(1, -1.0);
    sub.modes.push_back(mode);
    TimeSchedule sched;
    sched.entries = {{0.0, 0}};
    sub.switching = sched;
    sys.subs.push_back(sub);
    return sys;
}

// One-subsystem two-state plant, single rule, one input and one output.
SystemSpec lti_plant() {
    SystemSpec sys;
    sys.name = "lti";
    SubsystemSpec sub;
    sub.n = 2;
    sub.p = 1;
    sub.u = 1;
    sub.v = 1;
    sub.x0 = Eigen::VectorXd::Zero(2);
    RuleSpec rule;
    rule.A = Eigen::MatrixXd(2, 2);
    rule.A << -1.0, 0.5, 0.0, -2.0;
    rule.B = Eigen::MatrixXd(2, 1);
    rule.B << 0.0, 1.0;
    rule.C = Eigen::MatrixXd(1, 2);
    rule.C << 1.0, 0.0;
    rule.Bw = Eigen::MatrixXd::Constant(2, 1, 0.05);
    ModeSpec mode;
    mode.rules.push_back(rule);
    mode.memberships.push_back(MembershipFn::parse("1", "lti"));
    mode.lambda = Eigen::VectorXd::Constant(1, -1.0);
    sub.modes.push_back(mode);
    TimeSchedule sched;
    sched.entries = {{0.0, 0}};
    sub.switching = sched;
    sys.subs.push_back(sub);
    return sys;
}

double inf_norm(const Eigen::VectorXd& v) { return v.lpNorm<Eigen::Infinity>(); }

}  // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::cerr << "usage: acceptance <cli-binary> <source-dir>\n";
        return 64;
    }
    const std::string cli = argv[1];
    const fs::path src = argv[2];
    const std::string example = (src / "examples" / "paper_siv.sys").string();
    const fs::path work = fs::path("acceptance_scratch");
    std::error_code ec;
    fs::remove_all(work, ec);
    fs::create_directories(work);

    SystemSpec sys;
    lmi::SynthesisOptions sopt;
    sopt.epsilon = 1e-6;
    sopt.zeta2 = std::vector<double>{1.7, 1.5};
    sopt.lambda_override = -6.0;
    std::optional<ctrl::SynthesisReport> synth;

    // 1. The bundled two-subsystem example synthesizes a certified controller.
    {
        bool ok = false;
        std::string detail;
        try {
            sys = load_system(example);
            auto t0 = std::chrono::steady_clock::now();
            ctrl::SynthesisReport rep = ctrl::synthesize(sys, sopt);
            double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::vector<lmi::Residual> res = lmi::residual_check(rep.program, rep.theta, 1e-7);
            bool certified = !res.empty();
            double worst = 0.0;
            for (const lmi::Residual& r : res) {
                certified = certified && r.pass;
                worst = std::min(worst, r.min_eig - r.margin);
            }
            RunResult cr = run_cli(cli, "synth --system '" + example +
                                            "' --zeta 1.7,1.5 --lambda -6 --out '" +
                                            (work / "siv.ctl").string() + "'");
            ok = rep.status == sdp::SolveStatus::Feasible && certified && secs < 60.0 &&
                 cr.exit_code == 0;
            detail = "(status " + std::string(sdp::status_name(rep.status)) + ", worst residual slack " +
                     fmt(worst) + ", " + fmt(secs) + " s, cli exit " + fmt(cr.exit_code) + ")";
            if (ok) synth = std::move(rep);
        } catch (const Error& e) {
            detail = std::string("(") + e.what() + ")";
        }
        report(1, "bundled example synthesis", ok, detail);
    }

    // 2. Noise-free closed loop: late-time decay, Lyapunov decrease between
    //    switches, bounded jumps at switches. All three recomputed here from
    //    the raw trajectory.
    if (synth) {
        bool ok = false;
        std::string detail;
        try {
            const ctrl::ControllerSet& cs = synth->controller;
            sim::SimOptions so;
            so.dt = 1e-3;
            so.t_end = 30.0;
            sim::Trajectory tr = sim::simulate(sys, cs, so);
            const size_t ns = tr.subs.size();

            double tail = 0.0;
            for (size_t s = 0; s < tr.samples(); ++s)
                if (tr.time[s] >= 25.0)
                    for (size_t i = 0; i < ns; ++i)
                        tail = std::max(tail, inf_norm(tr.subs[i].x[s]));

            std::vector<std::vector<double>> v(ns);
            for (size_t i = 0; i < ns; ++i) {
                v[i].resize(tr.samples());
                for (size_t s = 0; s < tr.samples(); ++s)
                    v[i][s] = sim::lyapunov_value(cs, sys, static_cast<int>(i),
                                                  tr.subs[i].mode[s], tr.subs[i].x[s]);
            }

            int increases = 0;
            int jump_violations = 0;
            int jumps = 0;
            for (size_t s = 0; s + 1 < tr.samples(); ++s) {
                bool switched = false;
                for (size_t i = 0; i < ns; ++i)
                    switched = switched || tr.subs[i].mode[s + 1] != tr.subs[i].mode[s];
                if (!switched) {
                    double before = 0.0, after = 0.0;
                    for (size_t i = 0; i < ns; ++i) {
                        before += v[i][s];
                        after += v[i][s + 1];
                    }
                    if (after > before * (1.0 + 1e-8) + 1e-10) ++increases;
                    continue;
                }
                for (size_t i = 0; i < ns; ++i) {
                    if (tr.subs[i].mode[s + 1] == tr.subs[i].mode[s]) continue;
                    ++jumps;
                    double before = sim::lyapunov_value(cs, sys, static_cast<int>(i),
                                                        tr.subs[i].mode[s], tr.subs[i].x[s + 1]);
                    double after = v[i][s + 1];
                    if (after > cs.mu_of(static_cast<int>(i)) * before * (1.0 + 1e-6) + 1e-12)
                        ++jump_violations;
                }
            }

            ok = tail <= 1e-3 && increases == 0 && jump_violations == 0;
            detail = "(sup |x| past 25 s " + fmt(tail) + ", increases " + fmt(increases) +
                     ", jumps " + fmt(jumps) + ", jump violations " + fmt(jump_violations) + ")";
        } catch (const Error& e) {
            detail = std::string("(") + e.what() + ")";
        }
        report(2, "closed-loop decay and Lyapunov discipline", ok, detail);
    } else {
        report(2, "closed-loop decay and Lyapunov discipline", false, "(no controller)");
    }

    // 3. Twenty seeded noisy runs from rest stay inside the synthesized
    //    attenuation levels. Energies integrated here, not by the library.
    if (synth) {
        bool ok = false;
        std::string detail;
        try {
            const ctrl::ControllerSet& cs = synth->controller;
            SystemSpec rest = sys;
            for (SubsystemSpec& sub : rest.subs) sub.x0.setZero();
            const std::array<double, 2> levels = {1.7, 1.5};
            double worst0 = 0.0, worst1 = 0.0;
            bool within = true;
            for (std::uint64_t seed = 1; seed <= 20; ++seed) {
                sim::SimOptions so;
                so.dt = 1e-3;
                so.t_end = 30.0;
                so.sigma = 0.01;
                so.seed = seed;
                sim::Trajectory tr = sim::simulate(rest, cs, so);
                double denom = 0.0;
                std::array<double, 2> num = {0.0, 0.0};
                for (size_t s = 0; s + 1 < tr.samples(); ++s) {
                    double h = 0.5 * (tr.time[s + 1] - tr.time[s]);
                    for (size_t i = 0; i < tr.subs.size(); ++i) {
                        const sim::SubTrace& t = tr.subs[i];
                        denom += h * (t.w[s].squaredNorm() + t.w[s + 1].squaredNorm());
                        num[i] += h * (t.y[s].squaredNorm() + t.y[s + 1].squaredNorm());
                    }
                }
                double r0 = num[0] / denom;
                double r1 = num[1] / denom;
                worst0 = std::max(worst0, r0);
                worst1 = std::max(worst1, r1);
                within = within && r0 <= levels[0] && r1 <= levels[1];
            }
            ok = within;
            detail = "(worst ratios " + fmt(worst0) + " of 1.7, " + fmt(worst1) + " of 1.5)";
        } catch (const Error& e) {
            detail = std::string("(") + e.what() + ")";
        }
        report(3, "empirical attenuation under seeded noise", ok, detail);
    } else {
        report(3, "empirical attenuation under seeded noise", false, "(no controller)");
    }

    // 4. Assembled block and scalar counts agree with a brute-force
    //    enumeration from the parsed shapes.
    {
        bool ok = false;
        std::string detail;
        try {
            lmi::LmiProgram prog = lmi::assemble_program(sys, sopt);
            std::map<std::string, int> families;
            for (const lmi::LmiBlock& b : prog.blocks) ++families[b.family];

            int g1 = 0, g2 = 0, g3 = 0, g4s = 0, g4r = 0, scalars = 0, taus = 0;
            for (const SubsystemSpec& sub : sys.subs) {
                std::set<int> peers;
                for (const ModeSpec& mode : sub.modes)
                    for (const RuleSpec& rule : mode.rules)
                        for (const auto& [alpha, c] : rule.couplings) peers.insert(alpha);
                taus += static_cast<int>(peers.size());
                int sn = sub.n * (sub.n + 1) / 2;
                int sp = sub.p * (sub.p + 1) / 2;
                int su = sub.u * (sub.u + 1) / 2;
                std::vector<int> r;
                for (const ModeSpec& mode : sub.modes) r.push_back(static_cast<int>(mode.rules.size()));
                for (size_t j = 0; j < r.size(); ++j) {
                    g1 += 3 * r[j];
                    g2 += r[j] * r[j] * r[j];
                    g4s += r[j] * r[j] * r[j];
                    g4r += static_cast<int>(peers.size()) * r[j] * r[j] * r[j];
                    scalars += r[j] * (sn + sp + su + sub.u * sub.p) + r[j] * r[j] * sn;
                    for (size_t j2 = 0; j2 < r.size(); ++j2)
                        if (j2 != j) g3 += r[j] * r[j2];
                }
            }
            scalars += taus;

            bool match = families["G1"] == g1 && families["G2"] == g2 && families["G3"] == g3 &&
                         families["G4s"] == g4s && families["G4r"] == g4r &&
                         prog.catalogue.scalar_count() == scalars;
            bool expected = g1 == 24 && g2 == 32 && g3 == 16 && g4s == 32 && g4r == 32 &&
                            g1 + g2 + g3 + g4s + g4r == 136 && scalars == 234;
            ok = match && expected;
            detail = "(blocks " + fmt(families["G1"]) + "/" + fmt(families["G2"]) + "/" +
                     fmt(families["G3"]) + "/" + fmt(families["G4s"]) + "/" + fmt(families["G4r"]) +
                     ", scalars " + fmt(prog.catalogue.scalar_count()) + ")";
        } catch (const Error& e) {
            detail = std::string("(") + e.what() + ")";
        }
        report(4, "assembly enumeration agreement", ok, detail);
    }

    // 5. Direct block evaluation matches the flattened conic form on random
    //    assignments, and the reduced-to-full expansion is exact.
    {
        bool ok = false;
        std::string detail;
        try {
            lmi::LmiProgram prog = lmi::assemble_program(sys, sopt);
            sdp::ConicProgram cp = sdp::encode(prog);
            std::mt19937 rng(20260818u);
            std::normal_distribution<double> dist(0.0, 1.0);
            double worst = 0.0;
            bool exact = cp.blocks.size() == prog.blocks.size() - prog.dropped.size();
            for (int trial = 0; trial < 100; ++trial) {
                Eigen::VectorXd theta(cp.reduced_count);
                for (int i = 0; i < cp.reduced_count; ++i) theta(i) = dist(rng);
                Eigen::VectorXd full = cp.expand(theta);

                std::vector<char> seen(static_cast<size_t>(cp.reduced_count), 0);
                for (int p = 0; p < cp.full_count; ++p) {
                    int r = cp.expand_index[static_cast<size_t>(p)];
                    if (seen[static_cast<size_t>(r)]) continue;
                    if (cp.expand_scale[static_cast<size_t>(p)] == 1.0) {
                        seen[static_cast<size_t>(r)] = 1;
                        exact = exact && full(p) == theta(r);
                    }
                }
                for (char s : seen) exact = exact && s == 1;

                size_t ci = 0;
                for (size_t b = 0; b < prog.blocks.size(); ++b) {
                    if (std::binary_search(prog.dropped.begin(), prog.dropped.end(), b)) continue;
                    const lmi::LmiBlock& blk = prog.blocks[b];
                    double sense = blk.sense == lmi::Sense::LE ? -1.0 : 1.0;
                    Eigen::MatrixXd direct =
                        sense * blk.eval(prog.catalogue, full) -
                        blk.margin * Eigen::MatrixXd::Identity(blk.dim, blk.dim);
                    Eigen::MatrixXd conic = cp.blocks[ci++].eval(theta);
                    worst = std::max(worst, (direct - conic).cwiseAbs().maxCoeff());
                }
            }
            ok = worst <= 1e-12 && exact;
            detail = "(max deviation " + fmt(worst) + ", expansion exact " + (exact ? "yes" : "no") + ")";
        } catch (const Error& e) {
            detail = std::string("(") + e.what() + ")";
        }
        report(5, "encoder equivalence and exact expansion", ok, detail);
    }

    // 6. tau A'A + (1/tau) B'B - A'B - B'A is positive semidefinite for
    //    every tau > 0; fuzzed over sizes and magnitudes.
    {
        std::mt19937 rng(42u);
        std::normal_distribution<double> dist(0.0, 1.0);
        double worst = 0.0;
        for (int trial = 0; trial < 1000; ++trial) {
            int d = 1 + trial % 5;
            Eigen::MatrixXd A(d, d), B(d, d);
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c) {
                    A(r, c) = dist(rng);
                    B(r, c) = dist(rng);
                }
            double tau = std::exp(dist(rng));
            Eigen::MatrixXd M = tau * A.transpose() * A + (1.0 / tau) * B.transpose() * B -
                                A.transpose() * B - B.transpose() * A;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
            worst = std::min(worst, es.eigenvalues().minCoeff());
        }
        report(6, "cross-term completion bound", worst >= -1e-9,
               "(smallest eigenvalue " + fmt(worst) + ")");
    }

    // 7. Single linear plant with matching input and output widths: the
    //    synthesized static output feedback places the closed loop in the
    //    open left half plane.
    {
        bool ok = false;
        std::string detail;
        try {
            SystemSpec plant = lti_plant();
            lmi::SynthesisOptions opt;
            opt.epsilon = 1e-6;
            opt.zeta2 = std::vector<double>{1.0};
            ctrl::SynthesisReport rep = ctrl::synthesize(plant, opt);
            const ctrl::ModeController& mc = rep.controller.subs[0].modes[0];
            const RuleSpec& rule = plant.subs[0].modes[0].rules[0];
            Eigen::MatrixXd acl =
                rule.A + rule.B * (mc.gain[0] * mc.mixer[0].inverse() * rule.C);
            Eigen::EigenSolver<Eigen::MatrixXd> es(acl, false);
            double abscissa = es.eigenvalues().real().maxCoeff();
            ok = rep.status == sdp::SolveStatus::Feasible && abscissa < 0.0;
            detail = "(closed-loop abscissa " + fmt(abscissa) + ")";
        } catch (const Error& e) {
            detail = std::string("(") + e.what() + ")";
        }
        report(7, "static output feedback on a linear plant", ok, detail);
    }

    // 8. Fourth-order convergence on the scalar exponential, halving steps.
    {
        bool ok = false;
        std::string detail;
        try {
            SystemSpec plant = scalar_plant(-5.0);
            const std::array<double, 3> dts = {1e-2, 5e-3, 2.5e-3};
            std::array<double, 3> err{};
            for (size_t k = 0; k < dts.size(); ++k) {
                sim::SimOptions so;
                so.dt = dts[k];
                so.t_end = 1.0;
                sim::Trajectory tr = sim::simulate(plant, so);
                double exact = std::exp(-5.0 * tr.time.back());
                err[k] = std::abs(tr.subs[0].x.back()(0) - exact);
            }
            double p01 = std::log(err[0] / err[1]) / std::log(2.0);
            double p12 = std::log(err[1] / err[2]) / std::log(2.0);
            ok = p01 >= 3.9 && p12 >= 3.9;
            detail = "(observed orders " + fmt(p01) + ", " + fmt(p12) + ")";
        } catch (const Error& e) {
            detail = std::string("(") + e.what() + ")";
        }
        report(8, "integrator convergence order", ok, detail);
    }

    // 9. Two full pipeline runs with the same seed write byte-identical
    //    artifacts.
    {
        const fs::path d1 = work / "run1";
        const fs::path d2 = work / "run2";
        std::string args = "repro --system '" + example + "' --zeta 1.7,1.5 --runs 2 --out '";
        RunResult r1 = run_cli(cli, args + d1.string() + "'");
        RunResult r2 = run_cli(cli, args + d2.string() + "'");
        const std::array<const char*, 7> names = {
            "controller.ctl", "trajectory.csv", "simulation.json", "verification.json",
            "synthesis.txt",  "config.json",    "repro.json"};
        bool identical = r1.exit_code == 0 && r2.exit_code == 0;
        std::string differing;
        for (const char* name : names) {
            std::string a = slurp(d1 / name);
            std::string b = slurp(d2 / name);
            if (a.empty() || a != b) {
                identical = false;
                differing += std::string(" ") + name;
            }
        }
        report(9, "pipeline determinism", identical,
               identical ? "(7 artifacts byte-identical)"
                         : "(exits " + fmt(r1.exit_code) + "/" + fmt(r2.exit_code) +
                               ", differing:" + differing + ")");
    }

    if (g_failures == 0) std::cout << "acceptance: all criteria pass\n";
    return g_failures;
}
