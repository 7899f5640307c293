// Command line front end: validate, synth, simulate, verify, repro.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "switsyn/controller.hpp"
#include "switsyn/doc.hpp"
#include "switsyn/error.hpp"
#include "switsyn/lmi.hpp"
#include "switsyn/model.hpp"
#include "switsyn/sdp.hpp"
#include "switsyn/sim.hpp"
#include "switsyn/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using switsyn::Error;
using switsyn::ErrorKind;
namespace lmi = switsyn::lmi;
namespace ctrl = switsyn::ctrl;
namespace sim = switsyn::sim;
namespace sdp = switsyn::sdp;
namespace verify = switsyn::verify;

namespace {

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Parse, "cannot open config file '" + path + "'");
    json cfg;
    try {
        in >> cfg;
    } catch (const std::exception& e) {
        throw Error(ErrorKind::Parse, path + ": " + e.what());
    }
    if (!cfg.is_object())
        throw Error(ErrorKind::Parse, path + ": config must be a JSON object");
    return cfg;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Parse, "cannot write '" + path + "'");
    out << text;
    if (!out) throw Error(ErrorKind::Parse, "short write on '" + path + "'");
}

// Flags win over config keys, config keys over defaults.
template <class T>
T pick(const CLI::App& cmd, const std::string& flag, const T& flag_value, const json& cfg,
       const std::string& key, const T& fallback) {
    const CLI::Option* opt = cmd.get_option_no_throw(flag);
    if (opt != nullptr && opt->count() > 0) return flag_value;
    if (cfg.contains(key)) {
        try {
            return cfg.at(key).get<T>();
        } catch (const std::exception& e) {
            throw Error(ErrorKind::Validation, "config key '" + key + "': " + e.what());
        }
    }
    return fallback;
}

std::vector<double> parse_levels(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used])))
            ++used;
        if (used != item.size() || item.empty())
            throw Error(ErrorKind::Validation,
                        what + ": expected a comma separated list of numbers, got '" + text +
                            "'");
        out.push_back(v);
    }
    if (out.empty())
        throw Error(ErrorKind::Validation, what + ": no values in '" + text + "'");
    return out;
}

std::vector<double> levels_from_json(const json& v, const std::string& key) {
    if (v.is_number()) return {v.get<double>()};
    if (v.is_array()) {
        std::vector<double> out;
        for (const json& e : v) {
            if (!e.is_number())
                throw Error(ErrorKind::Validation, "config key '" + key + "': expected numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }
    throw Error(ErrorKind::Validation,
                "config key '" + key + "' must be a number or an array of numbers");
}

struct SynthFlags {
    std::string layout;
    std::string zeta;
    std::string mu;
    double lambda = 0.0;
    double epsilon = 0.0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--layout", layout, "coherent, paper-literal, or both");
        cmd->add_option("--zeta", zeta,
                        "squared attenuation levels, comma separated (one per subsystem, a "
                        "single value broadcasts), or 'minimize'");
        cmd->add_option("--mu", mu,
                        "Lyapunov jump ratio at switches, one value or one per subsystem");
        cmd->add_option("--lambda", lambda, "override every membership rate bound");
        cmd->add_option("--epsilon", epsilon, "margin realizing the strict inequalities");
    }

    [[nodiscard]] std::vector<lmi::Layout> layouts(const CLI::App& cmd, const json& cfg) const {
        std::string v = pick(cmd, "--layout", layout, cfg, "layout", std::string("coherent"));
        if (v == "coherent") return {lmi::Layout::Coherent};
        if (v == "paper-literal" || v == "literal") return {lmi::Layout::PaperLiteral};
        if (v == "both") return {lmi::Layout::Coherent, lmi::Layout::PaperLiteral};
        throw Error(ErrorKind::Validation,
                    "layout must be coherent, paper-literal, or both (got '" + v + "')");
    }

    [[nodiscard]] lmi::SynthesisOptions options(const CLI::App& cmd, const json& cfg) const {
        lmi::SynthesisOptions opt;
        opt.epsilon = pick(cmd, "--epsilon", epsilon, cfg, "epsilon", 1e-6);

        if (cmd.count("--zeta") > 0) {
            if (zeta != "minimize") opt.zeta2 = parse_levels(zeta, "--zeta");
        } else if (cfg.contains("zeta")) {
            const json& z = cfg.at("zeta");
            if (!(z.is_string() && z.get<std::string>() == "minimize"))
                opt.zeta2 = levels_from_json(z, "zeta");
        }

        if (cmd.count("--mu") > 0)
            opt.mu = parse_levels(mu, "--mu");
        else if (cfg.contains("mu"))
            opt.mu = levels_from_json(cfg.at("mu"), "mu");

        if (cmd.count("--lambda") > 0)
            opt.lambda_override = lambda;
        else if (cfg.contains("lambda")) {
            if (!cfg.at("lambda").is_number())
                throw Error(ErrorKind::Validation, "config key 'lambda' must be a number");
            opt.lambda_override = cfg.at("lambda").get<double>();
        }
        return opt;
    }
};

sdp::SolverOptions solver_options(const json& cfg) {
    sdp::SolverOptions s;
    if (!cfg.contains("solver")) return s;
    const json& j = cfg.at("solver");
    if (!j.is_object()) throw Error(ErrorKind::Validation, "config key 'solver' must be an object");
    if (j.contains("feasibility_slack")) s.feasibility_slack = j.at("feasibility_slack").get<double>();
    if (j.contains("box_radius")) s.box_radius = j.at("box_radius").get<double>();
    if (j.contains("gap_tol")) s.gap_tol = j.at("gap_tol").get<double>();
    if (j.contains("max_rounds")) s.max_rounds = j.at("max_rounds").get<int>();
    if (j.contains("max_newton")) s.max_newton = j.at("max_newton").get<int>();
    return s;
}

struct SimFlags {
    double dt = 0.0;
    double tend = 0.0;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    int stride = 0;

    void attach(CLI::App* cmd, bool with_noise) {
        cmd->add_option("--dt", dt, "integrator step size");
        cmd->add_option("--tend", tend, "simulation horizon in seconds");
        cmd->add_option("--stride", stride, "record every stride-th step");
        if (with_noise) {
            cmd->add_option("--seed", seed, "disturbance seed");
            cmd->add_option("--sigma", sigma, "disturbance standard deviation per channel");
        }
    }

    [[nodiscard]] sim::SimOptions options(const CLI::App& cmd, const json& cfg) const {
        sim::SimOptions o;
        o.dt = pick(cmd, "--dt", dt, cfg, "dt", 1e-3);
        o.t_end = pick(cmd, "--tend", tend, cfg, "tend", 30.0);
        o.stride = pick(cmd, "--stride", stride, cfg, "stride", 1);
        o.seed = pick(cmd, "--seed", seed, cfg, "seed", std::uint64_t{0});
        o.sigma = pick(cmd, "--sigma", sigma, cfg, "sigma", 0.0);
        return o;
    }
};

std::string layout_name(lmi::Layout l) {
    return l == lmi::Layout::Coherent ? "coherent" : "paper-literal";
}

struct FamilyCounts {
    long long g1 = 0, g2 = 0, g3 = 0, g4s = 0, g4r = 0;
};

FamilyCounts count_families(const lmi::LmiProgram& prog) {
    FamilyCounts c;
    for (const lmi::LmiBlock& b : prog.blocks) {
        if (b.family == "G1") ++c.g1;
        if (b.family == "G2") ++c.g2;
        if (b.family == "G3") ++c.g3;
        if (b.family == "G4s") ++c.g4s;
        if (b.family == "G4r") ++c.g4r;
    }
    return c;
}

void print_synthesis_log(std::ostream& os, const ctrl::SynthesisReport& rep,
                         lmi::Layout layout) {
    sdp::ConicProgram cp = sdp::encode(rep.program);
    FamilyCounts fc = count_families(rep.program);
    os << "synth: layout " << layout_name(layout) << ": " << sdp::status_name(rep.status)
       << ", slack " << rep.slack << ", " << rep.newton_iterations << " newton steps\n";
    os << "synth: blocks G1 " << fc.g1 << ", G2 " << fc.g2 << ", G3 " << fc.g3 << ", G4s "
       << fc.g4s << ", G4r " << fc.g4r << ", total " << rep.program.blocks.size() << " ("
       << rep.program.dropped.size() << " dropped by ties)\n";
    os << "synth: scalars " << cp.full_count << " (" << cp.reduced_count << " after ties)\n";
    const lmi::Residual* worst = nullptr;
    for (const lmi::Residual& r : rep.residuals)
        if (!worst || r.min_eig - r.margin < worst->min_eig - worst->margin) worst = &r;
    if (worst)
        os << "synth: worst residual " << worst->label << " eigenvalue " << worst->min_eig
           << " against margin " << worst->margin << "\n";
    bool minimized = !rep.controller.zeta2_option.has_value();
    bool any_zeta = false;
    for (const auto& sc : rep.controller.subs) any_zeta = any_zeta || sc.zeta2.has_value();
    if (minimized && any_zeta) {
        double sum = 0.0;
        os << "synth: achieved zeta2";
        for (size_t i = 0; i < rep.controller.subs.size(); ++i) {
            if (!rep.controller.subs[i].zeta2) continue;
            double z2 = *rep.controller.subs[i].zeta2;
            sum += z2;
            os << ' ' << z2;
        }
        os << " (sum " << sum << ")\n";
    }
}

json simulation_summary(const switsyn::SystemSpec& sys, const sim::Trajectory& traj,
                        bool controlled) {
    sim::HinfMetrics m = sim::hinf_metrics(traj);
    json root;
    root["system"] = sys.name;
    root["controlled"] = controlled;
    root["samples"] = traj.samples();
    root["options"] = {{"dt", traj.options.dt},
                       {"t_end", traj.options.t_end},
                       {"seed", traj.options.seed},
                       {"sigma", traj.options.sigma},
                       {"stride", traj.options.stride}};
    json subs = json::array();
    for (size_t i = 0; i < traj.subs.size(); ++i) {
        const sim::SubTrace& tr = traj.subs[i];
        long long switches = 0;
        for (size_t k = 0; k + 1 < tr.mode.size(); ++k)
            if (tr.mode[k + 1] != tr.mode[k]) ++switches;
        json s;
        s["switches"] = switches;
        json fin = json::array();
        if (!tr.x.empty())
            for (Eigen::Index c = 0; c < tr.x.back().size(); ++c) fin.push_back(tr.x.back()(c));
        s["final_state"] = std::move(fin);
        s["state_energy"] = m.state_energy(static_cast<Eigen::Index>(i));
        s["output_energy"] = m.output_energy(static_cast<Eigen::Index>(i));
        s["state_ratio"] = m.state_ratio(static_cast<Eigen::Index>(i));
        s["output_ratio"] = m.output_ratio(static_cast<Eigen::Index>(i));
        subs.push_back(std::move(s));
    }
    root["subsystems"] = std::move(subs);
    root["disturbance_energy"] = m.disturbance_energy;
    root["zero_disturbance"] = m.zero_disturbance;
    root["nonzero_initial_state"] = m.nonzero_initial_state;
    return root;
}

std::string summary_path(const std::string& csv_path) {
    if (csv_path.size() > 4 && csv_path.substr(csv_path.size() - 4) == ".csv")
        return csv_path.substr(0, csv_path.size() - 4) + ".json";
    return csv_path + ".json";
}

int run_validate(const std::string& system_path) {
    switsyn::SystemSpec sys = switsyn::load_system(system_path);
    switsyn::ValidationReport vr = switsyn::validate(sys);
    for (const std::string& w : vr.warnings) std::cout << "warning: " << w << "\n";
    for (const std::string& v : vr.violations) std::cout << "violation: " << v << "\n";
    if (!vr.ok()) {
        std::cout << "validate: system '" << sys.name << "': " << vr.violations.size()
                  << " violation(s)\n";
        return 1;
    }
    std::cout << "validate: system '" << sys.name << "': ok (" << sys.count()
              << " subsystem(s), " << vr.warnings.size() << " warning(s))\n";
    return 0;
}

ctrl::SynthesisReport synth_any_layout(const switsyn::SystemSpec& sys,
                                       const std::vector<lmi::Layout>& layouts,
                                       lmi::SynthesisOptions opt, const sdp::SolverOptions& sopt,
                                       std::ostream& log, lmi::Layout* used) {
    std::optional<Error> last;
    for (lmi::Layout l : layouts) {
        opt.layout = l;
        try {
            ctrl::SynthesisReport rep = ctrl::synthesize(sys, opt, sopt);
            *used = l;
            return rep;
        } catch (const Error& e) {
            log << "synth: layout " << layout_name(l) << ": " << e.what() << "\n";
            if (!last || e.kind() != ErrorKind::Validation) last = e;
        }
    }
    throw last ? *last : Error(ErrorKind::Internal, "no layout attempted");
}

int run_synth(const CLI::App& cmd, const json& cfg, const std::string& system_path,
              const std::string& out_path, const SynthFlags& sf, const std::string& dump_conic,
              const std::string& dump_blocks) {
    switsyn::SystemSpec sys = switsyn::load_system(system_path);
    lmi::Layout used = lmi::Layout::Coherent;
    ctrl::SynthesisReport rep = synth_any_layout(sys, sf.layouts(cmd, cfg), sf.options(cmd, cfg),
                                                 solver_options(cfg), std::cout, &used);
    print_synthesis_log(std::cout, rep, used);
    if (!dump_blocks.empty()) write_file(dump_blocks, lmi::dump_blocks(rep.program));
    if (!dump_conic.empty()) write_file(dump_conic, sdp::to_text(sdp::encode(rep.program)));
    if (!out_path.empty()) {
        ctrl::save_controller(rep.controller, out_path);
        std::cout << "synth: controller written to " << out_path << "\n";
    }
    return 0;
}

int run_simulate(const CLI::App& cmd, const json& cfg, const std::string& system_path,
                 const std::string& controller_path, const std::string& out_path,
                 const SimFlags& sf) {
    switsyn::SystemSpec sys = switsyn::load_system(system_path);
    sim::SimOptions so = sf.options(cmd, cfg);
    std::optional<ctrl::ControllerSet> cs;
    if (!controller_path.empty()) {
        cs = ctrl::load_controller(controller_path);
        if (!cs->system_name.empty() && cs->system_name != sys.name)
            std::cout << "warning: controller was synthesized for '" << cs->system_name
                      << "', system file is '" << sys.name << "'\n";
    }
    sim::Trajectory traj = cs ? sim::simulate(sys, *cs, so) : sim::simulate(sys, so);
    if (!out_path.empty()) {
        sim::write_csv(traj, out_path);
        write_file(summary_path(out_path),
                   simulation_summary(sys, traj, cs.has_value()).dump(2) + "\n");
        std::cout << "simulate: " << traj.samples() << " samples to " << out_path
                  << " (summary " << summary_path(out_path) << ")\n";
    } else {
        std::cout << simulation_summary(sys, traj, cs.has_value()).dump(2) << "\n";
    }
    return 0;
}

verify::CertifyOptions certify_options(const CLI::App& cmd, const json& cfg, const SimFlags& sf,
                                       int runs_flag, bool no_resynth) {
    verify::CertifyOptions co;
    co.dt = pick(cmd, "--dt", sf.dt, cfg, "dt", co.dt);
    co.t_end = pick(cmd, "--tend", sf.tend, cfg, "tend", co.t_end);
    co.hinf_runs = pick(cmd, "--runs", runs_flag, cfg, "runs", co.hinf_runs);
    co.hinf_sigma = pick(cmd, "--sigma", sf.sigma, cfg, "sigma", co.hinf_sigma);
    co.seed_base = pick(cmd, "--seed", sf.seed, cfg, "seed", co.seed_base);
    if (no_resynth || (cfg.contains("resynth") && !cfg.at("resynth").get<bool>()))
        co.resynthesize = false;
    return co;
}

void print_certify_summary(std::ostream& os, const verify::CertifyReport& rep) {
    long long failed = 0;
    for (const lmi::Residual& r : rep.residuals)
        if (!r.pass) ++failed;
    os << "verify: inequalities " << (rep.residual_pass ? "pass" : "FAIL") << " ("
       << rep.residuals.size() << " blocks, " << failed << " failing; " << rep.resynth_message
       << ")\n";
    os << "verify: storage function " << (rep.lyapunov_pass ? "pass" : "FAIL") << " ("
       << rep.decrease_checked << " steps, " << rep.decrease_violations
       << " increases; " << rep.jump_count << " switches, " << rep.jump_violations
       << " above bound)\n";
    if (rep.hinf_runs > 0) {
        os << "verify: attenuation " << (rep.hinf_pass ? "pass" : "FAIL") << " over "
           << rep.hinf_runs << " runs, worst output ratio";
        for (const verify::HinfSubReport& h : rep.hinf) os << ' ' << h.worst_output_ratio;
        os << "\n";
    } else {
        os << "verify: attenuation not checked (no disturbance channels)\n";
    }
    for (const verify::VertexReport& v : rep.vertices)
        if (v.abscissa >= 0.0)
            os << "verify: note: vertex sub " << v.sub << " mode " << v.mode << " rule "
               << v.rule << " has abscissa " << v.abscissa << " (diagnostic only)\n";
    if (rep.lti_abscissa)
        os << "verify: closed-loop abscissa " << *rep.lti_abscissa << "\n";
    os << "verify: " << (rep.pass ? "PASS" : "FAIL") << "\n";
}

int run_verify(const CLI::App& cmd, const json& cfg, const std::string& system_path,
               const std::string& controller_path, const std::string& out_path,
               const SimFlags& sf, int runs_flag, bool no_resynth) {
    switsyn::SystemSpec sys = switsyn::load_system(system_path);
    ctrl::ControllerSet cs = ctrl::load_controller(controller_path);
    verify::CertifyOptions co = certify_options(cmd, cfg, sf, runs_flag, no_resynth);
    verify::CertifyReport rep = verify::certify(sys, cs, co);
    print_certify_summary(std::cout, rep);
    if (!out_path.empty()) {
        write_file(out_path, verify::to_json(rep));
        std::cout << "verify: report written to " << out_path << "\n";
    }
    return rep.pass ? 0 : 1;
}

int run_repro(const CLI::App& cmd, const json& cfg, const std::string& system_path,
              const std::string& out_dir, const SynthFlags& synf, const SimFlags& simf,
              int runs_flag) {
    switsyn::SystemSpec sys = switsyn::load_system(system_path);
    switsyn::ValidationReport vr = switsyn::validate(sys);
    for (const std::string& w : vr.warnings) std::cout << "warning: " << w << "\n";
    if (!vr.ok()) {
        for (const std::string& v : vr.violations) std::cout << "violation: " << v << "\n";
        return 1;
    }
    fs::create_directories(out_dir);
    auto at = [&](const char* name) { return (fs::path(out_dir) / name).string(); };

    std::vector<lmi::Layout> layouts = synf.layouts(cmd, cfg);
    lmi::SynthesisOptions base = synf.options(cmd, cfg);
    sdp::SolverOptions sopt = solver_options(cfg);

    sim::SimOptions so = simf.options(cmd, cfg);
    so.sigma = 0.0;  // reference trajectory is the noise-free closed loop
    verify::CertifyOptions co;
    co.dt = so.dt;
    co.t_end = so.t_end;
    co.hinf_runs = pick(cmd, "--runs", runs_flag, cfg, "runs", co.hinf_runs);
    if (cfg.contains("sigma")) co.hinf_sigma = cfg.at("sigma").get<double>();

    std::ostringstream log;
    std::optional<ctrl::SynthesisReport> accepted;
    std::optional<verify::CertifyReport> accepted_cert;
    lmi::Layout used = lmi::Layout::Coherent;
    std::optional<Error> last;
    for (lmi::Layout l : layouts) {
        lmi::SynthesisOptions opt = base;
        opt.layout = l;
        try {
            ctrl::SynthesisReport rep = ctrl::synthesize(sys, opt, sopt);
            print_synthesis_log(log, rep, l);
            verify::CertifyReport crep = verify::certify(sys, rep.controller, co, &rep);
            if (crep.pass) {
                accepted = std::move(rep);
                accepted_cert = std::move(crep);
                used = l;
                break;
            }
            log << "repro: layout " << layout_name(l) << " failed certification\n";
            if (!accepted_cert) {
                accepted = std::move(rep);
                accepted_cert = std::move(crep);
                used = l;
            }
        } catch (const Error& e) {
            log << "repro: layout " << layout_name(l) << ": " << e.what() << "\n";
            if (!last || e.kind() != ErrorKind::Validation) last = e;
        }
    }
    std::cout << log.str();
    if (!accepted) throw last ? *last : Error(ErrorKind::Internal, "no layout attempted");

    bool certified = accepted_cert->pass;
    std::cout << "repro: layout " << layout_name(used) << (certified ? " certified" : " kept")
              << "\n";

    ctrl::save_controller(accepted->controller, at("controller.ctl"));
    write_file(at("verification.json"), verify::to_json(*accepted_cert));
    write_file(at("synthesis.txt"), log.str());

    sim::Trajectory traj = sim::simulate(sys, accepted->controller, so);
    sim::write_csv(traj, at("trajectory.csv"));
    write_file(at("simulation.json"), simulation_summary(sys, traj, true).dump(2) + "\n");

    double tail_from = std::max(0.0, so.t_end - 5.0);
    double tail_sup = 0.0;
    for (size_t k = 0; k < traj.samples(); ++k) {
        if (traj.time[k] < tail_from - 1e-12) continue;
        for (const sim::SubTrace& tr : traj.subs)
            tail_sup = std::max(tail_sup, tr.x[k].cwiseAbs().maxCoeff());
    }
    bool settled = tail_sup <= 1e-3;

    json echo;
    echo["system"] = system_path;
    echo["layout"] = layout_name(used);
    echo["epsilon"] = base.epsilon;
    if (base.mu.empty())
        echo["mu"] = 1.0;
    else if (base.mu.size() == 1)
        echo["mu"] = base.mu[0];
    else
        echo["mu"] = base.mu;
    if (base.zeta2)
        echo["zeta"] = *base.zeta2;
    else
        echo["zeta"] = "minimize";
    if (base.lambda_override)
        echo["lambda"] = *base.lambda_override;
    else
        echo["lambda"] = nullptr;
    echo["dt"] = so.dt;
    echo["tend"] = so.t_end;
    echo["stride"] = so.stride;
    echo["runs"] = co.hinf_runs;
    echo["sigma"] = co.hinf_sigma;
    write_file(at("config.json"), echo.dump(2) + "\n");

    json summary;
    summary["layout"] = layout_name(used);
    summary["certified"] = certified;
    summary["tail_from"] = tail_from;
    summary["tail_sup_norm"] = tail_sup;
    summary["settled"] = settled;
    summary["pass"] = certified && settled;
    write_file(at("repro.json"), summary.dump(2) + "\n");

    std::cout << "repro: tail sup norm " << tail_sup << " from t = " << tail_from
              << (settled ? " (settled)" : " (NOT settled)") << "\n";
    std::cout << "repro: artifacts in " << out_dir << "\n";
    std::cout << "repro: " << (certified && settled ? "PASS" : "FAIL") << "\n";
    return certified && settled ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthesis and verification for interconnected switched fuzzy systems"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file; flags win over its keys")
        ->envname("SWITSYN_CONFIG");

    std::string system_path, controller_path, out_path, dump_conic, dump_blocks;
    SynthFlags synf;
    SimFlags simf;
    int runs_flag = 0;
    bool no_resynth = false;

    CLI::App* validate = app.add_subcommand("validate", "check a system description");
    validate->add_option("--system", system_path, "system description file");

    CLI::App* synth = app.add_subcommand("synth", "synthesize a controller set");
    synth->add_option("--system", system_path, "system description file");
    synth->add_option("--out", out_path, "controller file to write");
    synf.attach(synth);
    synth->add_option("--dump-conic", dump_conic, "write the flattened conic program");
    synth->add_option("--dump-blocks", dump_blocks, "write the assembled block listing");

    CLI::App* simulate = app.add_subcommand("simulate", "integrate the (closed) loop");
    simulate->add_option("--system", system_path, "system description file");
    simulate->add_option("--controller", controller_path, "controller file (omit for open loop)");
    simulate->add_option("--out", out_path, "trajectory CSV path; summary JSON lands next to it");
    simf.attach(simulate, true);

    CLI::App* verify_cmd = app.add_subcommand("verify", "certify a controller against a system");
    verify_cmd->add_option("--system", system_path, "system description file");
    verify_cmd->add_option("--controller", controller_path, "controller file");
    verify_cmd->add_option("--out", out_path, "JSON report path");
    verify_cmd->add_option("--runs", runs_flag, "number of seeded noise runs");
    verify_cmd->add_flag("--no-resynth", no_resynth, "skip the re-synthesis cross check");
    simf.attach(verify_cmd, true);

    CLI::App* repro = app.add_subcommand("repro", "full pipeline into an artifact directory");
    repro->add_option("--system", system_path, "system description file");
    repro->add_option("--out", out_path, "output directory");
    repro->add_option("--runs", runs_flag, "number of seeded noise runs");
    synf.attach(repro);
    simf.attach(repro, false);

    // Lets --config appear after the subcommand name as well.
    for (CLI::App* s : {validate, synth, simulate, verify_cmd, repro}) s->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        json cfg = load_config(config_path);
        auto need = [&](const std::string& flag, std::string& slot, const char* key) {
            if (slot.empty() && cfg.contains(key)) slot = cfg.at(key).get<std::string>();
            if (slot.empty())
                throw Error(ErrorKind::Validation,
                            "missing " + flag + " (or config key '" + key + "')");
        };
        if (validate->parsed()) {
            need("--system", system_path, "system");
            return run_validate(system_path);
        }
        if (synth->parsed()) {
            need("--system", system_path, "system");
            if (out_path.empty() && cfg.contains("out"))
                out_path = cfg.at("out").get<std::string>();
            return run_synth(*synth, cfg, system_path, out_path, synf, dump_conic, dump_blocks);
        }
        if (simulate->parsed()) {
            need("--system", system_path, "system");
            if (controller_path.empty() && cfg.contains("controller"))
                controller_path = cfg.at("controller").get<std::string>();
            if (out_path.empty() && cfg.contains("out"))
                out_path = cfg.at("out").get<std::string>();
            return run_simulate(*simulate, cfg, system_path, controller_path, out_path, simf);
        }
        if (verify_cmd->parsed()) {
            need("--system", system_path, "system");
            need("--controller", controller_path, "controller");
            if (out_path.empty() && cfg.contains("out"))
                out_path = cfg.at("out").get<std::string>();
            return run_verify(*verify_cmd, cfg, system_path, controller_path, out_path, simf,
                              runs_flag, no_resynth);
        }
        if (repro->parsed()) {
            need("--system", system_path, "system");
            need("--out", out_path, "out");
            return run_repro(*repro, cfg, system_path, out_path, synf, simf, runs_flag);
        }
        return 70;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 70;
    }
}
