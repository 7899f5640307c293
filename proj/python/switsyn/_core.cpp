// Python bindings for the synthesis, simulation, and verification pipeline.

#include "switsyn/controller.hpp"
#include "switsyn/error.hpp"
#include "switsyn/model.hpp"
#include "switsyn/sim.hpp"
#include "switsyn/verify.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace switsyn;

namespace {

lmi::Layout parse_layout(const std::string& name) {
    if (name == "coherent") return lmi::Layout::Coherent;
    if (name == "paper-literal") return lmi::Layout::PaperLiteral;
    throw Error(ErrorKind::Validation, "unknown layout '" + name + "'");
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
    return {v.data(), v.data() + v.size()};
}

py::dict validate_file(const std::string& system_path) {
    SystemSpec sys = load_system(system_path);
    ValidationReport rep = validate(sys);
    py::dict d;
    d["ok"] = rep.ok();
    d["warnings"] = rep.warnings;
    d["violations"] = rep.violations;
    d["name"] = sys.name;
    d["subsystems"] = sys.count();
    return d;
}

py::dict synthesize_file(const std::string& system_path, const std::string& controller_out,
                         const std::string& layout, std::optional<std::vector<double>> zeta,
                         std::vector<double> mu, std::optional<double> lam, double epsilon) {
    SystemSpec sys = load_system(system_path);
    lmi::SynthesisOptions opt;
    opt.layout = parse_layout(layout);
    opt.epsilon = epsilon;
    opt.zeta2 = std::move(zeta);
    opt.mu = std::move(mu);
    opt.lambda_override = lam;
    ctrl::SynthesisReport rep = ctrl::synthesize(sys, opt);
    if (!controller_out.empty()) ctrl::save_controller(rep.controller, controller_out);
    py::dict d;
    d["status"] = std::string(sdp::status_name(rep.status));
    d["slack"] = rep.slack;
    d["objective"] = rep.objective;
    d["newton_iterations"] = rep.newton_iterations;
    d["layout"] = layout;
    py::list levels;
    for (const ctrl::SubController& sub : rep.controller.subs)
        levels.append(sub.zeta2 ? py::object(py::float_(*sub.zeta2)) : py::none());
    d["zeta2"] = levels;
    return d;
}

py::dict simulate_file(const std::string& system_path, const std::string& controller_path,
                       const std::string& csv_out, double dt, double tend, std::uint64_t seed,
                       double sigma, int stride) {
    SystemSpec sys = load_system(system_path);
    sim::SimOptions opt;
    opt.dt = dt;
    opt.t_end = tend;
    opt.seed = seed;
    opt.sigma = sigma;
    opt.stride = stride;
    sim::Trajectory traj;
    bool controlled = !controller_path.empty();
    if (controlled) {
        ctrl::ControllerSet cs = ctrl::load_controller(controller_path);
        ctrl::check_compatible(cs, sys);
        traj = sim::simulate(sys, cs, opt);
    } else {
        traj = sim::simulate(sys, opt);
    }
    if (!csv_out.empty()) sim::write_csv(traj, csv_out);
    sim::HinfMetrics m = sim::hinf_metrics(traj);
    py::dict d;
    d["controlled"] = controlled;
    d["samples"] = traj.samples();
    d["t_end"] = traj.time.empty() ? 0.0 : traj.time.back();
    d["disturbance_energy"] = m.disturbance_energy;
    d["zero_disturbance"] = m.zero_disturbance;
    py::list subs;
    for (size_t i = 0; i < traj.subs.size(); ++i) {
        const sim::SubTrace& tr = traj.subs[i];
        int switches = 0;
        for (size_t s = 0; s + 1 < tr.mode.size(); ++s)
            if (tr.mode[s + 1] != tr.mode[s]) ++switches;
        py::dict sd;
        sd["final_state"] = to_std(tr.x.back());
        sd["final_mode"] = tr.mode.back() + 1;
        sd["switches"] = switches;
        sd["state_energy"] = m.state_energy(static_cast<Eigen::Index>(i));
        sd["output_energy"] = m.output_energy(static_cast<Eigen::Index>(i));
        sd["state_ratio"] = m.state_ratio(static_cast<Eigen::Index>(i));
        sd["output_ratio"] = m.output_ratio(static_cast<Eigen::Index>(i));
        subs.append(sd);
    }
    d["subsystems"] = subs;
    return d;
}

std::string verify_files(const std::string& system_path, const std::string& controller_path,
                         int runs, double sigma, double tend, double dt, bool resynthesize) {
    SystemSpec sys = load_system(system_path);
    ctrl::ControllerSet cs = ctrl::load_controller(controller_path);
    verify::CertifyOptions opt;
    opt.hinf_runs = runs;
    opt.hinf_sigma = sigma;
    opt.t_end = tend;
    opt.dt = dt;
    opt.resynthesize = resynthesize;
    verify::CertifyReport rep = verify::certify(sys, cs, opt);
    return verify::to_json(rep);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Switched fuzzy output-feedback synthesis pipeline";
    py::register_exception<Error>(m, "Error");

    m.def("validate", &validate_file, py::arg("system"),
          "Parse and validate a system description file.");
    m.def("synthesize", &synthesize_file, py::arg("system"), py::arg("out") = std::string(),
          py::arg("layout") = std::string("coherent"), py::arg("zeta") = py::none(),
          py::arg("mu") = std::vector<double>{}, py::arg("lam") = py::none(),
          py::arg("epsilon") = 1e-6,
          "Synthesize a controller; writes it to `out` when given. `zeta` is a\n"
          "list of squared attenuation levels (None minimizes them).");
    m.def("simulate", &simulate_file, py::arg("system"), py::arg("controller") = std::string(),
          py::arg("out") = std::string(), py::arg("dt") = 1e-3, py::arg("tend") = 10.0,
          py::arg("seed") = std::uint64_t{0}, py::arg("sigma") = 0.0, py::arg("stride") = 1,
          "Integrate the system (closed loop when a controller file is given);\n"
          "writes a CSV trajectory to `out` when given.");
    m.def("verify_json", &verify_files, py::arg("system"), py::arg("controller"),
          py::arg("runs") = 20, py::arg("sigma") = 0.01, py::arg("tend") = 30.0,
          py::arg("dt") = 1e-3, py::arg("resynth") = true,
          "Certify a stored controller against its system; returns the report as JSON text.");
}
