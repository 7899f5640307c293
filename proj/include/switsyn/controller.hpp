#pragma once

// Gain extraction, controller files, and the synthesis pipeline entry point.
//
// The controller applies u_i = (sum_l h_l K[l]) (sum_k h_k M[k])^{-1} y_i,
// where M comes from the output block (coherent layout) or the input block
// (literal layout) of the solved program, and the X1 family is kept for
// Lyapunov evaluation downstream.

#include "switsyn/lmi.hpp"
#include "switsyn/model.hpp"
#include "switsyn/sdp.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace switsyn::ctrl {

struct ModeController {
    std::vector<Eigen::MatrixXd> gain;   // per rule l, u x p
    std::vector<Eigen::MatrixXd> mixer;  // per rule k, invertible mixing family
    std::vector<Eigen::MatrixXd> lyap;   // per rule k, X1 family
};

struct SubController {
    std::vector<ModeController> modes;
    std::optional<double> zeta2;  // squared attenuation level, when one applies
};

struct ControllerSet {
    lmi::Layout layout = lmi::Layout::Coherent;
    double epsilon = 0.0;
    std::vector<double> mu;  // per-subsystem jump ratios; empty = 1, single entry broadcasts
    std::optional<std::vector<double>> zeta2_option;  // fixed squared levels, when used
    std::optional<double> lambda_option;              // rate-bound override, when used
    std::string system_name;
    std::vector<SubController> subs;

    [[nodiscard]] double mu_of(int i) const {
        if (mu.empty()) return 1.0;
        return mu.size() == 1 ? mu[0] : mu.at(static_cast<size_t>(i));
    }
};

// The assembly options this controller was synthesized under.
lmi::SynthesisOptions synthesis_options(const ControllerSet& cs);

struct MixDiagnostics {
    double min_eig = 0.0;
    double max_eig = 0.0;
    double condition = 0.0;
};

// Throws Solver when the blended mixing block is not positive definite.
Eigen::VectorXd control_output(const ControllerSet& cs, int sub, int mode,
                               const Eigen::VectorXd& h, const Eigen::VectorXd& y,
                               MixDiagnostics* diag = nullptr);

std::string serialize_controller(const ControllerSet& cs);
ControllerSet parse_controller(const std::string& text, const std::string& source);
ControllerSet load_controller(const std::string& path);
void save_controller(const ControllerSet& cs, const std::string& path);

// Shape agreement between a controller file and a system description.
void check_compatible(const ControllerSet& cs, const SystemSpec& sys);

ControllerSet extract_controller(const SystemSpec& sys, const lmi::LmiProgram& prog,
                                 const Eigen::VectorXd& theta,
                                 const lmi::SynthesisOptions& opt);

struct SynthesisReport {
    sdp::SolveStatus status = sdp::SolveStatus::NumericalTrouble;
    ControllerSet controller;
    Eigen::VectorXd theta;  // full variable vector
    lmi::LmiProgram program;
    std::vector<lmi::Residual> residuals;
    double objective = 0.0;
    double slack = 0.0;
    int newton_iterations = 0;
};

// Full pipeline: validate, assemble, encode, solve, certify, extract.
// Throws Validation / Infeasible / Solver with a reason on each failure leg.
SynthesisReport synthesize(const SystemSpec& sys, const lmi::SynthesisOptions& opt,
                           const sdp::SolverOptions& sopt = {},
                           double residual_tol = 1e-7);

}  // namespace switsyn::ctrl
