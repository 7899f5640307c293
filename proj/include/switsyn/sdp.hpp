#pragma once

// Conic form and the reference solver.
//
// A program is a list of affine matrix blocks G_b(theta) = C_b + sum_p
// theta_p A_{b,p} that must all be positive semidefinite, plus an optional
// linear objective. encode() flattens an assembled inequality program into
// this form, folding sense and margin into each block and substituting the
// scalar equalities implied by jump ties; expand() maps a reduced solution
// back to the full variable vector.
//
// solve() runs a log-barrier interior-point method: a max-margin phase
// proves strict feasibility or infeasibility, then a centering phase drives
// the objective to the requested gap. Bounded by |theta_p| <= box_radius.

#include "switsyn/lmi.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace switsyn::sdp {

struct ConicEntry {
    int var = -1;  // reduced scalar index
    int r = 0;
    int c = 0;
    double v = 0.0;
};

struct ConicBlock {
    std::string label;
    int dim = 0;
    Eigen::MatrixXd constant;
    std::vector<ConicEntry> entries;  // sorted by (var, r, c), merged

    [[nodiscard]] Eigen::MatrixXd eval(const Eigen::VectorXd& reduced) const;
};

struct ConicProgram {
    int reduced_count = 0;
    int full_count = 0;
    std::vector<ConicBlock> blocks;
    Eigen::VectorXd objective;  // reduced space
    bool minimize = false;
    std::vector<int> expand_index;     // full scalar -> reduced scalar
    std::vector<double> expand_scale;  // full scalar = scale * reduced scalar

    [[nodiscard]] Eigen::VectorXd expand(const Eigen::VectorXd& reduced) const;
};

ConicProgram encode(const lmi::LmiProgram& prog);

std::string to_text(const ConicProgram& cp);

enum class SolveStatus { Feasible, Optimal, Infeasible, NumericalTrouble };

std::string status_name(SolveStatus s);

struct SolverOptions {
    double feasibility_slack = 1e-2;  // accepted strict-feasibility margin
    double box_radius = 1e6;
    double gap_tol = 1e-6;
    int max_rounds = 40;
    int max_newton = 60;
};

struct SolveResult {
    SolveStatus status = SolveStatus::NumericalTrouble;
    Eigen::VectorXd theta;  // full space
    double objective = 0.0;
    double slack = 0.0;  // smallest block eigenvalue at the returned point
    int newton_iterations = 0;
    std::string message;
};

SolveResult solve(const ConicProgram& cp, const SolverOptions& opt = {});

}  // namespace switsyn::sdp
