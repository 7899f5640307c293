#pragma once

// Closed-loop integration with per-step frozen modes and disturbances.
//
// Fixed-step fourth-order Runge-Kutta over the joint state. Within a step
// the active modes and disturbance samples are held; the feedback law is
// re-evaluated at every stage state. Switching rules are checked once per
// step, after the update. Sample k carries the mode and disturbance active
// on [t_k, t_{k+1}).

#include "switsyn/controller.hpp"
#include "switsyn/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace switsyn::sim {

struct SimOptions {
    double dt = 1e-3;
    double t_end = 10.0;
    std::uint64_t seed = 0;
    double sigma = 0.0;  // disturbance standard deviation per channel
    int stride = 1;      // record every stride-th step
    double divergence_limit = 1e9;
};

struct SubTrace {
    std::vector<int> mode;  // 0-based
    std::vector<Eigen::VectorXd> x, y, u, w;
    std::vector<double> v;  // Lyapunov value under the active mode
};

struct Trajectory {
    SimOptions options;
    std::vector<double> time;
    std::vector<SubTrace> subs;

    [[nodiscard]] size_t samples() const { return time.size(); }
};

// Throws Divergence when the joint state norm passes divergence_limit.
Trajectory simulate(const SystemSpec& sys, const ctrl::ControllerSet& cs,
                    const SimOptions& opt);

// Open loop: u = 0 throughout, Lyapunov column recorded as 0.
Trajectory simulate(const SystemSpec& sys, const SimOptions& opt);

// x' (sum_s h_s(x) X1[sub,mode,s])^{-1} x under the given mode's memberships.
double lyapunov_value(const ctrl::ControllerSet& cs, const SystemSpec& sys, int sub, int mode,
                      const Eigen::VectorXd& x);

std::string to_csv(const Trajectory& traj);
void write_csv(const Trajectory& traj, const std::string& path);

struct HinfMetrics {
    Eigen::VectorXd state_ratio;   // per subsystem, energy over energy
    Eigen::VectorXd output_ratio;  // per subsystem, energy over energy
    Eigen::VectorXd state_energy;
    Eigen::VectorXd output_energy;
    double disturbance_energy = 0.0;
    bool nonzero_initial_state = false;  // ratios are biased when set
    bool zero_disturbance = false;       // ratios forced to 0 when set
};

// Trapezoidal energies over the recorded samples. Every subsystem shares
// the total disturbance energy as denominator.
HinfMetrics hinf_metrics(const Trajectory& traj);

}  // namespace switsyn::sim
