#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "switsyn/controller.hpp"
#include "switsyn/lmi.hpp"
#include "switsyn/model.hpp"

namespace switsyn::verify {

struct CertifyOptions {
    // Matrix-inequality residuals.
    double residual_tol = 1e-7;
    // Re-solve the synthesis program and require the stored controller to match.
    bool resynthesize = true;
    double match_tol = 1e-9;

    // Storage-function checks on the noise-free closed loop. A step with no
    // switch in any subsystem must keep the total V below
    // V*(1 + decrease_rel_tol) + decrease_abs_tol.
    double dt = 1e-3;
    double t_end = 30.0;
    double decrease_rel_tol = 1e-8;
    double decrease_abs_tol = 1e-10;
    double jump_tol = 1e-6;  // relative slack on the mode-change ratio

    // Empirical disturbance attenuation.
    int hinf_runs = 20;
    double hinf_sigma = 0.01;
    double hinf_slack = 1e-3;  // relative excess allowed over the certified level
    std::uint64_t seed_base = 1;
};

struct HinfSubReport {
    std::optional<double> zeta2;       // squared level the ratios are held against
    double worst_output_ratio = 0.0;   // energy over energy
    double worst_state_ratio = 0.0;
    bool pass = true;
};

struct VertexReport {
    int sub = 0;   // 1-based
    int mode = 0;  // 1-based
    int rule = 0;  // 1-based
    double abscissa = 0.0;
};

struct CertifyReport {
    bool pass = false;

    std::string system_name;
    std::string layout;  // "coherent" or "literal"
    double epsilon = 0.0;
    std::vector<double> mu;  // expanded per subsystem
    CertifyOptions options;  // tolerances the verdicts were computed under

    // How the residual section was obtained.
    bool resynth_ran = false;
    bool resynth_match = false;
    std::string resynth_message;
    std::vector<lmi::Residual> residuals;
    bool residual_pass = false;

    long long decrease_checked = 0;
    long long decrease_violations = 0;
    double worst_increase = 0.0;  // relative, worst over all between-switch steps
    long long jump_count = 0;
    long long jump_violations = 0;
    double worst_jump_ratio = 0.0;  // V_after / V_before, worst over all switches
    bool lyapunov_pass = false;

    int hinf_runs = 0;
    double hinf_sigma = 0.0;
    std::vector<HinfSubReport> hinf;
    bool hinf_pass = true;

    // Diagnostic only, never part of the verdict.
    std::vector<VertexReport> vertices;
    // Spectral abscissa of the full interconnected closed loop; only available
    // when every subsystem has a single mode with a single rule.
    std::optional<double> lti_abscissa;
};

// Check a controller against the system it was synthesized for: re-derive and
// re-test the matrix inequalities, watch the storage function along a
// noise-free run, compare empirical attenuation ratios against the certified
// level over seeded noise runs, and report closed-loop vertex spectra.
// Passing the synthesis report that produced cs reuses its residuals instead
// of solving again.
CertifyReport certify(const SystemSpec& sys, const ctrl::ControllerSet& cs,
                      const CertifyOptions& opt = {},
                      const ctrl::SynthesisReport* fresh = nullptr);

// Deterministic pretty-printed JSON rendering of the report.
std::string to_json(const CertifyReport& rep);

}  // namespace switsyn::verify
