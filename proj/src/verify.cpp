#include "switsyn/verify.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "switsyn/error.hpp"
#include "switsyn/sim.hpp"
#include "switsyn/spectra.hpp"

namespace switsyn::verify {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return kInf;
    if (a.size() == 0) return 0.0;
    return (a - b).cwiseAbs().maxCoeff();
}

// Largest elementwise deviation between two controllers of identical shape.
double controller_deviation(const ctrl::ControllerSet& a, const ctrl::ControllerSet& b) {
    if (a.subs.size() != b.subs.size()) return kInf;
    double d = 0.0;
    for (size_t i = 0; i < a.subs.size(); ++i) {
        const ctrl::SubController& sa = a.subs[i];
        const ctrl::SubController& sb = b.subs[i];
        if (sa.modes.size() != sb.modes.size()) return kInf;
        if (sa.zeta2.has_value() != sb.zeta2.has_value()) return kInf;
        if (sa.zeta2) d = std::max(d, std::abs(*sa.zeta2 - *sb.zeta2));
        for (size_t j = 0; j < sa.modes.size(); ++j) {
            const ctrl::ModeController& ma = sa.modes[j];
            const ctrl::ModeController& mb = sb.modes[j];
            if (ma.gain.size() != mb.gain.size() || ma.mixer.size() != mb.mixer.size() ||
                ma.lyap.size() != mb.lyap.size())
                return kInf;
            for (size_t l = 0; l < ma.gain.size(); ++l)
                d = std::max(d, max_abs_diff(ma.gain[l], mb.gain[l]));
            for (size_t k = 0; k < ma.mixer.size(); ++k)
                d = std::max(d, max_abs_diff(ma.mixer[k], mb.mixer[k]));
            for (size_t k = 0; k < ma.lyap.size(); ++k)
                d = std::max(d, max_abs_diff(ma.lyap[k], mb.lyap[k]));
        }
    }
    return d;
}

void push_check(std::vector<lmi::Residual>& out, const std::string& family,
                const std::string& label, const Eigen::MatrixXd& adjusted, double margin,
                double tol) {
    lmi::Residual r;
    r.label = label;
    r.family = family;
    r.min_eig = spectra::min_eigenvalue(adjusted);
    r.margin = margin;
    r.pass = r.min_eig >= margin - tol;
    out.push_back(std::move(r));
}

// The inequalities recoverable from a controller file alone: positivity of
// the Lyapunov and mixing blocks, and the mode-change conditions, which only
// involve the stored Lyapunov family.
std::vector<lmi::Residual> stored_checks(const SystemSpec& sys, const ctrl::ControllerSet& cs,
                                         double tol) {
    std::vector<lmi::Residual> out;
    const char* mix = cs.layout == lmi::Layout::Coherent ? "X5" : "X9";
    auto tag = [](const char* base, size_t i, size_t j, size_t k) {
        std::ostringstream os;
        os << base << '[' << i + 1 << ',' << j + 1 << ',' << k + 1 << ']';
        return os.str();
    };
    for (size_t i = 0; i < cs.subs.size(); ++i) {
        const ctrl::SubController& sc = cs.subs[i];
        for (size_t j = 0; j < sc.modes.size(); ++j) {
            const ctrl::ModeController& mc = sc.modes[j];
            for (size_t k = 0; k < mc.lyap.size(); ++k)
                push_check(out, "G1", "G1[" + tag("X1", i, j, k) + "]", mc.lyap[k], cs.epsilon,
                           tol);
            for (size_t k = 0; k < mc.mixer.size(); ++k)
                push_check(out, "G1", "G1[" + tag(mix, i, j, k) + "]", mc.mixer[k], cs.epsilon,
                           tol);
        }
        int n = sys.subs[i].n;
        for (size_t j = 0; j < sc.modes.size(); ++j) {
            for (size_t k = 0; k < sc.modes[j].lyap.size(); ++k) {
                for (size_t j2 = 0; j2 < sc.modes.size(); ++j2) {
                    if (j2 == j) continue;
                    for (size_t k2 = 0; k2 < sc.modes[j2].lyap.size(); ++k2) {
                        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 2 * n);
                        m.topLeftCorner(n, n) =
                            -cs.mu_of(static_cast<int>(i)) * sc.modes[j].lyap[k];
                        m.topRightCorner(n, n) = sc.modes[j].lyap[k];
                        m.bottomLeftCorner(n, n) = sc.modes[j].lyap[k];
                        m.bottomRightCorner(n, n) = -sc.modes[j2].lyap[k2];
                        std::ostringstream os;
                        os << "G3[i=" << i + 1 << ",(j=" << j + 1 << ",k=" << k + 1
                           << ")->(j=" << j2 + 1 << ",k=" << k2 + 1 << ")]";
                        push_check(out, "G3", os.str(), Eigen::MatrixXd(-m), 0.0, tol);
                    }
                }
            }
        }
    }
    return out;
}

double spectral_abscissa(const Eigen::MatrixXd& a) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
    return es.eigenvalues().real().maxCoeff();
}

Eigen::MatrixXd closed_loop_vertex(const RuleSpec& rule, const ctrl::ModeController& mc,
                                   size_t r) {
    Eigen::MatrixXd gain_path = mc.gain[r] * mc.mixer[r].fullPivLu().solve(rule.C);
    return rule.A + rule.B * gain_path;
}

}  // namespace

CertifyReport certify(const SystemSpec& sys, const ctrl::ControllerSet& cs,
                      const CertifyOptions& opt, const ctrl::SynthesisReport* fresh) {
    ValidationReport vr = validate(sys);
    if (!vr.ok()) {
        std::ostringstream os;
        os << "system description is invalid:";
        for (const std::string& v : vr.violations) os << "\n  " << v;
        throw Error(ErrorKind::Validation, os.str());
    }
    ctrl::check_compatible(cs, sys);

    CertifyReport rep;
    rep.system_name = sys.name;
    rep.layout = cs.layout == lmi::Layout::Coherent ? "coherent" : "literal";
    rep.epsilon = cs.epsilon;
    for (int i = 0; i < sys.count(); ++i) rep.mu.push_back(cs.mu_of(i));
    rep.options = opt;

    // --- matrix inequalities ------------------------------------------------
    if (fresh && controller_deviation(fresh->controller, cs) <= opt.match_tol) {
        rep.resynth_match = true;
        rep.residuals = fresh->residuals;
        rep.resynth_message = "residuals taken from the synthesis run in hand";
    } else if (opt.resynthesize) {
        rep.resynth_ran = true;
        try {
            ctrl::SynthesisReport fresh =
                ctrl::synthesize(sys, ctrl::synthesis_options(cs), {}, opt.residual_tol);
            double dev = controller_deviation(fresh.controller, cs);
            std::ostringstream os;
            if (dev <= opt.match_tol) {
                rep.resynth_match = true;
                rep.residuals = fresh.residuals;
                os << "re-synthesis reproduced the stored controller (max deviation " << dev
                   << ")";
            } else {
                os << "stored controller deviates from a fresh synthesis by " << dev
                   << "; checking stored matrices only";
            }
            rep.resynth_message = os.str();
        } catch (const Error& e) {
            rep.resynth_message =
                std::string("re-synthesis failed: ") + e.what() + "; checking stored matrices only";
        }
    } else {
        rep.resynth_message = "re-synthesis disabled; checking stored matrices only";
    }
    if (!rep.resynth_match) rep.residuals = stored_checks(sys, cs, opt.residual_tol);
    rep.residual_pass = !rep.residuals.empty();
    for (const lmi::Residual& r : rep.residuals)
        if (!r.pass) rep.residual_pass = false;

    // --- storage function along a noise-free run ----------------------------
    sim::SimOptions so;
    so.dt = opt.dt;
    so.t_end = opt.t_end;
    so.seed = 0;
    so.sigma = 0.0;
    so.stride = 1;
    sim::Trajectory traj = sim::simulate(sys, cs, so);

    // Coupling can move energy between subsystems, so only the total V is
    // monotone between switches; jumps stay per subsystem.
    double worst_increase = -kInf;
    for (size_t k = 0; k + 1 < traj.samples(); ++k) {
        bool switched = false;
        double total0 = 0.0;
        double total1 = 0.0;
        for (size_t i = 0; i < traj.subs.size(); ++i) {
            const sim::SubTrace& tr = traj.subs[i];
            total0 += tr.v[k];
            total1 += tr.v[k + 1];
            if (tr.mode[k + 1] == tr.mode[k]) continue;
            switched = true;
            ++rep.jump_count;
            double before =
                sim::lyapunov_value(cs, sys, static_cast<int>(i), tr.mode[k], tr.x[k + 1]);
            double after = tr.v[k + 1];
            rep.worst_jump_ratio =
                std::max(rep.worst_jump_ratio, after / std::max(before, 1e-300));
            if (after > cs.mu_of(static_cast<int>(i)) * before * (1.0 + opt.jump_tol) + 1e-12)
                ++rep.jump_violations;
        }
        if (switched) continue;
        ++rep.decrease_checked;
        worst_increase = std::max(worst_increase, total1 - total0);
        if (total1 > total0 * (1.0 + opt.decrease_rel_tol) + opt.decrease_abs_tol)
            ++rep.decrease_violations;
    }
    rep.worst_increase = rep.decrease_checked > 0 ? worst_increase : 0.0;
    rep.lyapunov_pass = rep.decrease_violations == 0 && rep.jump_violations == 0;

    // --- empirical attenuation ----------------------------------------------
    bool any_disturbance = false;
    for (const SubsystemSpec& s : sys.subs) any_disturbance = any_disturbance || s.v > 0;
    if (opt.hinf_runs > 0 && any_disturbance) {
        SystemSpec rest = sys;  // attenuation holds from rest, so zero the start
        for (SubsystemSpec& s : rest.subs) s.x0.setZero();
        rep.hinf_runs = opt.hinf_runs;
        rep.hinf_sigma = opt.hinf_sigma;
        rep.hinf.resize(sys.subs.size());
        for (size_t i = 0; i < sys.subs.size(); ++i) rep.hinf[i].zeta2 = cs.subs[i].zeta2;
        for (int r = 0; r < opt.hinf_runs; ++r) {
            sim::SimOptions ho;
            ho.dt = opt.dt;
            ho.t_end = opt.t_end;
            ho.seed = opt.seed_base + static_cast<std::uint64_t>(r);
            ho.sigma = opt.hinf_sigma;
            ho.stride = 1;
            sim::HinfMetrics m = sim::hinf_metrics(sim::simulate(rest, cs, ho));
            for (size_t i = 0; i < sys.subs.size(); ++i) {
                rep.hinf[i].worst_output_ratio =
                    std::max(rep.hinf[i].worst_output_ratio, m.output_ratio(static_cast<int>(i)));
                rep.hinf[i].worst_state_ratio =
                    std::max(rep.hinf[i].worst_state_ratio, m.state_ratio(static_cast<int>(i)));
            }
        }
        for (HinfSubReport& h : rep.hinf) {
            if (h.zeta2) h.pass = h.worst_output_ratio <= *h.zeta2 * (1.0 + opt.hinf_slack);
            rep.hinf_pass = rep.hinf_pass && h.pass;
        }
    }

    // --- closed-loop vertex spectra ------------------------------------------
    bool single_rule = true;
    for (size_t i = 0; i < sys.subs.size(); ++i) {
        const SubsystemSpec& sub = sys.subs[i];
        single_rule = single_rule && sub.modes.size() == 1 && sub.rule_count(0) == 1;
        for (size_t j = 0; j < sub.modes.size(); ++j) {
            for (size_t r = 0; r < sub.modes[j].rules.size(); ++r) {
                VertexReport v;
                v.sub = static_cast<int>(i + 1);
                v.mode = static_cast<int>(j + 1);
                v.rule = static_cast<int>(r + 1);
                v.abscissa = spectral_abscissa(
                    closed_loop_vertex(sub.modes[j].rules[r], cs.subs[i].modes[j], r));
                rep.vertices.push_back(v);
            }
        }
    }
    if (single_rule) {
        int total = 0;
        std::vector<int> offset(sys.subs.size(), 0);
        for (size_t i = 0; i < sys.subs.size(); ++i) {
            offset[i] = total;
            total += sys.subs[i].n;
        }
        Eigen::MatrixXd full = Eigen::MatrixXd::Zero(total, total);
        for (size_t i = 0; i < sys.subs.size(); ++i) {
            const RuleSpec& rule = sys.subs[i].modes[0].rules[0];
            full.block(offset[i], offset[i], sys.subs[i].n, sys.subs[i].n) =
                closed_loop_vertex(rule, cs.subs[i].modes[0], 0);
            for (const auto& [alpha, cp] : rule.couplings)
                full.block(offset[i], offset[static_cast<size_t>(alpha)], sys.subs[i].n,
                           sys.subs[static_cast<size_t>(alpha)].n) = cp.F;
        }
        rep.lti_abscissa = spectral_abscissa(full);
    }

    rep.pass = rep.residual_pass && rep.lyapunov_pass && rep.hinf_pass;
    return rep;
}

std::string to_json(const CertifyReport& rep) {
    using nlohmann::json;
    json root;
    root["system"] = rep.system_name;
    root["layout"] = rep.layout;
    root["epsilon"] = rep.epsilon;
    bool uniform_mu = true;
    for (double m : rep.mu) uniform_mu = uniform_mu && m == rep.mu.front();
    if (uniform_mu && !rep.mu.empty())
        root["mu"] = rep.mu.front();
    else
        root["mu"] = rep.mu;
    root["pass"] = rep.pass;

    json ineq;
    ineq["source"] = rep.resynth_match ? "resynthesis" : "stored";
    ineq["note"] = rep.resynth_message;
    ineq["tol"] = rep.options.residual_tol;
    ineq["checked"] = rep.residuals.size();
    long long failed = 0;
    const lmi::Residual* worst = nullptr;
    json blocks = json::array();
    for (const lmi::Residual& r : rep.residuals) {
        if (!r.pass) ++failed;
        if (!worst || r.min_eig - r.margin < worst->min_eig - worst->margin) worst = &r;
        json b;
        b["label"] = r.label;
        b["family"] = r.family;
        b["min_eig"] = r.min_eig;
        b["margin"] = r.margin;
        b["pass"] = r.pass;
        blocks.push_back(std::move(b));
    }
    ineq["failed"] = failed;
    ineq["pass"] = rep.residual_pass;
    if (worst) {
        json w;
        w["label"] = worst->label;
        w["min_eig"] = worst->min_eig;
        w["margin"] = worst->margin;
        ineq["worst"] = std::move(w);
    } else {
        ineq["worst"] = nullptr;
    }
    ineq["blocks"] = std::move(blocks);
    root["inequalities"] = std::move(ineq);

    json storage;
    storage["dt"] = rep.options.dt;
    storage["t_end"] = rep.options.t_end;
    storage["between_switches"] = {{"checked", rep.decrease_checked},
                                   {"violations", rep.decrease_violations},
                                   {"worst_increase", rep.worst_increase},
                                   {"rel_tol", rep.options.decrease_rel_tol},
                                   {"abs_tol", rep.options.decrease_abs_tol}};
    json bound;
    if (uniform_mu && !rep.mu.empty())
        bound = rep.mu.front();
    else
        bound = rep.mu;
    storage["jumps"] = {{"count", rep.jump_count},
                        {"violations", rep.jump_violations},
                        {"worst_ratio", rep.worst_jump_ratio},
                        {"bound", bound},
                        {"tol", rep.options.jump_tol}};
    storage["pass"] = rep.lyapunov_pass;
    root["storage"] = std::move(storage);

    json att;
    att["runs"] = rep.hinf_runs;
    att["sigma"] = rep.hinf_sigma;
    att["horizon"] = rep.options.t_end;
    att["slack"] = rep.options.hinf_slack;
    att["seed_base"] = rep.options.seed_base;
    att["pass"] = rep.hinf_pass;
    json subs = json::array();
    for (const HinfSubReport& h : rep.hinf) {
        json s;
        if (h.zeta2)
            s["zeta2"] = *h.zeta2;
        else
            s["zeta2"] = nullptr;
        s["worst_output_ratio"] = h.worst_output_ratio;
        s["worst_state_ratio"] = h.worst_state_ratio;
        s["pass"] = h.pass;
        subs.push_back(std::move(s));
    }
    att["subsystems"] = std::move(subs);
    root["attenuation"] = std::move(att);

    json vert;
    vert["diagnostic_only"] = true;
    json per = json::array();
    for (const VertexReport& v : rep.vertices) {
        json e;
        e["sub"] = v.sub;
        e["mode"] = v.mode;
        e["rule"] = v.rule;
        e["abscissa"] = v.abscissa;
        e["stable"] = v.abscissa < 0.0;
        per.push_back(std::move(e));
    }
    vert["per_rule"] = std::move(per);
    if (rep.lti_abscissa)
        vert["closed_loop_abscissa"] = *rep.lti_abscissa;
    else
        vert["closed_loop_abscissa"] = nullptr;
    root["vertices"] = std::move(vert);

    return root.dump(2) + "\n";
}

}  // namespace switsyn::verify
