#include "switsyn/controller.hpp"

#include "switsyn/doc.hpp"
#include "switsyn/error.hpp"
#include "switsyn/spectra.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace switsyn::ctrl {

Eigen::VectorXd control_output(const ControllerSet& cs, int sub, int mode,
                               const Eigen::VectorXd& h, const Eigen::VectorXd& y,
                               MixDiagnostics* diag) {
    const ModeController& mc =
        cs.subs.at(static_cast<size_t>(sub)).modes.at(static_cast<size_t>(mode));
    const size_t r = mc.gain.size();
    if (static_cast<size_t>(h.size()) != r)
        throw Error(ErrorKind::Validation, "membership vector length does not match the rule count");

    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(mc.gain[0].rows(), mc.gain[0].cols());
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(mc.mixer[0].rows(), mc.mixer[0].cols());
    for (size_t l = 0; l < r; ++l) {
        K += h(static_cast<Eigen::Index>(l)) * mc.gain[l];
        M += h(static_cast<Eigen::Index>(l)) * mc.mixer[l];
    }

    if (diag) {
        spectra::SymmetricEigen e = spectra::symmetric_eigen(M);
        diag->min_eig = e.values(0);
        diag->max_eig = e.values(e.values.size() - 1);
        diag->condition = diag->min_eig > 0.0
                              ? diag->max_eig / diag->min_eig
                              : std::numeric_limits<double>::infinity();
    }

    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (M + M.transpose()));
    if (llt.info() != Eigen::Success)
        throw Error(ErrorKind::Solver,
                    "subsystem " + std::to_string(sub + 1) + " mode " + std::to_string(mode + 1) +
                        ": blended mixing block is not positive definite");
    return K * llt.solve(y);
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

std::string serialize_controller(const ControllerSet& cs) {
    doc::Section root;
    root.name = "(document)";

    doc::Section meta;
    meta.name = "controller";
    meta.entries.emplace_back(
        "layout",
        doc::text_value(cs.layout == lmi::Layout::Coherent ? "coherent" : "literal"));
    meta.entries.emplace_back("epsilon", doc::text_value(doc::format_number(cs.epsilon)));
    if (cs.mu.size() > 1) {
        Eigen::MatrixXd m(1, static_cast<Eigen::Index>(cs.mu.size()));
        for (size_t t = 0; t < cs.mu.size(); ++t) m(0, static_cast<Eigen::Index>(t)) = cs.mu[t];
        meta.entries.emplace_back("mu", doc::matrix_value(m));
    } else {
        meta.entries.emplace_back("mu", doc::text_value(doc::format_number(cs.mu_of(0))));
    }
    if (cs.zeta2_option) {
        Eigen::MatrixXd z(1, static_cast<Eigen::Index>(cs.zeta2_option->size()));
        for (size_t t = 0; t < cs.zeta2_option->size(); ++t)
            z(0, static_cast<Eigen::Index>(t)) = (*cs.zeta2_option)[t];
        meta.entries.emplace_back("zeta2", doc::matrix_value(z));
    }
    if (cs.lambda_option)
        meta.entries.emplace_back("lambda",
                                  doc::text_value(doc::format_number(*cs.lambda_option)));
    if (!cs.system_name.empty())
        meta.entries.emplace_back("system", doc::string_value(cs.system_name));
    root.children.push_back(std::move(meta));

    for (size_t i = 0; i < cs.subs.size(); ++i) {
        const SubController& sc = cs.subs[i];
        doc::Section s;
        s.name = "subsystem";
        s.index = static_cast<int>(i + 1);
        if (sc.zeta2)
            s.entries.emplace_back("zeta2", doc::text_value(doc::format_number(*sc.zeta2)));
        for (size_t j = 0; j < sc.modes.size(); ++j) {
            const ModeController& mc = sc.modes[j];
            doc::Section m;
            m.name = "mode";
            m.index = static_cast<int>(j + 1);
            for (size_t l = 0; l < mc.gain.size(); ++l)
                m.entries.emplace_back("gain[" + std::to_string(l + 1) + "]",
                                       doc::matrix_value(mc.gain[l]));
            for (size_t k = 0; k < mc.mixer.size(); ++k)
                m.entries.emplace_back("mixer[" + std::to_string(k + 1) + "]",
                                       doc::matrix_value(mc.mixer[k]));
            for (size_t k = 0; k < mc.lyap.size(); ++k)
                m.entries.emplace_back("lyap[" + std::to_string(k + 1) + "]",
                                       doc::matrix_value(mc.lyap[k]));
            s.children.push_back(std::move(m));
        }
        root.children.push_back(std::move(s));
    }
    return doc::serialize(root);
}

namespace {

std::vector<Eigen::MatrixXd> indexed_matrices(const doc::Section& m, const std::string& base,
                                              const std::string& source,
                                              const std::string& label) {
    std::vector<Eigen::MatrixXd> out;
    for (int k = 1;; ++k) {
        std::string key = base + "[" + std::to_string(k) + "]";
        if (!m.has(key)) break;
        out.push_back(m.matrix(key));
    }
    if (out.empty())
        throw Error(ErrorKind::Parse, source + ": " + label + ": missing '" + base + "[1]'");
    return out;
}

}  // namespace

ControllerSet parse_controller(const std::string& text, const std::string& source) {
    doc::Section root = doc::parse(text, source);
    ControllerSet cs;

    const doc::Section* meta = root.find("controller");
    if (!meta) throw Error(ErrorKind::Parse, source + ": missing required section 'controller'");
    std::string layout = meta->text_or("layout", "coherent");
    if (layout == "coherent")
        cs.layout = lmi::Layout::Coherent;
    else if (layout == "literal")
        cs.layout = lmi::Layout::PaperLiteral;
    else
        throw Error(ErrorKind::Parse, source + ": unknown layout '" + layout + "'");
    cs.epsilon = meta->scalar_or("epsilon", 0.0);
    if (meta->has("mu")) {
        if (meta->find_value("mu")->kind == doc::Value::Kind::Matrix) {
            Eigen::VectorXd m = meta->vector("mu");
            cs.mu.assign(m.data(), m.data() + m.size());
        } else {
            cs.mu = {meta->scalar("mu")};
        }
    }
    if (meta->has("zeta2")) {
        Eigen::VectorXd z = meta->vector("zeta2");
        cs.zeta2_option = std::vector<double>(z.data(), z.data() + z.size());
    }
    if (meta->has("lambda")) cs.lambda_option = meta->scalar("lambda");
    cs.system_name = meta->text_or("system", "");

    std::vector<const doc::Section*> subs = root.all("subsystem");
    std::vector<const doc::Section*> ordered(subs.size(), nullptr);
    for (const doc::Section* s : subs) {
        if (s->index < 1 || s->index > static_cast<int>(subs.size()) ||
            ordered[static_cast<size_t>(s->index - 1)])
            throw Error(ErrorKind::Parse, source + ": subsystem sections must be indexed 1.." +
                                              std::to_string(subs.size()));
        ordered[static_cast<size_t>(s->index - 1)] = s;
    }
    if (ordered.empty()) throw Error(ErrorKind::Parse, source + ": no subsystem sections");

    for (size_t i = 0; i < ordered.size(); ++i) {
        const doc::Section& s = *ordered[i];
        std::string label = "subsystem[" + std::to_string(i + 1) + "]";
        SubController sc;
        if (s.has("zeta2")) sc.zeta2 = s.scalar("zeta2");

        std::vector<const doc::Section*> modes = s.all("mode");
        std::vector<const doc::Section*> mord(modes.size(), nullptr);
        for (const doc::Section* m : modes) {
            if (m->index < 1 || m->index > static_cast<int>(modes.size()) ||
                mord[static_cast<size_t>(m->index - 1)])
                throw Error(ErrorKind::Parse,
                            source + ": " + label + ": mode sections must be indexed 1.." +
                                std::to_string(modes.size()));
            mord[static_cast<size_t>(m->index - 1)] = m;
        }
        if (mord.empty())
            throw Error(ErrorKind::Parse, source + ": " + label + ": no mode sections");

        for (size_t j = 0; j < mord.size(); ++j) {
            std::string mlabel = label + " mode[" + std::to_string(j + 1) + "]";
            ModeController mc;
            mc.gain = indexed_matrices(*mord[j], "gain", source, mlabel);
            mc.mixer = indexed_matrices(*mord[j], "mixer", source, mlabel);
            mc.lyap = indexed_matrices(*mord[j], "lyap", source, mlabel);
            if (mc.gain.size() != mc.mixer.size() || mc.gain.size() != mc.lyap.size())
                throw Error(ErrorKind::Parse,
                            source + ": " + mlabel +
                                ": gain, mixer and lyap need one entry per rule");
            for (const Eigen::MatrixXd& m : mc.mixer)
                if (m.rows() != m.cols())
                    throw Error(ErrorKind::Parse, source + ": " + mlabel + ": mixer must be square");
            for (const Eigen::MatrixXd& m : mc.lyap)
                if (m.rows() != m.cols())
                    throw Error(ErrorKind::Parse, source + ": " + mlabel + ": lyap must be square");
            sc.modes.push_back(std::move(mc));
        }
        cs.subs.push_back(std::move(sc));
    }
    return cs;
}

ControllerSet load_controller(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Parse, "cannot open controller file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_controller(buf.str(), path);
}

void save_controller(const ControllerSet& cs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Parse, "cannot write controller file '" + path + "'");
    out << serialize_controller(cs);
}

void check_compatible(const ControllerSet& cs, const SystemSpec& sys) {
    if (static_cast<int>(cs.subs.size()) != sys.count())
        throw Error(ErrorKind::Validation, "controller covers " + std::to_string(cs.subs.size()) +
                                               " subsystems, the system has " +
                                               std::to_string(sys.count()));
    for (int i = 0; i < sys.count(); ++i) {
        const SubsystemSpec& sub = sys.subs[static_cast<size_t>(i)];
        const SubController& sc = cs.subs[static_cast<size_t>(i)];
        std::string label = "subsystem " + std::to_string(i + 1);
        if (sc.modes.size() != sub.modes.size())
            throw Error(ErrorKind::Validation, label + ": mode count mismatch");
        for (size_t j = 0; j < sc.modes.size(); ++j) {
            const ModeController& mc = sc.modes[j];
            if (static_cast<int>(mc.gain.size()) != sub.rule_count(static_cast<int>(j)))
                throw Error(ErrorKind::Validation,
                            label + " mode " + std::to_string(j + 1) + ": rule count mismatch");
            int mdim = cs.layout == lmi::Layout::Coherent ? sub.p : sub.u;
            for (const Eigen::MatrixXd& g : mc.gain)
                if (g.rows() != sub.u || g.cols() != sub.p)
                    throw Error(ErrorKind::Validation,
                                label + ": gain shape does not match input/output dimensions");
            for (const Eigen::MatrixXd& m : mc.mixer)
                if (m.rows() != mdim)
                    throw Error(ErrorKind::Validation,
                                label + ": mixer shape does not match the layout");
            for (const Eigen::MatrixXd& m : mc.lyap)
                if (m.rows() != sub.n)
                    throw Error(ErrorKind::Validation,
                                label + ": lyap shape does not match the state dimension");
        }
    }
}

lmi::SynthesisOptions synthesis_options(const ControllerSet& cs) {
    lmi::SynthesisOptions opt;
    opt.layout = cs.layout;
    opt.epsilon = cs.epsilon;
    opt.mu = cs.mu;
    opt.zeta2 = cs.zeta2_option;
    opt.lambda_override = cs.lambda_option;
    return opt;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

ControllerSet extract_controller(const SystemSpec& sys, const lmi::LmiProgram& prog,
                                 const Eigen::VectorXd& theta,
                                 const lmi::SynthesisOptions& opt) {
    const lmi::Catalogue& cat = prog.catalogue;
    ControllerSet cs;
    cs.layout = opt.layout;
    cs.epsilon = opt.epsilon;
    cs.mu = opt.mu;
    cs.zeta2_option = opt.zeta2;
    cs.lambda_option = opt.lambda_override;
    cs.system_name = sys.name;
    for (int i = 0; i < sys.count(); ++i) {
        const SubsystemSpec& sub = sys.subs[static_cast<size_t>(i)];
        SubController sc;
        for (int j = 0; j < static_cast<int>(sub.modes.size()); ++j) {
            ModeController mc;
            for (int l = 0; l < sub.rule_count(j); ++l)
                mc.gain.push_back(cat.unpack(cat.gain(i, j, l), theta));
            for (int k = 0; k < sub.rule_count(j); ++k) {
                int mix = opt.layout == lmi::Layout::Coherent ? cat.x5(i, j, k)
                                                              : cat.x9(i, j, k);
                mc.mixer.push_back(cat.unpack(mix, theta));
                mc.lyap.push_back(cat.unpack(cat.x1(i, j, k), theta));
            }
            sc.modes.push_back(std::move(mc));
        }
        if (opt.zeta2) {
            sc.zeta2 = opt.zeta2_of(i);
        } else {
            int zv = cat.zeta2(i);
            if (zv >= 0) sc.zeta2 = theta(cat.var(zv).offset);
        }
        cs.subs.push_back(std::move(sc));
    }
    return cs;
}

SynthesisReport synthesize(const SystemSpec& sys, const lmi::SynthesisOptions& opt,
                           const sdp::SolverOptions& sopt, double residual_tol) {
    ValidationReport vr = validate(sys);
    if (!vr.ok()) {
        std::ostringstream os;
        os << "system description is invalid:";
        for (const std::string& v : vr.violations) os << "\n  " << v;
        throw Error(ErrorKind::Validation, os.str());
    }

    SynthesisReport rep;
    rep.program = lmi::assemble_program(sys, opt);
    sdp::ConicProgram cp = sdp::encode(rep.program);
    sdp::SolveResult sol = sdp::solve(cp, sopt);

    if (sol.status == sdp::SolveStatus::Infeasible) {
        std::ostringstream os;
        os << "synthesis conditions are infeasible: " << sol.message << " [layout "
           << (opt.layout == lmi::Layout::Coherent ? "coherent" : "paper-literal")
           << ", epsilon " << opt.epsilon << ", mu";
        for (int i = 0; i < sys.count(); ++i) os << ' ' << opt.mu_of(i);
        os << ", zeta2";
        if (opt.zeta2)
            for (int i = 0; i < sys.count(); ++i) os << ' ' << opt.zeta2_of(i);
        else
            os << " minimized";
        if (opt.lambda_override) os << ", lambda " << *opt.lambda_override;
        os << "]";
        throw Error(ErrorKind::Infeasible, os.str());
    }
    if (sol.status == sdp::SolveStatus::NumericalTrouble)
        throw Error(ErrorKind::Solver, "solver gave up: " + sol.message);

    rep.status = sol.status;
    rep.theta = sol.theta;
    rep.objective = sol.objective;
    rep.slack = sol.slack;
    rep.newton_iterations = sol.newton_iterations;

    rep.residuals = lmi::residual_check(rep.program, rep.theta, residual_tol);
    for (const lmi::Residual& r : rep.residuals)
        if (!r.pass)
            throw Error(ErrorKind::Solver,
                        "independent residual check failed at " + r.label + " (eigenvalue " +
                            std::to_string(r.min_eig) + ", needs " + std::to_string(r.margin) +
                            ")");

    rep.controller = extract_controller(sys, rep.program, rep.theta, opt);
    return rep;
}

}  // namespace switsyn::ctrl
