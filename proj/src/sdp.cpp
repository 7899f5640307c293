#include "switsyn/sdp.hpp"

#include "switsyn/doc.hpp"
#include "switsyn/error.hpp"
#include "switsyn/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>

namespace switsyn::sdp {

// ---------------------------------------------------------------------------
// Conic form
// ---------------------------------------------------------------------------

Eigen::MatrixXd ConicBlock::eval(const Eigen::VectorXd& reduced) const {
    Eigen::MatrixXd G = constant;
    for (const ConicEntry& e : entries) G(e.r, e.c) += reduced(e.var) * e.v;
    return G;
}

Eigen::VectorXd ConicProgram::expand(const Eigen::VectorXd& reduced) const {
    Eigen::VectorXd full(full_count);
    for (int p = 0; p < full_count; ++p)
        full(p) = expand_scale[static_cast<size_t>(p)] *
                  reduced(expand_index[static_cast<size_t>(p)]);
    return full;
}

ConicProgram encode(const lmi::LmiProgram& prog) {
    const lmi::Catalogue& cat = prog.catalogue;
    ConicProgram cp;
    cp.full_count = cat.scalar_count();
    cp.minimize = prog.minimize;

    // Variable-level tie resolution (chains collapse to the class root).
    std::vector<int> target(cat.vars().size());
    std::vector<double> factor(cat.vars().size(), 1.0);
    for (size_t v = 0; v < target.size(); ++v) target[v] = static_cast<int>(v);
    for (const lmi::TieSpec& t : prog.ties) {
        target[static_cast<size_t>(t.var)] = t.rep;
        factor[static_cast<size_t>(t.var)] = t.scale;
    }
    for (size_t v = 0; v < target.size(); ++v) {
        int root = target[v];
        double f = factor[v];
        while (target[static_cast<size_t>(root)] != root) {
            f *= factor[static_cast<size_t>(root)];
            root = target[static_cast<size_t>(root)];
        }
        target[v] = root;
        factor[v] = f;
    }

    cp.expand_index.assign(static_cast<size_t>(cp.full_count), -1);
    cp.expand_scale.assign(static_cast<size_t>(cp.full_count), 1.0);
    int next = 0;
    for (size_t v = 0; v < cat.vars().size(); ++v) {
        if (target[v] != static_cast<int>(v)) continue;
        const lmi::VarInfo& info = cat.var(static_cast<int>(v));
        for (int s = 0; s < info.count(); ++s)
            cp.expand_index[static_cast<size_t>(info.offset + s)] = next++;
    }
    cp.reduced_count = next;
    for (size_t v = 0; v < cat.vars().size(); ++v) {
        if (target[v] == static_cast<int>(v)) continue;
        const lmi::VarInfo& info = cat.var(static_cast<int>(v));
        const lmi::VarInfo& rep = cat.var(target[v]);
        for (int s = 0; s < info.count(); ++s) {
            cp.expand_index[static_cast<size_t>(info.offset + s)] =
                cp.expand_index[static_cast<size_t>(rep.offset + s)];
            cp.expand_scale[static_cast<size_t>(info.offset + s)] = factor[v];
        }
    }

    cp.objective = Eigen::VectorXd::Zero(cp.reduced_count);
    if (prog.objective.size() == cp.full_count)
        for (int p = 0; p < cp.full_count; ++p)
            cp.objective(cp.expand_index[static_cast<size_t>(p)]) +=
                cp.expand_scale[static_cast<size_t>(p)] * prog.objective(p);

    for (size_t b = 0; b < prog.blocks.size(); ++b) {
        if (std::binary_search(prog.dropped.begin(), prog.dropped.end(), b)) continue;
        const lmi::LmiBlock& blk = prog.blocks[b];
        const double sense = blk.sense == lmi::Sense::LE ? -1.0 : 1.0;
        ConicBlock cb;
        cb.label = blk.label;
        cb.dim = blk.dim;
        cb.constant = sense * blk.constant -
                      blk.margin * Eigen::MatrixXd::Identity(blk.dim, blk.dim);

        std::map<std::tuple<int, int, int>, double> acc;
        for (const lmi::Term& t : blk.terms) {
            const lmi::VarInfo& info = cat.var(t.var);
            for (int r = 0; r < info.rows; ++r) {
                int c0 = info.symmetric ? r : 0;
                for (int c = c0; c < info.cols; ++c) {
                    Eigen::MatrixXd D = t.left.col(r) * t.right.row(c);
                    if (info.symmetric && c != r) D += t.left.col(c) * t.right.row(r);
                    D *= t.coeff;
                    Eigen::MatrixXd A = D + D.transpose();
                    int slot = info.symmetric
                                   ? r * info.rows - r * (r - 1) / 2 + (c - r)
                                   : r * info.cols + c;
                    int p = info.offset + slot;
                    double scale =
                        sense * cp.expand_scale[static_cast<size_t>(p)];
                    int q = cp.expand_index[static_cast<size_t>(p)];
                    for (int i = 0; i < blk.dim; ++i)
                        for (int j = 0; j < blk.dim; ++j)
                            if (A(i, j) != 0.0) acc[{q, i, j}] += scale * A(i, j);
                }
            }
        }
        cb.entries.reserve(acc.size());
        for (const auto& [key, v] : acc)
            if (v != 0.0)
                cb.entries.push_back(
                    {std::get<0>(key), std::get<1>(key), std::get<2>(key), v});
        cp.blocks.push_back(std::move(cb));
    }
    return cp;
}

std::string to_text(const ConicProgram& cp) {
    std::ostringstream os;
    os << "conic 1\n";
    os << "scalars " << cp.reduced_count << " full " << cp.full_count << "\n";
    os << "minimize " << (cp.minimize ? 1 : 0) << "\n";
    int nnz = 0;
    for (int p = 0; p < cp.reduced_count; ++p)
        if (cp.objective(p) != 0.0) ++nnz;
    os << "objective " << nnz << "\n";
    for (int p = 0; p < cp.reduced_count; ++p)
        if (cp.objective(p) != 0.0)
            os << "  " << p << " " << doc::format_number(cp.objective(p)) << "\n";
    os << "expand " << cp.full_count << "\n";
    for (int p = 0; p < cp.full_count; ++p)
        os << "  " << cp.expand_index[static_cast<size_t>(p)] << " "
           << doc::format_number(cp.expand_scale[static_cast<size_t>(p)]) << "\n";
    os << "blocks " << cp.blocks.size() << "\n";
    for (const ConicBlock& b : cp.blocks) {
        os << "block " << b.label << " dim " << b.dim << "\n";
        int cnnz = 0;
        for (int i = 0; i < b.dim; ++i)
            for (int j = 0; j < b.dim; ++j)
                if (b.constant(i, j) != 0.0) ++cnnz;
        os << "constant " << cnnz << "\n";
        for (int i = 0; i < b.dim; ++i)
            for (int j = 0; j < b.dim; ++j)
                if (b.constant(i, j) != 0.0)
                    os << "  " << i << " " << j << " " << doc::format_number(b.constant(i, j))
                       << "\n";
        os << "entries " << b.entries.size() << "\n";
        for (const ConicEntry& e : b.entries)
            os << "  " << e.var << " " << e.r << " " << e.c << " " << doc::format_number(e.v)
               << "\n";
    }
    return os.str();
}

std::string status_name(SolveStatus s) {
    switch (s) {
        case SolveStatus::Feasible: return "feasible";
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::Infeasible: return "infeasible";
        case SolveStatus::NumericalTrouble: return "numerical_trouble";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Barrier solver
// ---------------------------------------------------------------------------

namespace {

struct ScalarGroup {
    int var = -1;
    size_t begin = 0;
    size_t end = 0;
};

struct Walker {
    const ConicProgram& cp;
    const SolverOptions& opt;
    std::vector<std::vector<ScalarGroup>> groups;
    double nu = 0.0;
    int newton_total = 0;

    Walker(const ConicProgram& p, const SolverOptions& o) : cp(p), opt(o) {
        groups.resize(cp.blocks.size());
        for (size_t b = 0; b < cp.blocks.size(); ++b) {
            const auto& es = cp.blocks[b].entries;
            size_t i = 0;
            while (i < es.size()) {
                size_t j = i;
                while (j < es.size() && es[j].var == es[i].var) ++j;
                groups[b].push_back({es[i].var, i, j});
                i = j;
            }
            nu += cp.blocks[b].dim;
        }
        nu += 2.0 * cp.reduced_count;
    }

    struct Point {
        Eigen::VectorXd theta;
        double t = 0.0;  // feasibility slack variable, phase one only
    };

    // Returns false when any block loses definiteness or the box is left.
    bool factor(const Point& z, bool phase1,
                std::vector<Eigen::LLT<Eigen::MatrixXd>>& llts, double& logdet) const {
        const double R = opt.box_radius;
        for (int p = 0; p < cp.reduced_count; ++p)
            if (!(std::abs(z.theta(p)) < R)) return false;
        llts.resize(cp.blocks.size());
        logdet = 0.0;
        for (size_t b = 0; b < cp.blocks.size(); ++b) {
            Eigen::MatrixXd G = cp.blocks[b].eval(z.theta);
            if (phase1) G.diagonal().array() -= z.t;
            llts[b].compute(G);
            if (llts[b].info() != Eigen::Success) return false;
            const auto& L = llts[b].matrixLLT();
            for (int d = 0; d < cp.blocks[b].dim; ++d) {
                double piv = L(d, d);
                if (!(piv > 0.0) || !std::isfinite(piv)) return false;
                logdet += 2.0 * std::log(piv);
            }
        }
        return true;
    }

    [[nodiscard]] double barrier_value(const Point& z, double logdet, double mu,
                                       bool phase1) const {
        double f = phase1 ? -mu * z.t : mu * cp.objective.dot(z.theta);
        f -= logdet;
        const double R = opt.box_radius;
        for (int p = 0; p < cp.reduced_count; ++p)
            f -= std::log(R - z.theta(p)) + std::log(R + z.theta(p));
        return f;
    }

    // One centering run at fixed mu. Returns true when it hit the phase-one
    // acceptance test supplied by the caller.
    template <typename StopFn>
    bool center(Point& z, double mu, bool phase1, const StopFn& stop) {
        const int n = cp.reduced_count + (phase1 ? 1 : 0);
        const int tcol = cp.reduced_count;
        std::vector<Eigen::LLT<Eigen::MatrixXd>> llts;
        double logdet = 0.0;
        if (!factor(z, phase1, llts, logdet))
            throw Error(ErrorKind::Solver, "interior point left the cone");
        double f = barrier_value(z, logdet, mu, phase1);

        for (int it = 0; it < opt.max_newton; ++it) {
            if (stop(z)) return true;
            ++newton_total;

            Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
            Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
            if (phase1)
                g(tcol) = -mu;
            else
                g.head(cp.reduced_count) = mu * cp.objective;

            for (size_t b = 0; b < cp.blocks.size(); ++b) {
                const auto& es = cp.blocks[b].entries;
                const int dim = cp.blocks[b].dim;
                Eigen::MatrixXd Sinv =
                    llts[b].solve(Eigen::MatrixXd::Identity(dim, dim));
                Eigen::MatrixXd Sinv2;
                if (phase1) Sinv2 = Sinv * Sinv;

                for (const ScalarGroup& a : groups[b]) {
                    double ga = 0.0, hat = 0.0;
                    for (size_t e = a.begin; e < a.end; ++e) {
                        ga += es[e].v * Sinv(es[e].c, es[e].r);
                        if (phase1) hat += es[e].v * Sinv2(es[e].c, es[e].r);
                    }
                    g(a.var) -= ga;
                    if (phase1) {
                        H(a.var, tcol) -= hat;
                        H(tcol, a.var) -= hat;
                    }
                }
                for (size_t ai = 0; ai < groups[b].size(); ++ai) {
                    const ScalarGroup& a = groups[b][ai];
                    for (size_t bi = ai; bi < groups[b].size(); ++bi) {
                        const ScalarGroup& b2 = groups[b][bi];
                        double h = 0.0;
                        for (size_t e1 = a.begin; e1 < a.end; ++e1)
                            for (size_t e2 = b2.begin; e2 < b2.end; ++e2)
                                h += es[e1].v * es[e2].v * Sinv(es[e1].c, es[e2].r) *
                                     Sinv(es[e2].c, es[e1].r);
                        H(a.var, b2.var) += h;
                        if (ai != bi) H(b2.var, a.var) += h;
                    }
                }
                if (phase1) {
                    g(tcol) += Sinv.trace();
                    H(tcol, tcol) += Sinv2.trace();
                }
            }

            const double R = opt.box_radius;
            for (int p = 0; p < cp.reduced_count; ++p) {
                double lo = R + z.theta(p), hi = R - z.theta(p);
                g(p) += 1.0 / hi - 1.0 / lo;
                H(p, p) += 1.0 / (hi * hi) + 1.0 / (lo * lo);
            }

            Eigen::VectorXd dx;
            double ridge = 1e-12 * std::max(1.0, H.diagonal().maxCoeff());
            bool solved = false;
            for (int attempt = 0; attempt < 6 && !solved; ++attempt) {
                Eigen::MatrixXd Hr = H;
                Hr.diagonal().array() += ridge;
                Eigen::LLT<Eigen::MatrixXd> hl(Hr);
                if (hl.info() == Eigen::Success) {
                    dx = hl.solve(-g);
                    solved = std::isfinite(dx.sum());
                }
                ridge *= 1e3;
            }
            if (!solved) return false;

            double slope = g.dot(dx);
            if (!(slope < 0.0)) return false;
            if (-slope / 2.0 <= 1e-8) return false;  // centered

            double alpha = 1.0;
            bool accepted = false;
            while (alpha >= 1e-12) {
                Point trial = z;
                trial.theta += alpha * dx.head(cp.reduced_count);
                if (phase1) trial.t += alpha * dx(tcol);
                std::vector<Eigen::LLT<Eigen::MatrixXd>> tl;
                double tld = 0.0;
                if (factor(trial, phase1, tl, tld)) {
                    double tf = barrier_value(trial, tld, mu, phase1);
                    if (tf <= f + 0.25 * alpha * slope) {
                        z = std::move(trial);
                        llts = std::move(tl);
                        logdet = tld;
                        f = tf;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if (!accepted) return false;
        }
        return false;
    }

    [[nodiscard]] double min_block_eigenvalue(const Eigen::VectorXd& theta) const {
        double m = std::numeric_limits<double>::infinity();
        for (const ConicBlock& b : cp.blocks)
            m = std::min(m, spectra::min_eigenvalue(b.eval(theta)));
        return m;
    }
};

}  // namespace

SolveResult solve(const ConicProgram& cp, const SolverOptions& opt) {
    SolveResult res;
    if (cp.reduced_count == 0) {
        // Fully tied away; the constant blocks decide.
        double m = std::numeric_limits<double>::infinity();
        for (const ConicBlock& b : cp.blocks)
            m = std::min(m, spectra::min_eigenvalue(b.constant));
        res.theta = cp.expand(Eigen::VectorXd::Zero(0));
        res.slack = m;
        res.status = m >= 0.0 ? SolveStatus::Feasible : SolveStatus::Infeasible;
        return res;
    }

    Walker w(cp, opt);
    Walker::Point z;
    z.theta = Eigen::VectorXd::Zero(cp.reduced_count);

    double m0 = w.min_block_eigenvalue(z.theta);
    if (m0 < opt.feasibility_slack) {
        z.t = m0 - 1.0;
        double mu = 1.0;
        bool feasible = false;
        for (int round = 0; round < opt.max_rounds && !feasible; ++round) {
            auto stop = [&](const Walker::Point& p) { return p.t >= opt.feasibility_slack; };
            bool hit = w.center(z, mu, true, stop);
            if (hit || z.t >= opt.feasibility_slack) {
                double confirmed = w.min_block_eigenvalue(z.theta);
                if (confirmed >= opt.feasibility_slack - 1e-9) {
                    feasible = true;
                    res.slack = confirmed;
                    break;
                }
            }
            if (z.t + w.nu / mu < -1e-9) {
                res.status = SolveStatus::Infeasible;
                res.newton_iterations = w.newton_total;
                std::ostringstream os;
                os << "no interior point: certified margin bound "
                   << z.t + w.nu / mu << " at barrier weight " << mu;
                res.message = os.str();
                return res;
            }
            mu *= 20.0;
        }
        if (!feasible) {
            res.status = SolveStatus::NumericalTrouble;
            res.newton_iterations = w.newton_total;
            res.message = "feasibility phase exhausted without a certificate";
            return res;
        }
    } else {
        res.slack = m0;
    }

    res.status = SolveStatus::Feasible;

    if (cp.minimize) {
        double mu = 1.0;
        bool optimal = false;
        for (int round = 0; round < opt.max_rounds; ++round) {
            w.center(z, mu, false, [](const Walker::Point&) { return false; });
            double value = cp.objective.dot(z.theta);
            if (w.nu / mu <= opt.gap_tol * (1.0 + std::abs(value))) {
                optimal = true;
                break;
            }
            mu *= 20.0;
        }
        if (!optimal) {
            res.status = SolveStatus::NumericalTrouble;
            res.newton_iterations = w.newton_total;
            res.message = "objective phase exhausted before reaching the gap target";
            return res;
        }
        res.status = SolveStatus::Optimal;
        res.objective = cp.objective.dot(z.theta);
        res.slack = w.min_block_eigenvalue(z.theta);
    }

    res.theta = cp.expand(z.theta);
    res.newton_iterations = w.newton_total;
    return res;
}

}  // namespace switsyn::sdp
