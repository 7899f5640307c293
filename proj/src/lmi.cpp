#include "switsyn/lmi.hpp"

#include "switsyn/error.hpp"
#include "switsyn/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace switsyn::lmi {

namespace {

int sym_slot(int rows, int r, int c) {
    if (r > c) std::swap(r, c);
    return r * rows - r * (r - 1) / 2 + (c - r);
}

}  // namespace

// ---------------------------------------------------------------------------
// Catalogue
// ---------------------------------------------------------------------------

int Catalogue::add(VarInfo info) {
    info.offset = total_;
    int id = static_cast<int>(vars_.size());
    index_[{static_cast<int>(info.kind), info.sub, info.mode, info.a, info.b}] = id;
    total_ += info.count();
    vars_.push_back(std::move(info));
    return id;
}

int Catalogue::find(VarKind kind, int sub, int mode, int a, int b) const {
    auto it = index_.find({static_cast<int>(kind), sub, mode, a, b});
    return it == index_.end() ? -1 : it->second;
}

Eigen::MatrixXd Catalogue::unpack(int id, const Eigen::VectorXd& theta) const {
    const VarInfo& v = var(id);
    Eigen::MatrixXd M(v.rows, v.cols);
    if (v.symmetric) {
        for (int r = 0; r < v.rows; ++r)
            for (int c = r; c < v.cols; ++c) {
                double x = theta(v.offset + sym_slot(v.rows, r, c));
                M(r, c) = x;
                M(c, r) = x;
            }
    } else {
        for (int r = 0; r < v.rows; ++r)
            for (int c = 0; c < v.cols; ++c) M(r, c) = theta(v.offset + r * v.cols + c);
    }
    return M;
}

void Catalogue::pack(int id, const Eigen::MatrixXd& value, Eigen::VectorXd& theta) const {
    const VarInfo& v = var(id);
    if (value.rows() != v.rows || value.cols() != v.cols)
        throw Error(ErrorKind::Internal, "pack: shape mismatch for " + v.name);
    if (v.symmetric) {
        Eigen::MatrixXd S = 0.5 * (value + value.transpose());
        for (int r = 0; r < v.rows; ++r)
            for (int c = r; c < v.cols; ++c) theta(v.offset + sym_slot(v.rows, r, c)) = S(r, c);
    } else {
        for (int r = 0; r < v.rows; ++r)
            for (int c = 0; c < v.cols; ++c) theta(v.offset + r * v.cols + c) = value(r, c);
    }
}

// ---------------------------------------------------------------------------
// Block evaluation
// ---------------------------------------------------------------------------

Eigen::MatrixXd LmiBlock::eval(const Catalogue& cat, const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd M = constant;
    for (const Term& t : terms) {
        Eigen::MatrixXd P = t.coeff * (t.left * cat.unpack(t.var, theta) * t.right);
        M += P + P.transpose();
    }
    return M;
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd at_rows(int dim, int ro, const Eigen::MatrixXd& M) {
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(dim, M.cols());
    L.block(ro, 0, M.rows(), M.cols()) = M;
    return L;
}

Eigen::MatrixXd at_cols(int dim, int co, const Eigen::MatrixXd& M) {
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(M.rows(), dim);
    R.block(0, co, M.rows(), M.cols()) = M;
    return R;
}

struct JumpEdge {
    int sub = -1;
    int from = -1;  // flat (mode, rule) node
    int to = -1;
    double mu = 1.0;
    size_t block = 0;
};

struct Assembler {
    const SystemSpec& sys;
    const SynthesisOptions& opt;
    LmiProgram prog;
    std::vector<JumpEdge> edges;

    Assembler(const SystemSpec& s, const SynthesisOptions& o) : sys(s), opt(o) {}

    [[nodiscard]] Eigen::VectorXd lambda(int i, int j) const {
        const ModeSpec& m = sys.subs[static_cast<size_t>(i)].modes[static_cast<size_t>(j)];
        if (opt.lambda_override)
            return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m.rules.size()),
                                             *opt.lambda_override);
        return m.lambda;
    }

    [[nodiscard]] std::vector<int> peers(int i) const {
        std::vector<int> out;
        for (int a = 0; a < sys.count(); ++a)
            if (a != i) out.push_back(a);
        return out;
    }

    [[nodiscard]] Eigen::MatrixXd coupling_f(int i, int j, int s, int alpha) const {
        const RuleSpec& r =
            sys.subs[static_cast<size_t>(i)].modes[static_cast<size_t>(j)].rules[static_cast<size_t>(s)];
        auto it = r.couplings.find(alpha);
        if (it != r.couplings.end()) return it->second.F;
        return Eigen::MatrixXd::Zero(sys.subs[static_cast<size_t>(i)].n,
                                     sys.subs[static_cast<size_t>(alpha)].n);
    }

    [[nodiscard]] Eigen::MatrixXd coupling_bw(int i, int j, int s, int alpha) const {
        const RuleSpec& r =
            sys.subs[static_cast<size_t>(i)].modes[static_cast<size_t>(j)].rules[static_cast<size_t>(s)];
        auto it = r.couplings.find(alpha);
        if (it != r.couplings.end()) return it->second.Bw;
        return Eigen::MatrixXd::Zero(sys.subs[static_cast<size_t>(i)].n,
                                     sys.subs[static_cast<size_t>(alpha)].v);
    }

    void build_catalogue() {
        Catalogue& cat = prog.catalogue;
        for (int i = 0; i < sys.count(); ++i) {
            const SubsystemSpec& sub = sys.subs[static_cast<size_t>(i)];
            int m = static_cast<int>(sub.modes.size());
            auto tag = [&](const char* base, int j, int a, int b = -1) {
                std::ostringstream os;
                os << base << '[' << i + 1 << ',' << j + 1 << ',' << a + 1;
                if (b >= 0) os << ',' << b + 1;
                os << ']';
                return os.str();
            };
            for (int j = 0; j < m; ++j)
                for (int k = 0; k < sub.rule_count(j); ++k)
                    cat.add({VarKind::X1, i, j, k, -1, sub.n, sub.n, true, 0, tag("X1", j, k)});
            for (int j = 0; j < m; ++j)
                for (int k = 0; k < sub.rule_count(j); ++k)
                    cat.add({VarKind::X5, i, j, k, -1, sub.p, sub.p, true, 0, tag("X5", j, k)});
            for (int j = 0; j < m; ++j)
                for (int k = 0; k < sub.rule_count(j); ++k)
                    cat.add({VarKind::X9, i, j, k, -1, sub.u, sub.u, true, 0, tag("X9", j, k)});
            for (int j = 0; j < m; ++j)
                for (int l = 0; l < sub.rule_count(j); ++l)
                    cat.add({VarKind::K, i, j, l, -1, sub.u, sub.p, false, 0, tag("K", j, l)});
            for (int j = 0; j < m; ++j)
                for (int s = 0; s < sub.rule_count(j); ++s)
                    for (int k = 0; k < sub.rule_count(j); ++k)
                        cat.add({VarKind::W, i, j, s, k, sub.n, sub.n, true, 0, tag("W", j, s, k)});
        }
        for (int i = 0; i < sys.count(); ++i)
            for (int alpha : peers(i)) {
                std::ostringstream os;
                os << "tau[" << alpha + 1 << ',' << i + 1 << ']';
                cat.add({VarKind::Tau, i, -1, alpha, -1, 1, 1, true, 0, os.str()});
            }
        if (!opt.zeta2 && sys.count() > 1) {
            for (int i = 0; i < sys.count(); ++i) {
                bool any_channel = sys.subs[static_cast<size_t>(i)].v > 0;
                for (int alpha : peers(i))
                    any_channel = any_channel || sys.subs[static_cast<size_t>(alpha)].v > 0;
                if (!any_channel) continue;
                cat.add({VarKind::Zeta2, i, -1, -1, -1, 1, 1, true, 0,
                         "zeta2[" + std::to_string(i + 1) + "]"});
            }
        }
    }

    void add_sym_diag(LmiBlock& b, int var, int offset, int size, double coeff) {
        b.terms.push_back({var, at_rows(b.dim, offset, Eigen::MatrixXd::Identity(size, size)),
                           at_cols(b.dim, offset, Eigen::MatrixXd::Identity(size, size)),
                           coeff / 2.0});
    }

    void add_scalar_diag(LmiBlock& b, int var, int offset, int size, double coeff) {
        for (int t = 0; t < size; ++t) {
            Eigen::MatrixXd e = Eigen::MatrixXd::Zero(b.dim, 1);
            e(offset + t, 0) = 1.0;
            b.terms.push_back({var, e, e.transpose(), coeff / 2.0});
        }
    }

    void g1() {
        for (const VarInfo& v : prog.catalogue.vars()) {
            if (v.kind != VarKind::X1 && v.kind != VarKind::X5 && v.kind != VarKind::X9) continue;
            LmiBlock b;
            b.family = "G1";
            b.label = "G1[" + v.name + "]";
            b.sense = Sense::GE;
            b.margin = opt.epsilon;
            b.dim = v.rows;
            b.constant = Eigen::MatrixXd::Zero(b.dim, b.dim);
            int id = prog.catalogue.find(v.kind, v.sub, v.mode, v.a, v.b);
            add_sym_diag(b, id, 0, b.dim, 1.0);
            prog.blocks.push_back(std::move(b));
        }
    }

    void g2() {
        for (int i = 0; i < sys.count(); ++i) {
            const SubsystemSpec& sub = sys.subs[static_cast<size_t>(i)];
            for (int j = 0; j < static_cast<int>(sub.modes.size()); ++j) {
                int r = sub.rule_count(j);
                for (int l = 0; l < r; ++l)
                    for (int s = 0; s < r; ++s)
                        for (int k = 0; k < r; ++k) {
                            LmiBlock b;
                            b.family = "G2";
                            std::ostringstream os;
                            os << "G2[i=" << i + 1 << ",j=" << j + 1 << ",l=" << l + 1
                               << ",s=" << s + 1 << ",k=" << k + 1 << "]";
                            b.label = os.str();
                            b.sense = Sense::GE;
                            b.margin = opt.epsilon;
                            b.dim = sub.n;
                            b.constant = Eigen::MatrixXd::Zero(b.dim, b.dim);
                            add_sym_diag(b, prog.catalogue.x1(i, j, l), 0, sub.n, 1.0);
                            add_sym_diag(b, prog.catalogue.w(i, j, s, k), 0, sub.n, 1.0);
                            prog.blocks.push_back(std::move(b));
                        }
            }
        }
    }

    void g3() {
        for (int i = 0; i < sys.count(); ++i) {
            const SubsystemSpec& sub = sys.subs[static_cast<size_t>(i)];
            int m = static_cast<int>(sub.modes.size());
            auto node = [&](int j, int k) {
                int id = 0;
                for (int q = 0; q < j; ++q) id += sub.rule_count(q);
                return id + k;
            };
            for (int j = 0; j < m; ++j)
                for (int k = 0; k < sub.rule_count(j); ++k)
                    for (int j2 = 0; j2 < m; ++j2) {
                        if (j2 == j) continue;
                        for (int k2 = 0; k2 < sub.rule_count(j2); ++k2) {
                            LmiBlock b;
                            b.family = "G3";
                            std::ostringstream os;
                            os << "G3[i=" << i + 1 << ",(j=" << j + 1 << ",k=" << k + 1
                               << ")->(j=" << j2 + 1 << ",k=" << k2 + 1 << ")]";
                            b.label = os.str();
                            b.sense = Sense::LE;
                            b.margin = 0.0;
                            b.dim = 2 * sub.n;
                            b.constant = Eigen::MatrixXd::Zero(b.dim, b.dim);
                            int from = prog.catalogue.x1(i, j, k);
                            int to = prog.catalogue.x1(i, j2, k2);
                            add_sym_diag(b, from, 0, sub.n, -opt.mu_of(i));
                            b.terms.push_back(
                                {from, at_rows(b.dim, 0, Eigen::MatrixXd::Identity(sub.n, sub.n)),
                                 at_cols(b.dim, sub.n, Eigen::MatrixXd::Identity(sub.n, sub.n)),
                                 1.0});
                            add_sym_diag(b, to, sub.n, sub.n, -1.0);
                            edges.push_back({i, node(j, k), node(j2, k2), opt.mu_of(i),
                                             prog.blocks.size()});
                            prog.blocks.push_back(std::move(b));
                        }
                    }
        }
    }

    // Shared Gamma-core emitter; every coefficient is multiplied by `scale`.
    void core_terms(LmiBlock& b, int i, int j, int s, int l, int k, double scale) {
        const SubsystemSpec& sub = sys.subs[static_cast<size_t>(i)];
        const RuleSpec& rule = sub.modes[static_cast<size_t>(j)].rules[static_cast<size_t>(s)];
        const int ox = 0, oy = sub.n, ou = sub.n + sub.p;
        Catalogue& cat = prog.catalogue;
        Eigen::MatrixXd In = Eigen::MatrixXd::Identity(sub.n, sub.n);
        Eigen::MatrixXd Ip = Eigen::MatrixXd::Identity(sub.p, sub.p);
        Eigen::MatrixXd Iu = Eigen::MatrixXd::Identity(sub.u, sub.u);

        b.terms.push_back({cat.x1(i, j, k), at_rows(b.dim, ox, rule.A),
                           at_cols(b.dim, ox, In), scale});

        Eigen::VectorXd lam = lambda(i, j);
        for (int l2 = 0; l2 < sub.rule_count(j); ++l2)
            add_sym_diag(b, cat.x1(i, j, l2), ox, sub.n, -scale * lam(l2));
        add_sym_diag(b, cat.w(i, j, s, k), ox, sub.n, -scale * lam.sum());

        if (opt.layout == Layout::Coherent) {
            b.terms.push_back({cat.x1(i, j, k), at_rows(b.dim, oy, rule.C),
                               at_cols(b.dim, ox, In), scale});
            b.terms.push_back({cat.x9(i, j, k), at_rows(b.dim, ou, Iu),
                               at_cols(b.dim, ox, rule.B.transpose()), scale});
            b.terms.push_back({cat.gain(i, j, l), at_rows(b.dim, ou, Iu),
                               at_cols(b.dim, oy, Ip), scale});
        } else {
            b.terms.push_back({cat.x9(i, j, k), at_rows(b.dim, ou, Iu),
                               at_cols(b.dim, ox, rule.B.transpose()), scale});
            b.terms.push_back({cat.x1(i, j, k), at_rows(b.dim, ou, rule.C),
                               at_cols(b.dim, ox, In), scale});
            b.terms.push_back({cat.gain(i, j, l), at_rows(b.dim, oy, Ip),
                               at_cols(b.dim, ou, Iu), scale});
        }
        add_sym_diag(b, cat.x5(i, j, k), oy, sub.p, -2.0 * scale);
        add_sym_diag(b, cat.x9(i, j, k), ou, sub.u, -2.0 * scale);
    }

    void rank_one_sum(LmiBlock& b, int var, int row, const Eigen::MatrixXd& F) {
        for (Eigen::Index c = 0; c < F.cols(); ++c) {
            Eigen::MatrixXd f = at_rows(b.dim, row, F.col(c));
            b.terms.push_back({var, f, f.transpose(), 0.5});
        }
    }

    void g4stab() {
        for (int i = 0; i < sys.count(); ++i) {
            const SubsystemSpec& sub = sys.subs[static_cast<size_t>(i)];
            std::vector<int> pl = peers(i);
            int core = sub.n + sub.p + sub.u;
            for (int j = 0; j < static_cast<int>(sub.modes.size()); ++j) {
                int r = sub.rule_count(j);
                for (int s = 0; s < r; ++s)
                    for (int l = 0; l < r; ++l)
                        for (int k = 0; k < r; ++k) {
                            LmiBlock b;
                            b.family = "G4s";
                            std::ostringstream os;
                            os << "G4s[i=" << i + 1 << ",j=" << j + 1 << ",s=" << s + 1
                               << ",l=" << l + 1 << ",k=" << k + 1 << "]";
                            b.label = os.str();
                            b.sense = Sense::LE;
                            b.margin = opt.epsilon;
                            b.dim = core + static_cast<int>(pl.size()) * sub.n;
                            b.constant = Eigen::MatrixXd::Zero(b.dim, b.dim);
                            core_terms(b, i, j, s, l, k, 1.0);
                            for (size_t pi = 0; pi < pl.size(); ++pi) {
                                int alpha = pl[pi];
                                rank_one_sum(b, prog.catalogue.tau(i, alpha), 0,
                                             coupling_f(i, j, s, alpha));
                                int col = core + static_cast<int>(pi) * sub.n;
                                b.terms.push_back(
                                    {prog.catalogue.x1(i, j, k),
                                     at_rows(b.dim, 0, Eigen::MatrixXd::Identity(sub.n, sub.n)),
                                     at_cols(b.dim, col,
                                             Eigen::MatrixXd::Identity(sub.n, sub.n)),
                                     1.0});
                                add_scalar_diag(b, prog.catalogue.tau(alpha, i), col, sub.n, -1.0);
                            }
                            prog.blocks.push_back(std::move(b));
                        }
            }
        }
    }

    void g4rob() {
        int peers_total = sys.count() - 1;
        if (peers_total < 1) return;
        double nbar = 1.0 / peers_total;
        for (int i = 0; i < sys.count(); ++i) {
            const SubsystemSpec& sub = sys.subs[static_cast<size_t>(i)];
            int core = sub.n + sub.p + sub.u;
            for (int j = 0; j < static_cast<int>(sub.modes.size()); ++j) {
                int r = sub.rule_count(j);
                for (int alpha : peers(i))
                    for (int s = 0; s < r; ++s)
                        for (int l = 0; l < r; ++l)
                            for (int k = 0; k < r; ++k) {
                                const SubsystemSpec& peer = sys.subs[static_cast<size_t>(alpha)];
                                int wdim = sub.v + peer.v;
                                LmiBlock b;
                                b.family = "G4r";
                                std::ostringstream os;
                                os << "G4r[i=" << i + 1 << ",j=" << j + 1 << ",a=" << alpha + 1
                                   << ",s=" << s + 1 << ",l=" << l + 1 << ",k=" << k + 1 << "]";
                                b.label = os.str();
                                b.sense = Sense::LE;
                                b.margin = opt.epsilon;
                                const int otau = core, oq = core + sub.n,
                                          ow = core + sub.n + sub.p;
                                b.dim = ow + wdim;
                                b.constant = Eigen::MatrixXd::Zero(b.dim, b.dim);
                                core_terms(b, i, j, s, l, k, nbar);
                                rank_one_sum(b, prog.catalogue.tau(i, alpha), 0,
                                             coupling_f(i, j, s, alpha));
                                b.terms.push_back(
                                    {prog.catalogue.x1(i, j, k),
                                     at_rows(b.dim, 0, Eigen::MatrixXd::Identity(sub.n, sub.n)),
                                     at_cols(b.dim, otau,
                                             Eigen::MatrixXd::Identity(sub.n, sub.n)),
                                     1.0});
                                add_scalar_diag(b, prog.catalogue.tau(alpha, i), otau, sub.n,
                                                -1.0);
                                b.terms.push_back(
                                    {prog.catalogue.x5(i, j, k),
                                     at_rows(b.dim, oq, Eigen::MatrixXd::Identity(sub.p, sub.p)),
                                     at_cols(b.dim, sub.n,
                                             Eigen::MatrixXd::Identity(sub.p, sub.p)),
                                     std::sqrt(nbar)});
                                b.constant.block(oq, oq, sub.p, sub.p) =
                                    -Eigen::MatrixXd::Identity(sub.p, sub.p);
                                if (wdim > 0) {
                                    const RuleSpec& rule =
                                        sub.modes[static_cast<size_t>(j)].rules[static_cast<size_t>(s)];
                                    Eigen::MatrixXd bt(sub.n, wdim);
                                    bt.leftCols(sub.v) = nbar * rule.Bw;
                                    bt.rightCols(peer.v) = coupling_bw(i, j, s, alpha);
                                    b.constant.block(ow, 0, wdim, sub.n) = bt.transpose();
                                    b.constant.block(0, ow, sub.n, wdim) = bt;
                                    Eigen::VectorXd xi(wdim);
                                    xi.head(sub.v).setConstant(nbar);
                                    xi.tail(peer.v).setOnes();
                                    if (opt.zeta2) {
                                        double z2 = opt.zeta2_of(i);
                                        for (int t = 0; t < wdim; ++t)
                                            b.constant(ow + t, ow + t) -= z2 * xi(t);
                                    } else {
                                        int zv = prog.catalogue.zeta2(i);
                                        if (zv >= 0)
                                            for (int t = 0; t < wdim; ++t)
                                                add_scalar_diag(b, zv, ow + t, 1, -xi(t));
                                    }
                                }
                                prog.blocks.push_back(std::move(b));
                            }
            }
        }
    }

    // Jump-graph analysis. Each G3 block forces X1[to] >= (1/mu) X1[from];
    // chained around a cycle with log-gain sum > 0 this contradicts G1, and
    // with sum exactly 0 it forces scaled equality along the cycle.
    void analyze_ties() {
        constexpr double tol = 1e-9;
        for (int i = 0; i < sys.count(); ++i) {
            const SubsystemSpec& sub = sys.subs[static_cast<size_t>(i)];
            int nodes = 0;
            for (int j = 0; j < static_cast<int>(sub.modes.size()); ++j)
                nodes += sub.rule_count(j);
            if (nodes == 0) continue;
            const double ninf = -std::numeric_limits<double>::infinity();
            std::vector<std::vector<double>> d(static_cast<size_t>(nodes),
                                               std::vector<double>(static_cast<size_t>(nodes), ninf));
            for (int v = 0; v < nodes; ++v) d[static_cast<size_t>(v)][static_cast<size_t>(v)] = 0.0;
            for (const JumpEdge& e : edges) {
                if (e.sub != i) continue;
                double w = -std::log(e.mu);
                auto& slot = d[static_cast<size_t>(e.from)][static_cast<size_t>(e.to)];
                slot = std::max(slot, w);
            }
            for (int m = 0; m < nodes; ++m)
                for (int a = 0; a < nodes; ++a)
                    for (int bq = 0; bq < nodes; ++bq) {
                        double via = d[static_cast<size_t>(a)][static_cast<size_t>(m)] +
                                     d[static_cast<size_t>(m)][static_cast<size_t>(bq)];
                        if (via > d[static_cast<size_t>(a)][static_cast<size_t>(bq)])
                            d[static_cast<size_t>(a)][static_cast<size_t>(bq)] = via;
                    }
            for (int v = 0; v < nodes; ++v)
                if (d[static_cast<size_t>(v)][static_cast<size_t>(v)] > tol)
                    throw Error(ErrorKind::Infeasible,
                                "subsystem " + std::to_string(i + 1) +
                                    ": the jump conditions chain into a growth cycle, so no"
                                    " positive definite X1 family can satisfy them (raise mu)");

            // node -> flat var id, in catalogue order
            std::vector<int> var_of(static_cast<size_t>(nodes));
            {
                int id = 0;
                for (int j = 0; j < static_cast<int>(sub.modes.size()); ++j)
                    for (int k = 0; k < sub.rule_count(j); ++k)
                        var_of[static_cast<size_t>(id++)] = prog.catalogue.x1(i, j, k);
            }
            std::vector<int> cls(static_cast<size_t>(nodes), -1);
            for (int v = 0; v < nodes; ++v) {
                if (cls[static_cast<size_t>(v)] >= 0) continue;
                cls[static_cast<size_t>(v)] = v;
                for (int w2 = v + 1; w2 < nodes; ++w2) {
                    double fwd = d[static_cast<size_t>(v)][static_cast<size_t>(w2)];
                    double bwd = d[static_cast<size_t>(w2)][static_cast<size_t>(v)];
                    if (std::isfinite(fwd) && std::isfinite(bwd) && std::abs(fwd + bwd) <= tol)
                        cls[static_cast<size_t>(w2)] = v;
                }
            }
            for (int v = 0; v < nodes; ++v) {
                int rep = cls[static_cast<size_t>(v)];
                if (rep == v) continue;
                prog.ties.push_back({var_of[static_cast<size_t>(v)],
                                     var_of[static_cast<size_t>(rep)],
                                     std::exp(d[static_cast<size_t>(rep)][static_cast<size_t>(v)])});
            }
            for (const JumpEdge& e : edges) {
                if (e.sub != i) continue;
                if (cls[static_cast<size_t>(e.from)] == cls[static_cast<size_t>(e.to)])
                    prog.dropped.push_back(e.block);
            }
        }
        std::sort(prog.dropped.begin(), prog.dropped.end());
    }

    LmiProgram run() {
        if (opt.epsilon <= 0.0) throw Error(ErrorKind::Validation, "epsilon must be positive");
        if (!opt.mu.empty() && opt.mu.size() != 1 &&
            opt.mu.size() != static_cast<size_t>(sys.count()))
            throw Error(ErrorKind::Validation,
                        "mu needs one value or one per subsystem (" +
                            std::to_string(sys.count()) + ")");
        for (double m : opt.mu)
            if (m <= 0.0) throw Error(ErrorKind::Validation, "mu must be positive");
        if (opt.zeta2) {
            if (opt.zeta2->empty() ||
                (opt.zeta2->size() != 1 &&
                 opt.zeta2->size() != static_cast<size_t>(sys.count())))
                throw Error(ErrorKind::Validation,
                            "zeta2 needs one value or one per subsystem (" +
                                std::to_string(sys.count()) + ")");
            for (double z : *opt.zeta2)
                if (z <= 0.0) throw Error(ErrorKind::Validation, "zeta2 must be positive");
        }
        if (opt.layout == Layout::PaperLiteral)
            for (int i = 0; i < sys.count(); ++i)
                if (sys.subs[static_cast<size_t>(i)].p != sys.subs[static_cast<size_t>(i)].u)
                    throw Error(ErrorKind::Validation,
                                "subsystem " + std::to_string(i + 1) +
                                    ": the literal layout feeds the output block through the"
                                    " input mixing block and needs output_dim == input_dim");
        build_catalogue();
        g1();
        g2();
        g3();
        g4stab();
        g4rob();
        prog.objective = Eigen::VectorXd::Zero(prog.catalogue.scalar_count());
        for (const VarInfo& v : prog.catalogue.vars())
            if (v.kind == VarKind::Zeta2) {
                prog.objective(v.offset) = 1.0;
                prog.minimize = true;
            }
        analyze_ties();
        return std::move(prog);
    }
};

}  // namespace

LmiProgram assemble_program(const SystemSpec& sys, const SynthesisOptions& opt) {
    Assembler a(sys, opt);
    return a.run();
}

// ---------------------------------------------------------------------------
// Residual certification
// ---------------------------------------------------------------------------

std::vector<Residual> residual_check(const LmiProgram& prog, const Eigen::VectorXd& theta,
                                     double tol) {
    std::vector<Residual> out;
    out.reserve(prog.blocks.size());
    for (const LmiBlock& b : prog.blocks) {
        Eigen::MatrixXd M = b.eval(prog.catalogue, theta);
        if (b.sense == Sense::LE) M = -M;
        Residual r;
        r.label = b.label;
        r.family = b.family;
        r.margin = b.margin;
        r.min_eig = spectra::min_eigenvalue(M);
        r.pass = r.min_eig >= b.margin - tol;
        out.push_back(std::move(r));
    }
    return out;
}

std::string dump_blocks(const LmiProgram& prog) {
    std::ostringstream os;
    os << "scalars " << prog.catalogue.scalar_count() << "\n";
    os << "variables " << prog.catalogue.vars().size() << "\n";
    for (const VarInfo& v : prog.catalogue.vars())
        os << "  " << v.name << (v.symmetric ? " sym " : " full ") << v.rows << "x" << v.cols
           << " offset " << v.offset << "\n";
    os << "ties " << prog.ties.size() << "\n";
    for (const TieSpec& t : prog.ties)
        os << "  " << prog.catalogue.var(t.var).name << " = " << t.scale << " * "
           << prog.catalogue.var(t.rep).name << "\n";
    os << "blocks " << prog.blocks.size() << "\n";
    for (size_t b = 0; b < prog.blocks.size(); ++b) {
        const LmiBlock& blk = prog.blocks[b];
        bool dropped =
            std::binary_search(prog.dropped.begin(), prog.dropped.end(), b);
        os << "  [" << b << "] " << blk.label << " dim " << blk.dim << " "
           << (blk.sense == Sense::GE ? ">=" : "<=") << " margin " << blk.margin << " terms "
           << blk.terms.size() << (dropped ? " (implied by ties)" : "") << "\n";
        for (const Term& t : blk.terms)
            os << "      " << prog.catalogue.var(t.var).name << " coeff " << t.coeff << "\n";
    }
    return os.str();
}

}  // namespace switsyn::lmi
