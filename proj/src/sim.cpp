#include "switsyn/sim.hpp"

#include "switsyn/doc.hpp"
#include "switsyn/error.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace switsyn::sim {

namespace {

// Gaussian draws from the raw engine stream, kept independent of any
// library distribution so artifacts match across standard libraries.
class Gaussian {
public:
    explicit Gaussian(std::uint64_t seed) : rng_(seed) {}

    double next() {
        if (have_) {
            have_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = unit();
        } while (u1 <= 0.0);
        double u2 = unit();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_ = true;
        return r * std::cos(a);
    }

private:
    double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

    std::mt19937_64 rng_;
    bool have_ = false;
    double spare_ = 0.0;
};

struct Blend {
    Eigen::MatrixXd A, B, Bw, C;
    std::vector<Eigen::MatrixXd> F, Bwc;  // indexed by the peer list position
};

Blend blend_matrices(const SystemSpec& sys, int i, int mode, const Eigen::VectorXd& h) {
    const SubsystemSpec& sub = sys.subs[static_cast<size_t>(i)];
    const ModeSpec& m = sub.modes[static_cast<size_t>(mode)];
    Blend out;
    out.A = Eigen::MatrixXd::Zero(sub.n, sub.n);
    out.B = Eigen::MatrixXd::Zero(sub.n, sub.u);
    out.Bw = Eigen::MatrixXd::Zero(sub.n, sub.v);
    out.C = Eigen::MatrixXd::Zero(sub.p, sub.n);
    for (int a = 0; a < sys.count(); ++a) {
        if (a == i) continue;
        out.F.push_back(Eigen::MatrixXd::Zero(sub.n, sys.subs[static_cast<size_t>(a)].n));
        out.Bwc.push_back(Eigen::MatrixXd::Zero(sub.n, sys.subs[static_cast<size_t>(a)].v));
    }
    for (size_t s = 0; s < m.rules.size(); ++s) {
        double hs = h(static_cast<Eigen::Index>(s));
        const RuleSpec& r = m.rules[s];
        out.A += hs * r.A;
        out.B += hs * r.B;
        if (sub.v > 0) out.Bw += hs * r.Bw;
        out.C += hs * r.C;
        size_t pos = 0;
        for (int a = 0; a < sys.count(); ++a) {
            if (a == i) continue;
            auto it = r.couplings.find(a);
            if (it != r.couplings.end()) {
                out.F[pos] += hs * it->second.F;
                if (it->second.Bw.cols() > 0) out.Bwc[pos] += hs * it->second.Bw;
            }
            ++pos;
        }
    }
    return out;
}

}  // namespace

double lyapunov_value(const ctrl::ControllerSet& cs, const SystemSpec& sys, int sub, int mode,
                      const Eigen::VectorXd& x) {
    const SubsystemSpec& ss = sys.subs.at(static_cast<size_t>(sub));
    Eigen::VectorXd h = membership_eval(ss, mode, x);
    const ctrl::ModeController& mc =
        cs.subs.at(static_cast<size_t>(sub)).modes.at(static_cast<size_t>(mode));
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(ss.n, ss.n);
    for (size_t k = 0; k < mc.lyap.size(); ++k) X += h(static_cast<Eigen::Index>(k)) * mc.lyap[k];
    Eigen::LLT<Eigen::MatrixXd> llt(X);
    if (llt.info() != Eigen::Success)
        throw Error(ErrorKind::Solver, "blended Lyapunov matrix is not positive definite");
    return x.dot(llt.solve(x));
}

namespace {

Trajectory simulate_impl(const SystemSpec& sys, const ctrl::ControllerSet* cs,
                         const SimOptions& opt) {
    if (opt.dt <= 0.0) throw Error(ErrorKind::Validation, "dt must be positive");
    if (opt.t_end < 0.0) throw Error(ErrorKind::Validation, "t_end must be nonnegative");
    if (opt.stride < 1) throw Error(ErrorKind::Validation, "stride must be at least 1");
    if (cs) ctrl::check_compatible(*cs, sys);

    const int n_subs = sys.count();
    const long long steps = std::llround(opt.t_end / opt.dt);

    std::vector<Eigen::VectorXd> x(static_cast<size_t>(n_subs));
    std::vector<int> mode(static_cast<size_t>(n_subs));
    std::vector<double> entry(static_cast<size_t>(n_subs), 0.0);
    for (int i = 0; i < n_subs; ++i) {
        const SubsystemSpec& sub = sys.subs[static_cast<size_t>(i)];
        x[static_cast<size_t>(i)] = sub.x0;
        mode[static_cast<size_t>(i)] = initial_mode(sub.switching);
        if (const auto* hyst = std::get_if<HysteresisSwitching>(&sub.switching))
            entry[static_cast<size_t>(i)] =
                frontier_value(*hyst, mode[static_cast<size_t>(i)], sub.x0);
    }

    Gaussian noise(opt.seed);
    std::vector<Eigen::VectorXd> w(static_cast<size_t>(n_subs));

    Trajectory traj;
    traj.options = opt;
    traj.subs.resize(static_cast<size_t>(n_subs));

    auto guard = [&](const std::vector<Eigen::VectorXd>& state, double t) {
        double norm2 = 0.0;
        for (const Eigen::VectorXd& xi : state) norm2 += xi.squaredNorm();
        if (!std::isfinite(norm2) || std::sqrt(norm2) > opt.divergence_limit)
            throw Error(ErrorKind::Divergence,
                        "state norm exceeded " + doc::format_number(opt.divergence_limit) +
                            " at t = " + doc::format_number(t));
    };

    // Joint vector field under frozen modes and disturbances.
    auto deriv = [&](const std::vector<Eigen::VectorXd>& state, double t)
        -> std::vector<Eigen::VectorXd> {
        guard(state, t);
        std::vector<Eigen::VectorXd> dx(static_cast<size_t>(n_subs));
        for (int i = 0; i < n_subs; ++i) {
            const SubsystemSpec& sub = sys.subs[static_cast<size_t>(i)];
            const Eigen::VectorXd& xi = state[static_cast<size_t>(i)];
            Eigen::VectorXd h = membership_eval(sub, mode[static_cast<size_t>(i)], xi);
            Blend bl = blend_matrices(sys, i, mode[static_cast<size_t>(i)], h);
            Eigen::VectorXd y = bl.C * xi;
            Eigen::VectorXd u =
                cs ? ctrl::control_output(*cs, i, mode[static_cast<size_t>(i)], h, y)
                   : Eigen::VectorXd::Zero(sub.u);
            Eigen::VectorXd d = bl.A * xi + bl.B * u;
            if (sub.v > 0) d += bl.Bw * w[static_cast<size_t>(i)];
            size_t pos = 0;
            for (int a = 0; a < n_subs; ++a) {
                if (a == i) continue;
                d += bl.F[pos] * state[static_cast<size_t>(a)];
                if (sys.subs[static_cast<size_t>(a)].v > 0)
                    d += bl.Bwc[pos] * w[static_cast<size_t>(a)];
                ++pos;
            }
            dx[static_cast<size_t>(i)] = d;
        }
        return dx;
    };

    auto record = [&](double t) {
        traj.time.push_back(t);
        for (int i = 0; i < n_subs; ++i) {
            const SubsystemSpec& sub = sys.subs[static_cast<size_t>(i)];
            SubTrace& tr = traj.subs[static_cast<size_t>(i)];
            const Eigen::VectorXd& xi = x[static_cast<size_t>(i)];
            int j = mode[static_cast<size_t>(i)];
            Eigen::VectorXd h = membership_eval(sub, j, xi);
            Blend bl = blend_matrices(sys, i, j, h);
            Eigen::VectorXd y = bl.C * xi;
            tr.mode.push_back(j);
            tr.x.push_back(xi);
            tr.y.push_back(y);
            tr.u.push_back(cs ? ctrl::control_output(*cs, i, j, h, y)
                              : Eigen::VectorXd::Zero(sub.u));
            tr.w.push_back(w[static_cast<size_t>(i)]);
            tr.v.push_back(cs ? lyapunov_value(*cs, sys, i, j, xi) : 0.0);
        }
    };

    for (long long k = 0; k <= steps; ++k) {
        double t = static_cast<double>(k) * opt.dt;
        bool last = k == steps;

        // Disturbance held over [t_k, t_{k+1}); zero after the horizon.
        for (int i = 0; i < n_subs; ++i) {
            int v = sys.subs[static_cast<size_t>(i)].v;
            Eigen::VectorXd& wi = w[static_cast<size_t>(i)];
            wi = Eigen::VectorXd::Zero(v);
            if (!last && opt.sigma > 0.0)
                for (int c = 0; c < v; ++c) wi(c) = opt.sigma * noise.next();
        }

        if (k % opt.stride == 0 || last) record(t);
        if (last) break;

        const double dt = opt.dt;
        std::vector<Eigen::VectorXd> k1 = deriv(x, t);
        std::vector<Eigen::VectorXd> s2(x);
        for (size_t i = 0; i < s2.size(); ++i) s2[i] += 0.5 * dt * k1[i];
        std::vector<Eigen::VectorXd> k2 = deriv(s2, t + 0.5 * dt);
        std::vector<Eigen::VectorXd> s3(x);
        for (size_t i = 0; i < s3.size(); ++i) s3[i] += 0.5 * dt * k2[i];
        std::vector<Eigen::VectorXd> k3 = deriv(s3, t + 0.5 * dt);
        std::vector<Eigen::VectorXd> s4(x);
        for (size_t i = 0; i < s4.size(); ++i) s4[i] += dt * k3[i];
        std::vector<Eigen::VectorXd> k4 = deriv(s4, t + dt);
        for (size_t i = 0; i < x.size(); ++i)
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

        double t_next = static_cast<double>(k + 1) * opt.dt;
        guard(x, t_next);

        for (int i = 0; i < n_subs; ++i) {
            const SubsystemSpec& sub = sys.subs[static_cast<size_t>(i)];
            int cur = mode[static_cast<size_t>(i)];
            int nxt = switching_eval(sub.switching, t_next, x[static_cast<size_t>(i)], cur,
                                     entry[static_cast<size_t>(i)]);
            if (nxt != cur) {
                mode[static_cast<size_t>(i)] = nxt;
                if (const auto* hyst = std::get_if<HysteresisSwitching>(&sub.switching))
                    entry[static_cast<size_t>(i)] =
                        frontier_value(*hyst, nxt, x[static_cast<size_t>(i)]);
            }
        }
    }
    return traj;
}

}  // namespace

Trajectory simulate(const SystemSpec& sys, const ctrl::ControllerSet& cs, const SimOptions& opt) {
    return simulate_impl(sys, &cs, opt);
}

Trajectory simulate(const SystemSpec& sys, const SimOptions& opt) {
    return simulate_impl(sys, nullptr, opt);
}

// ---------------------------------------------------------------------------
// Export and metrics
// ---------------------------------------------------------------------------

namespace {

void stream_csv(const Trajectory& traj, std::ostream& os) {
    os << "t";
    for (size_t i = 0; i < traj.subs.size(); ++i) {
        const SubTrace& tr = traj.subs[i];
        std::string tag = std::to_string(i + 1);
        os << ",mode" << tag;
        auto cols = [&](const char* base, size_t dim) {
            for (size_t c = 1; c <= dim; ++c) os << ',' << base << tag << '_' << c;
        };
        cols("x", tr.x.empty() ? 0 : static_cast<size_t>(tr.x[0].size()));
        cols("y", tr.y.empty() ? 0 : static_cast<size_t>(tr.y[0].size()));
        cols("u", tr.u.empty() ? 0 : static_cast<size_t>(tr.u[0].size()));
        cols("w", tr.w.empty() ? 0 : static_cast<size_t>(tr.w[0].size()));
        os << ",v" << tag;
    }
    os << "\n";
    for (size_t s = 0; s < traj.samples(); ++s) {
        os << doc::format_number(traj.time[s]);
        for (const SubTrace& tr : traj.subs) {
            os << ',' << tr.mode[s] + 1;
            auto vec = [&](const Eigen::VectorXd& v) {
                for (Eigen::Index c = 0; c < v.size(); ++c)
                    os << ',' << doc::format_number(v(c));
            };
            vec(tr.x[s]);
            vec(tr.y[s]);
            vec(tr.u[s]);
            vec(tr.w[s]);
            os << ',' << doc::format_number(tr.v[s]);
        }
        os << "\n";
    }
}

}  // namespace

std::string to_csv(const Trajectory& traj) {
    std::ostringstream os;
    stream_csv(traj, os);
    return os.str();
}

void write_csv(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Validation, "cannot write '" + path + "'");
    stream_csv(traj, out);
}

HinfMetrics hinf_metrics(const Trajectory& traj) {
    const size_t ns = traj.subs.size();
    HinfMetrics m;
    m.state_energy = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ns));
    m.output_energy = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ns));
    m.state_ratio = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ns));
    m.output_ratio = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ns));

    for (size_t i = 0; i < ns; ++i)
        if (!traj.subs[i].x.empty() && traj.subs[i].x[0].squaredNorm() > 0.0)
            m.nonzero_initial_state = true;

    if (traj.samples() < 2) return m;
    auto trapezoid = [&](auto&& values) {
        double acc = 0.0;
        for (size_t s = 0; s + 1 < traj.samples(); ++s)
            acc += 0.5 * (traj.time[s + 1] - traj.time[s]) * (values(s) + values(s + 1));
        return acc;
    };

    for (size_t i = 0; i < ns; ++i) {
        const SubTrace& tr = traj.subs[i];
        m.state_energy(static_cast<Eigen::Index>(i)) =
            trapezoid([&](size_t s) { return tr.x[s].squaredNorm(); });
        m.output_energy(static_cast<Eigen::Index>(i)) =
            trapezoid([&](size_t s) { return tr.y[s].squaredNorm(); });
    }
    m.disturbance_energy = trapezoid([&](size_t s) {
        double e = 0.0;
        for (const SubTrace& tr : traj.subs) e += tr.w[s].squaredNorm();
        return e;
    });

    if (m.disturbance_energy > 0.0) {
        for (size_t i = 0; i < ns; ++i) {
            m.state_ratio(static_cast<Eigen::Index>(i)) =
                m.state_energy(static_cast<Eigen::Index>(i)) / m.disturbance_energy;
            m.output_ratio(static_cast<Eigen::Index>(i)) =
                m.output_energy(static_cast<Eigen::Index>(i)) / m.disturbance_energy;
        }
    } else {
        m.zero_disturbance = true;
    }
    return m;
}

}  // namespace switsyn::sim
