#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "switsyn/error.hpp"
#include "switsyn/lmi.hpp"
#include "switsyn/spectra.hpp"

#include <cmath>
#include <map>
#include <random>
#include <string>

using namespace switsyn;

namespace {

MembershipFn constant_one() { return MembershipFn::parse("1", "t"); }

SwitchingRule single_mode_schedule() {
    TimeSchedule s;
    s.entries = {{0.0, 0}};
    return s;
}

SwitchingRule two_mode_schedule() {
    TimeSchedule s;
    s.entries = {{0.0, 0}, {5.0, 1}};
    return s;
}

Eigen::MatrixXd scalar(double v) {
    Eigen::MatrixXd m(1, 1);
    m << v;
    return m;
}

// Two coupled one-dimensional subsystems, one mode, one rule. Every variable
// is a scalar, so assembled blocks can be checked entry by entry.
SystemSpec tiny_pair() {
    SystemSpec sys;
    sys.name = "tiny";
    for (int i = 0; i < 2; ++i) {
        SubsystemSpec sub;
        sub.n = sub.p = sub.u = sub.v = 1;
        sub.x0 = Eigen::VectorXd::Zero(1);
        RuleSpec rule;
        if (i == 0) {
            rule.A = scalar(-1.0);
            rule.B = scalar(1.0);
            rule.C = scalar(1.0);
            rule.Bw = scalar(0.1);
            rule.couplings[1] = {scalar(0.3), scalar(0.2)};
        } else {
            rule.A = scalar(-2.0);
            rule.B = scalar(0.5);
            rule.C = scalar(2.0);
            rule.Bw = scalar(0.15);
            rule.couplings[0] = {scalar(0.7), scalar(0.4)};
        }
        ModeSpec mode;
        mode.rules.push_back(rule);
        mode.memberships.push_back(constant_one());
        mode.lambda = Eigen::VectorXd::Constant(1, -1.0);
        sub.modes.push_back(mode);
        sub.switching = single_mode_schedule();
        sys.subs.push_back(sub);
    }
    return sys;
}

// Shapes of the bundled two-subsystem example: dims (2,2,2,2) and (3,3,3,2),
// two modes with two rules each, full cross coupling. Values are random.
SystemSpec paper_shaped(unsigned seed = 1) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.5);
    auto mat = [&](int r, int c) {
        Eigen::MatrixXd m(r, c);
        for (int a = 0; a < r; ++a)
            for (int b = 0; b < c; ++b) m(a, b) = g(rng);
        return m;
    };

    SystemSpec sys;
    sys.name = "shaped";
    int dims[2][4] = {{2, 2, 2, 2}, {3, 3, 3, 2}};
    for (int i = 0; i < 2; ++i) {
        SubsystemSpec sub;
        sub.n = dims[i][0];
        sub.p = dims[i][1];
        sub.u = dims[i][2];
        sub.v = dims[i][3];
        sub.x0 = Eigen::VectorXd::Zero(sub.n);
        int peer = 1 - i;
        int peer_n = dims[peer][0];
        int peer_v = dims[peer][3];
        for (int j = 0; j < 2; ++j) {
            ModeSpec mode;
            for (int s = 0; s < 2; ++s) {
                RuleSpec rule;
                rule.A = mat(sub.n, sub.n) - 3.0 * Eigen::MatrixXd::Identity(sub.n, sub.n);
                rule.B = mat(sub.n, sub.u);
                rule.C = mat(sub.p, sub.n);
                rule.Bw = mat(sub.n, sub.v);
                rule.couplings[peer] = {0.05 * mat(sub.n, peer_n), 0.05 * mat(sub.n, peer_v)};
                mode.rules.push_back(rule);
            }
            mode.memberships.push_back(MembershipFn::parse("sin(x[1])^2", "t"));
            mode.memberships.push_back(MembershipFn::parse("one_minus(1)", "t"));
            mode.lambda = Eigen::VectorXd::Constant(2, -6.0);
            sub.modes.push_back(mode);
        }
        HysteresisSwitching hyst;
        hyst.frontiers.resize(2);
        for (Frontier& f : hyst.frontiers) {
            f.c = Eigen::VectorXd::Ones(sub.n);
            f.d = 0.0;
        }
        hyst.initial_mode = 0;
        sub.switching = hyst;
        sys.subs.push_back(sub);
    }
    return sys;
}

const lmi::LmiBlock& find_block(const lmi::LmiProgram& prog, const std::string& label) {
    for (const lmi::LmiBlock& b : prog.blocks)
        if (b.label == label) return b;
    FAIL(("no block labelled " + label).c_str());
    return prog.blocks.front();
}

std::map<std::string, int> family_counts(const lmi::LmiProgram& prog) {
    std::map<std::string, int> c;
    for (const lmi::LmiBlock& b : prog.blocks) c[b.family]++;
    return c;
}

}  // namespace

TEST_CASE("paper-shaped program has the expected block and scalar counts") {
    SystemSpec sys = paper_shaped();
    lmi::SynthesisOptions opt;
    opt.zeta2 = std::vector<double>{1.7, 1.5};

    lmi::LmiProgram prog = lmi::assemble_program(sys, opt);
    auto fam = family_counts(prog);
    CHECK(fam["G1"] == 24);
    CHECK(fam["G2"] == 32);
    CHECK(fam["G3"] == 16);
    CHECK(fam["G4s"] == 32);
    CHECK(fam["G4r"] == 32);
    CHECK(prog.blocks.size() == 136);
    CHECK(prog.catalogue.scalar_count() == 234);

    for (const lmi::LmiBlock& b : prog.blocks) {
        if (b.family == "G4s") CHECK((b.dim == 8 || b.dim == 12));
        if (b.family == "G4r") CHECK((b.dim == 14 || b.dim == 19));
        if (b.family == "G3") CHECK((b.dim == 4 || b.dim == 6));
    }

    // mu = 1 ties every X1 of a subsystem into one class and drops the jump
    // blocks; the catalogue itself is unchanged.
    CHECK(prog.ties.size() == 6);
    CHECK(prog.dropped.size() == 16);
    for (const lmi::TieSpec& t : prog.ties) CHECK(t.scale == doctest::Approx(1.0));

    lmi::SynthesisOptions loose = opt;
    loose.mu = {2.0};
    lmi::LmiProgram prog2 = lmi::assemble_program(sys, loose);
    CHECK(prog2.ties.empty());
    CHECK(prog2.dropped.empty());

    lmi::SynthesisOptions minimize;
    lmi::LmiProgram prog3 = lmi::assemble_program(sys, minimize);
    CHECK(prog3.catalogue.scalar_count() == 236);
    CHECK(prog3.minimize);
    CHECK(prog3.objective.size() == 236);
    CHECK(prog3.objective.sum() == doctest::Approx(2.0));  // one slot per level
}

TEST_CASE("assembled blocks are symmetric and affine in theta") {
    SystemSpec sys = paper_shaped(3);
    lmi::SynthesisOptions opt;
    opt.mu = {2.0};  // keep every block live
    lmi::LmiProgram prog = lmi::assemble_program(sys, opt);

    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 1.0);
    int N = prog.catalogue.scalar_count();
    Eigen::VectorXd a(N), b(N);
    for (int t = 0; t < N; ++t) {
        a(t) = g(rng);
        b(t) = g(rng);
    }
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(N);

    for (const lmi::LmiBlock& blk : prog.blocks) {
        Eigen::MatrixXd Ma = blk.eval(prog.catalogue, a);
        CHECK((Ma - Ma.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + Ma.norm()));
        Eigen::MatrixXd gap = blk.eval(prog.catalogue, a + b) - Ma -
                              blk.eval(prog.catalogue, b) + blk.eval(prog.catalogue, zero);
        CHECK(gap.cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + Ma.norm()));
    }
}

TEST_CASE("tiny pair: every assembled entry matches the hand construction") {
    SystemSpec sys = tiny_pair();
    lmi::SynthesisOptions opt;
    opt.epsilon = 1e-6;
    opt.zeta2 = std::vector<double>{2.0, 3.0};
    lmi::LmiProgram prog = lmi::assemble_program(sys, opt);

    auto fam = family_counts(prog);
    CHECK(fam["G1"] == 6);
    CHECK(fam["G2"] == 2);
    CHECK(fam["G3"] == 0);
    CHECK(fam["G4s"] == 2);
    CHECK(fam["G4r"] == 2);
    REQUIRE(prog.catalogue.scalar_count() == 12);

    const lmi::Catalogue& cat = prog.catalogue;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(12);
    cat.pack(cat.x1(0, 0, 0), scalar(2.0), theta);
    cat.pack(cat.x5(0, 0, 0), scalar(3.0), theta);
    cat.pack(cat.x9(0, 0, 0), scalar(5.0), theta);
    cat.pack(cat.gain(0, 0, 0), scalar(7.0), theta);
    cat.pack(cat.w(0, 0, 0, 0), scalar(11.0), theta);
    cat.pack(cat.x1(1, 0, 0), scalar(2.5), theta);
    cat.pack(cat.x5(1, 0, 0), scalar(3.5), theta);
    cat.pack(cat.x9(1, 0, 0), scalar(5.5), theta);
    cat.pack(cat.gain(1, 0, 0), scalar(7.5), theta);
    cat.pack(cat.w(1, 0, 0, 0), scalar(11.5), theta);
    // tau(i, alpha) is the multiplier subsystem i applies to its own coupling
    // from alpha; it shows up once linearly there and once on alpha's Schur
    // diagonal.
    theta(cat.var(cat.tau(0, 1)).offset) = 17.0;  // sub 1's own multiplier
    theta(cat.var(cat.tau(1, 0)).offset) = 13.0;  // sub 2's own multiplier

    // G1 and G2 evaluate to the packed values.
    CHECK(find_block(prog, "G1[X1[1,1,1]]").eval(cat, theta)(0, 0) == doctest::Approx(2.0));
    CHECK(find_block(prog, "G1[X9[2,1,1]]").eval(cat, theta)(0, 0) == doctest::Approx(5.5));
    CHECK(find_block(prog, "G2[i=1,j=1,l=1,s=1,k=1]").eval(cat, theta)(0, 0) ==
          doctest::Approx(13.0));

    // Switched-stabilization block of subsystem 1, lambda = -1 throughout:
    //   core (x,x) = 2 A X1 + (X1 + W) + tau_own F^2
    //   rows/cols: x, y, u, peer column.
    {
        Eigen::MatrixXd got = find_block(prog, "G4s[i=1,j=1,s=1,l=1,k=1]").eval(cat, theta);
        REQUIRE(got.rows() == 4);
        Eigen::MatrixXd want = Eigen::MatrixXd::Zero(4, 4);
        want(0, 0) = 2.0 * (-1.0) * 2.0 + (2.0 + 11.0) + 17.0 * 0.3 * 0.3;
        want(1, 0) = 1.0 * 2.0;         // C X1
        want(1, 1) = -2.0 * 3.0;        // -2 X5
        want(2, 0) = 5.0 * 1.0;         // X9 B'
        want(2, 1) = 7.0;               // K
        want(2, 2) = -2.0 * 5.0;        // -2 X9
        want(3, 0) = 2.0;               // X1 against the peer budget
        want(3, 3) = -13.0;             // peer's multiplier
        Eigen::MatrixXd sym = want + want.transpose() -
                              Eigen::MatrixXd(want.diagonal().asDiagonal());
        CHECK((got - sym).cwiseAbs().maxCoeff() <= 1e-12);
    }
    {
        Eigen::MatrixXd got = find_block(prog, "G4s[i=2,j=1,s=1,l=1,k=1]").eval(cat, theta);
        Eigen::MatrixXd want = Eigen::MatrixXd::Zero(4, 4);
        want(0, 0) = 2.0 * (-2.0) * 2.5 + (2.5 + 11.5) + 13.0 * 0.7 * 0.7;
        want(1, 0) = 2.0 * 2.5;
        want(1, 1) = -2.0 * 3.5;
        want(2, 0) = 5.5 * 0.5;
        want(2, 1) = 7.5;
        want(2, 2) = -2.0 * 5.5;
        want(3, 0) = 2.5;
        want(3, 3) = -17.0;
        Eigen::MatrixXd sym = want + want.transpose() -
                              Eigen::MatrixXd(want.diagonal().asDiagonal());
        CHECK((got - sym).cwiseAbs().maxCoeff() <= 1e-12);
    }

    // Attenuation block of subsystem 1 against peer 2 (two subsystems, so the
    // peer-average weight is 1): core, peer column, output column, then the
    // two disturbance rows with diagonal -zeta2.
    {
        Eigen::MatrixXd got = find_block(prog, "G4r[i=1,j=1,a=2,s=1,l=1,k=1]").eval(cat, theta);
        REQUIRE(got.rows() == 7);
        Eigen::MatrixXd want = Eigen::MatrixXd::Zero(7, 7);
        want(0, 0) = 2.0 * (-1.0) * 2.0 + (2.0 + 11.0) + 17.0 * 0.09;
        want(1, 0) = 2.0;
        want(1, 1) = -6.0;
        want(2, 0) = 5.0;
        want(2, 1) = 7.0;
        want(2, 2) = -10.0;
        want(3, 0) = 2.0;
        want(3, 3) = -13.0;
        want(4, 1) = 3.0;   // X5 against the output budget
        want(4, 4) = -1.0;
        want(5, 0) = 0.1;   // own disturbance input
        want(6, 0) = 0.2;   // disturbance arriving from the peer
        want(5, 5) = -2.0;
        want(6, 6) = -2.0;
        Eigen::MatrixXd sym = want + want.transpose() -
                              Eigen::MatrixXd(want.diagonal().asDiagonal());
        CHECK((got - sym).cwiseAbs().maxCoeff() <= 1e-12);
    }
    {
        Eigen::MatrixXd got = find_block(prog, "G4r[i=2,j=1,a=1,s=1,l=1,k=1]").eval(cat, theta);
        Eigen::MatrixXd want = Eigen::MatrixXd::Zero(7, 7);
        want(0, 0) = 2.0 * (-2.0) * 2.5 + (2.5 + 11.5) + 13.0 * 0.49;
        want(1, 0) = 5.0;
        want(1, 1) = -7.0;
        want(2, 0) = 2.75;
        want(2, 1) = 7.5;
        want(2, 2) = -11.0;
        want(3, 0) = 2.5;
        want(3, 3) = -17.0;
        want(4, 1) = 3.5;
        want(4, 4) = -1.0;
        want(5, 0) = 0.15;
        want(6, 0) = 0.4;
        want(5, 5) = -3.0;
        want(6, 6) = -3.0;
        Eigen::MatrixXd sym = want + want.transpose() -
                              Eigen::MatrixXd(want.diagonal().asDiagonal());
        CHECK((got - sym).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("three subsystems scale the attenuation block by the peer average") {
    SystemSpec sys;
    for (int i = 0; i < 3; ++i) {
        SubsystemSpec sub;
        sub.n = sub.p = sub.u = sub.v = 1;
        sub.x0 = Eigen::VectorXd::Zero(1);
        RuleSpec rule;
        rule.A = scalar(-1.0);
        rule.B = scalar(1.0);
        rule.C = scalar(1.0);
        rule.Bw = scalar(0.5);
        for (int a = 0; a < 3; ++a)
            if (a != i) rule.couplings[a] = {scalar(0.0), scalar(0.0)};
        ModeSpec mode;
        mode.rules.push_back(rule);
        mode.memberships.push_back(constant_one());
        mode.lambda = Eigen::VectorXd::Zero(1);
        sub.modes.push_back(mode);
        sub.switching = single_mode_schedule();
        sys.subs.push_back(sub);
    }
    lmi::SynthesisOptions opt;
    opt.zeta2 = std::vector<double>{2.0};
    lmi::LmiProgram prog = lmi::assemble_program(sys, opt);

    const lmi::LmiBlock& b = find_block(prog, "G4r[i=1,j=1,a=2,s=1,l=1,k=1]");
    REQUIRE(b.dim == 7);
    // Constant part: output budget diagonal, averaged own disturbance input,
    // and the attenuation diagonal with the own row scaled by 1/2.
    CHECK(b.constant(4, 4) == doctest::Approx(-1.0));
    CHECK(b.constant(5, 0) == doctest::Approx(0.5 * 0.5));
    CHECK(b.constant(6, 0) == doctest::Approx(0.0));
    CHECK(b.constant(5, 5) == doctest::Approx(-2.0 * 0.5));
    CHECK(b.constant(6, 6) == doctest::Approx(-2.0));

    // The core is averaged too: with X5 = 1 the output column carries
    // sqrt(1/2) and the (y,y) diagonal -2 * 1/2.
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(prog.catalogue.scalar_count());
    prog.catalogue.pack(prog.catalogue.x5(0, 0, 0), scalar(1.0), theta);
    Eigen::MatrixXd M = b.eval(prog.catalogue, theta);
    CHECK(M(4, 1) == doctest::Approx(std::sqrt(0.5)));
    CHECK(M(1, 1) == doctest::Approx(-2.0 * 0.5));
}

TEST_CASE("jump blocks carry the subsystem's mu and the closed-form eigenvalues") {
    SystemSpec sys;
    SubsystemSpec sub;
    sub.n = sub.p = sub.u = 1;
    sub.v = 0;
    sub.x0 = Eigen::VectorXd::Zero(1);
    for (int j = 0; j < 2; ++j) {
        ModeSpec mode;
        RuleSpec rule;
        rule.A = scalar(-1.0);
        rule.B = scalar(1.0);
        rule.C = scalar(1.0);
        rule.Bw = Eigen::MatrixXd::Zero(1, 0);
        mode.rules.push_back(rule);
        mode.memberships.push_back(constant_one());
        mode.lambda = Eigen::VectorXd::Zero(1);
        sub.modes.push_back(mode);
    }
    sub.switching = two_mode_schedule();
    sys.subs.push_back(sub);

    lmi::SynthesisOptions opt;
    opt.mu = {2.0};
    opt.zeta2 = std::vector<double>{1.0};
    lmi::LmiProgram prog = lmi::assemble_program(sys, opt);
    auto fam = family_counts(prog);
    CHECK(fam["G3"] == 2);
    CHECK(prog.ties.empty());

    const lmi::Catalogue& cat = prog.catalogue;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(cat.scalar_count());
    cat.pack(cat.x1(0, 0, 0), scalar(1.0), theta);
    cat.pack(cat.x1(0, 1, 0), scalar(1.0), theta);

    const lmi::LmiBlock& jump = find_block(prog, "G3[i=1,(j=1,k=1)->(j=2,k=1)]");
    CHECK(jump.sense == lmi::Sense::LE);
    CHECK(jump.margin == 0.0);
    Eigen::MatrixXd M = jump.eval(cat, theta);
    REQUIRE(M.rows() == 2);
    CHECK(M(0, 0) == doctest::Approx(-2.0));
    CHECK(M(0, 1) == doctest::Approx(1.0));
    CHECK(M(1, 1) == doctest::Approx(-1.0));
    // Satisfied case: largest eigenvalue (-3 + sqrt(5))/2 < 0.
    CHECK(spectra::max_eigenvalue(M) == doctest::Approx((-3.0 + std::sqrt(5.0)) / 2.0));

    // Shrink the landing value and the block becomes indefinite, which
    // residual_check reports against the closed form.
    cat.pack(cat.x1(0, 1, 0), scalar(0.4), theta);
    std::vector<lmi::Residual> res = lmi::residual_check(prog, theta, 1e-9);
    bool found = false;
    for (const lmi::Residual& r : res) {
        if (r.label != "G3[i=1,(j=1,k=1)->(j=2,k=1)]") continue;
        found = true;
        CHECK_FALSE(r.pass);
        CHECK(r.min_eig == doctest::Approx(-(-2.4 + std::sqrt(6.56)) / 2.0));
    }
    CHECK(found);

    // A contraction requirement in both directions around the mode cycle is
    // certified infeasible at assembly time.
    lmi::SynthesisOptions shrink = opt;
    shrink.mu = {0.5};
    CHECK_THROWS_AS((void)lmi::assemble_program(sys, shrink), Error);
    try {
        (void)lmi::assemble_program(sys, shrink);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Infeasible);
    }
}

TEST_CASE("per-subsystem mu lands in the matching jump blocks") {
    SystemSpec sys = paper_shaped(5);
    lmi::SynthesisOptions opt;
    opt.mu = {2.0, 4.0};
    opt.zeta2 = std::vector<double>{1.0};
    lmi::LmiProgram prog = lmi::assemble_program(sys, opt);

    const lmi::Catalogue& cat = prog.catalogue;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(cat.scalar_count());
    cat.pack(cat.x1(0, 0, 0), Eigen::MatrixXd::Identity(2, 2), theta);
    cat.pack(cat.x1(1, 0, 0), Eigen::MatrixXd::Identity(3, 3), theta);

    Eigen::MatrixXd M1 = find_block(prog, "G3[i=1,(j=1,k=1)->(j=2,k=1)]").eval(cat, theta);
    CHECK(M1(0, 0) == doctest::Approx(-2.0));
    Eigen::MatrixXd M2 = find_block(prog, "G3[i=2,(j=1,k=1)->(j=2,k=1)]").eval(cat, theta);
    CHECK(M2(0, 0) == doctest::Approx(-4.0));
}

TEST_CASE("literal layout requires matching input and output dimensions") {
    SystemSpec sys = paper_shaped(7);
    sys.subs[0].u = 1;  // p stays 2
    for (auto& mode : sys.subs[0].modes)
        for (auto& rule : mode.rules) rule.B = Eigen::MatrixXd::Ones(2, 1);

    lmi::SynthesisOptions opt;
    opt.layout = lmi::Layout::PaperLiteral;
    opt.zeta2 = std::vector<double>{1.0};
    try {
        (void)lmi::assemble_program(sys, opt);
        FAIL("expected a validation error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Validation);
    }
    // The coherent layout accepts the same shapes.
    opt.layout = lmi::Layout::Coherent;
    CHECK(lmi::assemble_program(sys, opt).blocks.size() > 0);
}

TEST_CASE("option vectors must match the subsystem count") {
    SystemSpec sys = paper_shaped(11);
    lmi::SynthesisOptions opt;
    opt.zeta2 = std::vector<double>{1.0, 2.0, 3.0};
    CHECK_THROWS_AS((void)lmi::assemble_program(sys, opt), Error);
    opt.zeta2 = std::vector<double>{1.0, -2.0};
    CHECK_THROWS_AS((void)lmi::assemble_program(sys, opt), Error);
    opt.zeta2.reset();
    opt.mu = {1.0, 1.0, 1.0};
    CHECK_THROWS_AS((void)lmi::assemble_program(sys, opt), Error);
    opt.mu = {-1.0};
    CHECK_THROWS_AS((void)lmi::assemble_program(sys, opt), Error);
}

TEST_CASE("residual_check covers dropped jump blocks") {
    SystemSpec sys = paper_shaped(13);
    lmi::SynthesisOptions opt;
    opt.zeta2 = std::vector<double>{1.0};
    lmi::LmiProgram prog = lmi::assemble_program(sys, opt);  // mu = 1, 16 dropped
    REQUIRE(prog.dropped.size() == 16);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(prog.catalogue.scalar_count());
    std::vector<lmi::Residual> res = lmi::residual_check(prog, theta, 1e-9);
    CHECK(res.size() == prog.blocks.size());
    int jumps = 0;
    for (const lmi::Residual& r : res)
        if (r.family == "G3") ++jumps;
    CHECK(jumps == 16);
}
