#pragma once

// Matrix-inequality assembly for decentralized switched output feedback.
//
// Decision variables per subsystem i, mode j (1-based in names, 0-based in
// code): X1[i,j,k] sym n_i, X5[i,j,k] sym p_i, X9[i,j,k] sym u_i, K[i,j,l]
// full u_i x p_i, W[i,j,s,k] sym n_i. Interconnection multipliers tau[a,i]
// and, when the attenuation level is optimized, zeta2[i].
//
// Block families:
//   G1    variable positivity, >= eps I
//   G2    X1[i,j,l] + W[i,j,s,k] >= eps I
//   G3    mode-change Lyapunov jump, non-strict <= 0
//   G4s   switched stabilization core with peer Schur columns, <= -eps I
//   G4r   per-peer disturbance attenuation, <= -eps I

#include "switsyn/model.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace switsyn::lmi {

enum class Layout { Coherent, PaperLiteral };
enum class Sense { GE, LE };
enum class VarKind { X1, X5, X9, K, W, Tau, Zeta2 };

struct VarInfo {
    VarKind kind;
    int sub = -1;
    int mode = -1;
    int a = -1;  // rule index; Tau: peer index
    int b = -1;  // second rule index (W)
    int rows = 0;
    int cols = 0;
    bool symmetric = false;
    int offset = 0;  // first scalar slot
    std::string name;

    [[nodiscard]] int count() const { return symmetric ? rows * (rows + 1) / 2 : rows * cols; }
};

// Scalar packing: symmetric matrices store the upper triangle row by row,
// one slot per unordered entry pair; full matrices store rows in order.
class Catalogue {
public:
    int add(VarInfo info);

    [[nodiscard]] const std::vector<VarInfo>& vars() const { return vars_; }
    [[nodiscard]] const VarInfo& var(int id) const { return vars_.at(static_cast<size_t>(id)); }
    [[nodiscard]] int scalar_count() const { return total_; }

    [[nodiscard]] int find(VarKind kind, int sub, int mode = -1, int a = -1, int b = -1) const;
    [[nodiscard]] int x1(int i, int j, int k) const { return find(VarKind::X1, i, j, k); }
    [[nodiscard]] int x5(int i, int j, int k) const { return find(VarKind::X5, i, j, k); }
    [[nodiscard]] int x9(int i, int j, int k) const { return find(VarKind::X9, i, j, k); }
    [[nodiscard]] int gain(int i, int j, int l) const { return find(VarKind::K, i, j, l); }
    [[nodiscard]] int w(int i, int j, int s, int k) const { return find(VarKind::W, i, j, s, k); }
    [[nodiscard]] int tau(int alpha, int i) const { return find(VarKind::Tau, i, -1, alpha); }
    [[nodiscard]] int zeta2(int i) const { return find(VarKind::Zeta2, i); }

    [[nodiscard]] Eigen::MatrixXd unpack(int id, const Eigen::VectorXd& theta) const;
    void pack(int id, const Eigen::MatrixXd& value, Eigen::VectorXd& theta) const;

private:
    std::vector<VarInfo> vars_;
    std::map<std::tuple<int, int, int, int, int>, int> index_;
    int total_ = 0;
};

// One addend of a block: coeff * (left * value(var) * right + transpose).
struct Term {
    int var = -1;
    Eigen::MatrixXd left;   // dim x var.rows
    Eigen::MatrixXd right;  // var.cols x dim
    double coeff = 0.0;
};

struct LmiBlock {
    std::string label;
    std::string family;  // G1, G2, G3, G4s, G4r
    Sense sense = Sense::GE;
    double margin = 0.0;  // required eigenvalue floor of sense-adjusted block
    int dim = 0;
    Eigen::MatrixXd constant;
    std::vector<Term> terms;

    [[nodiscard]] Eigen::MatrixXd eval(const Catalogue& cat, const Eigen::VectorXd& theta) const;
};

// Equality forced by the jump family before solving: value(var) = scale * value(rep).
struct TieSpec {
    int var = -1;
    int rep = -1;
    double scale = 1.0;
};

struct SynthesisOptions {
    Layout layout = Layout::Coherent;
    double epsilon = 1e-6;  // strict-family margin
    // Lyapunov jump ratio at switches, per subsystem. Empty means 1 everywhere;
    // a single entry broadcasts.
    std::vector<double> mu;
    // Fixed squared attenuation levels per subsystem (single entry broadcasts);
    // an empty optional asks for the levels to be minimized.
    std::optional<std::vector<double>> zeta2;
    std::optional<double> lambda_override;  // replaces every membership rate bound

    [[nodiscard]] double mu_of(int i) const {
        if (mu.empty()) return 1.0;
        return mu.size() == 1 ? mu[0] : mu.at(static_cast<size_t>(i));
    }
    [[nodiscard]] double zeta2_of(int i) const {
        const std::vector<double>& z = *zeta2;
        return z.size() == 1 ? z[0] : z.at(static_cast<size_t>(i));
    }
};

struct LmiProgram {
    Catalogue catalogue;
    std::vector<LmiBlock> blocks;
    Eigen::VectorXd objective;  // zero for pure feasibility
    bool minimize = false;
    std::vector<TieSpec> ties;
    std::vector<size_t> dropped;  // block indices identically satisfied under ties
};

// Builds the full program. Throws Validation for layout misuse and
// Infeasible when the jump graph certifies an empty feasible set.
LmiProgram assemble_program(const SystemSpec& sys, const SynthesisOptions& opt);

struct Residual {
    std::string label;
    std::string family;
    double min_eig = 0.0;  // of the sense-adjusted block
    double margin = 0.0;
    bool pass = false;
};

// Evaluates every block (dropped ones included) at theta with the in-repo
// Jacobi eigensolver. pass <=> min_eig >= margin - tol.
std::vector<Residual> residual_check(const LmiProgram& prog, const Eigen::VectorXd& theta,
                                     double tol);

std::string dump_blocks(const LmiProgram& prog);

}  // namespace switsyn::lmi
