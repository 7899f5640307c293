#pragma once

// Interconnected switched Takagi-Sugeno system description: in-memory types,
// the declarative file format, membership evaluation, and switching rules.
//
// All indices are 0-based in memory. File documents and diagnostics use the
// 1-based labels (subsystem[1], mode[2], ...).

#include "switsyn/doc.hpp"

#include <Eigen/Core>

#include <map>
#include <string>
#include <variant>
#include <vector>

namespace switsyn {

// --------------------------------------------------------------------------
// Membership functions
// --------------------------------------------------------------------------
//
// Mini expression grammar over the subsystem state:
//   expr    := term (('+' | '-') term)*
//   term    := factor ('*' factor)*
//   factor  := primary ['^2']
//   primary := number | 'x[' k ']' | 'sin(' expr ')' | 'cos(' expr ')'
//            | 'one_minus(' s ')' | '(' expr ')' | '-' primary
// `x[k]` is the k-th state component (1-based in the source text) and
// `one_minus(s)` references the s-th membership of the same mode.

class MembershipFn {
public:
    MembershipFn() = default;

    // Throws a Parse error on bad syntax; `source` tags diagnostics.
    static MembershipFn parse(const std::string& text, const std::string& source);

    // Evaluates with `siblings` supplying one_minus targets. The guard
    // rejects reference cycles.
    [[nodiscard]] double eval(const Eigen::VectorXd& x,
                              const std::vector<MembershipFn>& siblings,
                              int depth = 0) const;

    [[nodiscard]] const std::string& source_text() const { return text_; }

    // 1-based index of the one_minus target when the whole expression is a
    // single one_minus(...), else 0. Used by validation.
    [[nodiscard]] int one_minus_target() const;

    // Largest state index referenced (1-based); 0 when none.
    [[nodiscard]] int max_state_index() const;

private:
    enum class Op { Const, State, Add, Sub, Mul, Neg, Sin, Cos, Square, OneMinus };

    struct Node {
        Op op;
        double value = 0.0;  // Const
        int ref = 0;         // State / OneMinus (1-based)
        int a = -1, b = -1;  // child node ids
    };

    [[nodiscard]] double eval_node(int id, const Eigen::VectorXd& x,
                                   const std::vector<MembershipFn>& siblings, int depth) const;

    std::vector<Node> nodes_;
    int root_ = -1;
    std::string text_;
};

// --------------------------------------------------------------------------
// System description
// --------------------------------------------------------------------------

struct CouplingSpec {
    Eigen::MatrixXd F;   // n_i x n_alpha, state interconnection
    Eigen::MatrixXd Bw;  // n_i x v_alpha, peer disturbance feed-through
};

struct RuleSpec {
    Eigen::MatrixXd A;   // n x n
    Eigen::MatrixXd B;   // n x u
    Eigen::MatrixXd Bw;  // n x v, own disturbance input
    Eigen::MatrixXd C;   // p x n
    std::map<int, CouplingSpec> couplings;  // keyed by 0-based peer index
};

struct ModeSpec {
    std::vector<RuleSpec> rules;
    std::vector<MembershipFn> memberships;  // one per rule
    Eigen::VectorXd lambda;                 // per-rule lower bound on dh/dt
};

struct Frontier {
    Eigen::VectorXd c;  // H(x) = c'x + d
    double d = 0.0;
};

struct TimeSchedule {
    // (switch time, 0-based mode); strictly increasing times.
    std::vector<std::pair<double, int>> entries;
};

struct HysteresisSwitching {
    std::vector<Frontier> frontiers;  // one per mode
    int initial_mode = 0;
};

using SwitchingRule = std::variant<TimeSchedule, HysteresisSwitching>;

struct SubsystemSpec {
    int n = 0;  // state dimension
    int p = 0;  // output dimension
    int u = 0;  // input dimension
    int v = 0;  // disturbance dimension
    std::vector<ModeSpec> modes;
    SwitchingRule switching;
    Eigen::VectorXd x0;

    [[nodiscard]] int rule_count(int mode) const {
        return static_cast<int>(modes[static_cast<size_t>(mode)].rules.size());
    }
};

struct SystemSpec {
    std::string name;
    std::vector<SubsystemSpec> subs;

    [[nodiscard]] int count() const { return static_cast<int>(subs.size()); }
};

// --------------------------------------------------------------------------
// Operations
// --------------------------------------------------------------------------

[[nodiscard]] SystemSpec parse_system(const std::string& text, const std::string& source);
[[nodiscard]] SystemSpec load_system(const std::string& path);
[[nodiscard]] std::string serialize_system(const SystemSpec& system);
void save_system(const SystemSpec& system, const std::string& path);

struct ValidationReport {
    std::vector<std::string> violations;
    std::vector<std::string> warnings;

    [[nodiscard]] bool ok() const { return violations.empty(); }
};

// Structural and semantic checks: dimensions, coupling completeness, convex
// memberships sampled on a state grid, switching sanity, bound signs.
[[nodiscard]] ValidationReport validate(const SystemSpec& system);

// Evaluates the membership vector of one mode at state x. Renormalizes when
// the sum is within 1e-9 of one; throws a Validation error beyond that or
// when a value leaves [0, 1] by more than 1e-9.
[[nodiscard]] Eigen::VectorXd membership_eval(const SubsystemSpec& sub, int mode,
                                              const Eigen::VectorXd& x);

// One switching decision. For schedules the result is the mode of the latest
// entry with time <= t. For hysteresis rules the mode advances cyclically
// when the active frontier value changes sign against its mode-entry value
// (zero counts as a crossing); at most one transition per call.
// `entry_value` is H_mode(x) captured when `current_mode` was entered.
[[nodiscard]] int switching_eval(const SwitchingRule& rule, double t, const Eigen::VectorXd& x,
                                 int current_mode, double entry_value);

[[nodiscard]] double frontier_value(const HysteresisSwitching& rule, int mode,
                                    const Eigen::VectorXd& x);

// Initial mode for a rule (schedule: first entry; hysteresis: declared).
[[nodiscard]] int initial_mode(const SwitchingRule& rule);

}  // namespace switsyn
