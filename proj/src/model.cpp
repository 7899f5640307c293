#include "switsyn/model.hpp"

#include "switsyn/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace switsyn {

namespace {

constexpr double kSumTol = 1e-9;    // membership sum drift that still renormalizes
constexpr double kRangeTol = 1e-9;  // tolerated excursion outside [0, 1]

[[noreturn]] void parse_fail(const std::string& source, const std::string& message) {
    throw Error(ErrorKind::Parse, source + ": " + message);
}

}  // namespace

// ===========================================================================
// Membership expression grammar
// ===========================================================================

namespace {

class ExprCursor {
public:
    ExprCursor(const std::string& text, const std::string& source)
        : text_(text), source_(source) {}

    void skip() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    [[nodiscard]] bool eof() {
        skip();
        return pos_ >= text_.size();
    }

    [[nodiscard]] char peek() {
        skip();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    bool accept(char c) {
        skip();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    bool accept_word(const std::string& w) {
        skip();
        if (text_.compare(pos_, w.size(), w) == 0) {
            size_t end = pos_ + w.size();
            if (end >= text_.size() || !(std::isalnum(static_cast<unsigned char>(text_[end])) || text_[end] == '_')) {
                pos_ = end;
                return true;
            }
        }
        return false;
    }

    double number() {
        skip();
        const char* start = text_.c_str() + pos_;
        char* end = nullptr;
        double v = std::strtod(start, &end);
        if (end == start) fail("expected a number");
        pos_ += static_cast<size_t>(end - start);
        return v;
    }

    int integer() {
        double v = number();
        int out = static_cast<int>(v);
        if (static_cast<double>(out) != v) fail("expected an integer");
        return out;
    }

    [[noreturn]] void fail(const std::string& message) {
        std::ostringstream os;
        os << source_ << ": membership expression '" << text_ << "' at offset " << pos_ << ": "
           << message;
        throw Error(ErrorKind::Parse, os.str());
    }

private:
    const std::string& text_;
    const std::string& source_;
    size_t pos_ = 0;
};

}  // namespace

struct MembershipParser {
    ExprCursor cur;
    std::vector<MembershipFn>* dummy = nullptr;
};

namespace {

// Builds nodes into `fn` via friend-free accessors: the parser lives here and
// returns node ids through a plain builder interface.
struct ExprBuilder {
    std::vector<std::tuple<int, double, int, int, int>> raw;  // op, value, ref, a, b
    int add(int op, double value, int ref, int a, int b) {
        raw.emplace_back(op, value, ref, a, b);
        return static_cast<int>(raw.size()) - 1;
    }
};

int parse_expr(ExprCursor& cur, ExprBuilder& b);

int parse_primary(ExprCursor& cur, ExprBuilder& b) {
    if (cur.accept('(')) {
        int e = parse_expr(cur, b);
        cur.expect(')');
        return e;
    }
    if (cur.accept('-')) {
        int e = parse_primary(cur, b);
        return b.add(5, 0.0, 0, e, -1);  // Neg
    }
    if (cur.accept_word("sin")) {
        cur.expect('(');
        int e = parse_expr(cur, b);
        cur.expect(')');
        return b.add(6, 0.0, 0, e, -1);  // Sin
    }
    if (cur.accept_word("cos")) {
        cur.expect('(');
        int e = parse_expr(cur, b);
        cur.expect(')');
        return b.add(7, 0.0, 0, e, -1);  // Cos
    }
    if (cur.accept_word("one_minus")) {
        cur.expect('(');
        int ref = cur.integer();
        cur.expect(')');
        if (ref < 1) cur.fail("one_minus target must be a 1-based membership index");
        return b.add(9, 0.0, ref, -1, -1);  // OneMinus
    }
    if (cur.accept_word("x")) {
        cur.expect('[');
        int ref = cur.integer();
        cur.expect(']');
        if (ref < 1) cur.fail("state index must be 1-based");
        return b.add(1, 0.0, ref, -1, -1);  // State
    }
    char c = cur.peek();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '+') {
        return b.add(0, cur.number(), 0, -1, -1);  // Const
    }
    cur.fail("expected a primary expression");
}

int parse_factor(ExprCursor& cur, ExprBuilder& b) {
    int e = parse_primary(cur, b);
    if (cur.accept('^')) {
        int two = cur.integer();
        if (two != 2) cur.fail("only '^2' is supported");
        e = b.add(8, 0.0, 0, e, -1);  // Square
    }
    return e;
}

int parse_term(ExprCursor& cur, ExprBuilder& b) {
    int e = parse_factor(cur, b);
    while (cur.accept('*')) {
        int rhs = parse_factor(cur, b);
        e = b.add(4, 0.0, 0, e, rhs);  // Mul
    }
    return e;
}

int parse_expr(ExprCursor& cur, ExprBuilder& b) {
    int e = parse_term(cur, b);
    while (true) {
        if (cur.accept('+')) {
            int rhs = parse_term(cur, b);
            e = b.add(2, 0.0, 0, e, rhs);  // Add
        } else if (cur.accept('-')) {
            int rhs = parse_term(cur, b);
            e = b.add(3, 0.0, 0, e, rhs);  // Sub
        } else {
            break;
        }
    }
    return e;
}

}  // namespace

MembershipFn MembershipFn::parse(const std::string& text, const std::string& source) {
    ExprCursor cur(text, source);
    ExprBuilder b;
    int root = parse_expr(cur, b);
    if (!cur.eof()) cur.fail("trailing characters");
    MembershipFn fn;
    fn.text_ = text;
    fn.root_ = root;
    fn.nodes_.reserve(b.raw.size());
    for (const auto& [op, value, ref, a, bb] : b.raw) {
        Node node;
        node.op = static_cast<Op>(op);
        node.value = value;
        node.ref = ref;
        node.a = a;
        node.b = bb;
        fn.nodes_.push_back(node);
    }
    return fn;
}

double MembershipFn::eval_node(int id, const Eigen::VectorXd& x,
                               const std::vector<MembershipFn>& siblings, int depth) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    switch (n.op) {
        case Op::Const: return n.value;
        case Op::State:
            if (n.ref > x.size())
                throw Error(ErrorKind::Validation,
                            "membership '" + text_ + "' references x[" + std::to_string(n.ref) +
                                "] beyond the state dimension");
            return x(n.ref - 1);
        case Op::Add: return eval_node(n.a, x, siblings, depth) + eval_node(n.b, x, siblings, depth);
        case Op::Sub: return eval_node(n.a, x, siblings, depth) - eval_node(n.b, x, siblings, depth);
        case Op::Mul: return eval_node(n.a, x, siblings, depth) * eval_node(n.b, x, siblings, depth);
        case Op::Neg: return -eval_node(n.a, x, siblings, depth);
        case Op::Sin: return std::sin(eval_node(n.a, x, siblings, depth));
        case Op::Cos: return std::cos(eval_node(n.a, x, siblings, depth));
        case Op::Square: {
            double v = eval_node(n.a, x, siblings, depth);
            return v * v;
        }
        case Op::OneMinus: {
            if (depth > 64)
                throw Error(ErrorKind::Validation,
                            "one_minus reference cycle in membership '" + text_ + "'");
            if (n.ref < 1 || n.ref > static_cast<int>(siblings.size()))
                throw Error(ErrorKind::Validation,
                            "one_minus(" + std::to_string(n.ref) + ") target out of range");
            return 1.0 - siblings[static_cast<size_t>(n.ref - 1)].eval(x, siblings, depth + 1);
        }
    }
    throw Error(ErrorKind::Internal, "corrupt membership node");
}

double MembershipFn::eval(const Eigen::VectorXd& x, const std::vector<MembershipFn>& siblings,
                          int depth) const {
    if (root_ < 0) throw Error(ErrorKind::Internal, "empty membership function");
    return eval_node(root_, x, siblings, depth);
}

int MembershipFn::one_minus_target() const {
    if (root_ < 0) return 0;
    const Node& n = nodes_[static_cast<size_t>(root_)];
    return n.op == Op::OneMinus ? n.ref : 0;
}

int MembershipFn::max_state_index() const {
    int out = 0;
    for (const Node& n : nodes_)
        if (n.op == Op::State) out = std::max(out, n.ref);
    return out;
}

// ===========================================================================
// Document interpretation
// ===========================================================================

namespace {

Eigen::MatrixXd need_matrix(const doc::Section& s, const std::string& key, Eigen::Index rows,
                            Eigen::Index cols, const std::string& source, const std::string& label,
                            bool check_cols = true) {
    Eigen::MatrixXd m = s.matrix(key);
    if (m.rows() != rows || (check_cols && m.cols() != cols)) {
        std::ostringstream os;
        os << label << ": matrix '" << key << "' has shape " << m.rows() << "x" << m.cols()
           << ", expected " << rows << "x" << cols;
        parse_fail(source, os.str());
    }
    return m;
}

// Collects children named `name` with indices 1..count (contiguous).
std::vector<const doc::Section*> indexed_children(const doc::Section& parent,
                                                  const std::string& name,
                                                  const std::string& source,
                                                  const std::string& label) {
    std::vector<const doc::Section*> found = parent.all(name);
    if (found.empty()) parse_fail(source, label + ": missing section '" + name + "[1]'");
    std::vector<const doc::Section*> out(found.size(), nullptr);
    for (const doc::Section* s : found) {
        int idx = s->index;
        if (idx < 1 || idx > static_cast<int>(found.size()) || out[static_cast<size_t>(idx - 1)])
            parse_fail(source, label + ": sections '" + name + "[...]' must be indexed 1.." +
                                   std::to_string(found.size()) + " without repeats");
        out[static_cast<size_t>(idx - 1)] = s;
    }
    return out;
}

SwitchingRule parse_switching(const doc::Section& sw, int n_modes, const std::string& source,
                              const std::string& label) {
    std::string kind = sw.text_or("kind", "hysteresis");
    if (kind == "schedule") {
        TimeSchedule sched;
        auto entries = indexed_children(sw, "entry", source, label + " switching");
        double prev = -std::numeric_limits<double>::infinity();
        for (const doc::Section* e : entries) {
            double t = e->scalar("t");
            int mode = static_cast<int>(e->integer("mode"));
            if (mode < 1 || mode > n_modes)
                parse_fail(source, label + ": schedule mode " + std::to_string(mode) +
                                       " out of range 1.." + std::to_string(n_modes));
            if (t <= prev) parse_fail(source, label + ": schedule times must be strictly increasing");
            prev = t;
            sched.entries.emplace_back(t, mode - 1);
        }
        return sched;
    }
    if (kind == "hysteresis") {
        HysteresisSwitching hyst;
        auto frontiers = indexed_children(sw, "frontier", source, label + " switching");
        if (static_cast<int>(frontiers.size()) != n_modes)
            parse_fail(source, label + ": hysteresis needs one frontier per mode (" +
                                   std::to_string(n_modes) + "), found " +
                                   std::to_string(frontiers.size()));
        for (const doc::Section* f : frontiers) {
            Frontier fr;
            fr.c = f->vector("c");
            fr.d = f->scalar_or("d", 0.0);
            hyst.frontiers.push_back(std::move(fr));
        }
        int init = static_cast<int>(sw.integer_or("initial_mode", 1));
        if (init < 1 || init > n_modes)
            parse_fail(source, label + ": initial_mode out of range");
        hyst.initial_mode = init - 1;
        return hyst;
    }
    parse_fail(source, label + ": unknown switching kind '" + kind + "'");
}

}  // namespace

SystemSpec parse_system(const std::string& text, const std::string& source) {
    doc::Section root = doc::parse(text, source);

    SystemSpec sys;
    if (const doc::Section* meta = root.find("system")) {
        sys.name = meta->text_or("name", "");
    } else {
        parse_fail(source, "missing required section 'system'");
    }

    auto subs = indexed_children(root, "subsystem", source, "document");
    for (size_t si = 0; si < subs.size(); ++si) {
        const doc::Section& s = *subs[si];
        std::string label = "subsystem[" + std::to_string(si + 1) + "]";
        SubsystemSpec sub;
        sub.n = static_cast<int>(s.integer("state_dim"));
        sub.p = static_cast<int>(s.integer("output_dim"));
        sub.u = static_cast<int>(s.integer("input_dim"));
        sub.v = static_cast<int>(s.integer("disturbance_dim"));
        if (sub.n < 1 || sub.p < 1 || sub.u < 1 || sub.v < 0)
            parse_fail(source, label + ": dimensions must be positive (disturbance_dim >= 0)");

        if (s.has("initial_state")) {
            sub.x0 = s.vector("initial_state");
            if (sub.x0.size() != sub.n)
                parse_fail(source, label + ": initial_state has " + std::to_string(sub.x0.size()) +
                                       " entries, expected " + std::to_string(sub.n));
        } else {
            sub.x0 = Eigen::VectorXd::Zero(sub.n);
        }

        auto modes = indexed_children(s, "mode", source, label);
        for (size_t mj = 0; mj < modes.size(); ++mj) {
            const doc::Section& m = *modes[mj];
            std::string mlabel = label + " mode[" + std::to_string(mj + 1) + "]";
            ModeSpec mode;

            auto rules = indexed_children(m, "rule", source, mlabel);
            for (size_t rk = 0; rk < rules.size(); ++rk) {
                const doc::Section& r = *rules[rk];
                std::string rlabel = mlabel + " rule[" + std::to_string(rk + 1) + "]";
                RuleSpec rule;
                rule.A = need_matrix(r, "A", sub.n, sub.n, source, rlabel);
                rule.B = need_matrix(r, "B", sub.n, sub.u, source, rlabel);
                rule.C = need_matrix(r, "C", sub.p, sub.n, source, rlabel);
                if (sub.v > 0) {
                    rule.Bw = need_matrix(r, "Bw", sub.n, sub.v, source, rlabel);
                } else {
                    rule.Bw = Eigen::MatrixXd::Zero(sub.n, 0);
                }
                for (const doc::Section* c : r.all("coupling")) {
                    if (c->index < 1)
                        parse_fail(source, rlabel + ": coupling sections need a peer index");
                    int peer = c->index - 1;
                    if (peer == static_cast<int>(si))
                        parse_fail(source, rlabel + ": coupling peer cannot be the subsystem itself");
                    CouplingSpec cp;
                    cp.F = need_matrix(*c, "F", sub.n, 0, source, rlabel + " coupling", false);
                    cp.Bw = need_matrix(*c, "Bw", sub.n, 0, source, rlabel + " coupling", false);
                    rule.couplings.emplace(peer, std::move(cp));
                }
                mode.rules.push_back(std::move(rule));
            }

            for (size_t rk = 0; rk < rules.size(); ++rk) {
                std::string key = "membership[" + std::to_string(rk + 1) + "]";
                const doc::Value* val = m.find_value(key);
                if (!val) parse_fail(source, mlabel + ": missing '" + key + "'");
                if (val->kind == doc::Value::Kind::Matrix)
                    parse_fail(source, mlabel + ": '" + key + "' must be an expression");
                mode.memberships.push_back(MembershipFn::parse(val->text, source));
            }

            if (m.has("lambda")) {
                mode.lambda = m.vector("lambda");
                if (mode.lambda.size() != static_cast<Eigen::Index>(rules.size()))
                    parse_fail(source, mlabel + ": lambda needs one entry per rule");
            } else {
                mode.lambda = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rules.size()));
            }
            sub.modes.push_back(std::move(mode));
        }

        sub.switching = parse_switching(s.need("switching"), static_cast<int>(sub.modes.size()),
                                        source, label);
        sys.subs.push_back(std::move(sub));
    }
    return sys;
}

SystemSpec load_system(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Parse, "cannot open system file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_system(buf.str(), path);
}

std::string serialize_system(const SystemSpec& system) {
    doc::Section root;
    root.name = "(document)";

    doc::Section meta;
    meta.name = "system";
    if (!system.name.empty()) meta.entries.emplace_back("name", doc::string_value(system.name));
    root.children.push_back(std::move(meta));

    for (int i = 0; i < system.count(); ++i) {
        const SubsystemSpec& sub = system.subs[static_cast<size_t>(i)];
        doc::Section s;
        s.name = "subsystem";
        s.index = i + 1;
        s.entries.emplace_back("state_dim", doc::text_value(std::to_string(sub.n)));
        s.entries.emplace_back("output_dim", doc::text_value(std::to_string(sub.p)));
        s.entries.emplace_back("input_dim", doc::text_value(std::to_string(sub.u)));
        s.entries.emplace_back("disturbance_dim", doc::text_value(std::to_string(sub.v)));
        s.entries.emplace_back("initial_state", doc::vector_value(sub.x0));

        doc::Section sw;
        sw.name = "switching";
        if (const auto* sched = std::get_if<TimeSchedule>(&sub.switching)) {
            sw.entries.emplace_back("kind", doc::text_value("schedule"));
            int idx = 1;
            for (const auto& [t, mode] : sched->entries) {
                doc::Section e;
                e.name = "entry";
                e.index = idx++;
                e.entries.emplace_back("t", doc::text_value(doc::format_number(t)));
                e.entries.emplace_back("mode", doc::text_value(std::to_string(mode + 1)));
                sw.children.push_back(std::move(e));
            }
        } else {
            const auto& hyst = std::get<HysteresisSwitching>(sub.switching);
            sw.entries.emplace_back("kind", doc::text_value("hysteresis"));
            sw.entries.emplace_back("initial_mode", doc::text_value(std::to_string(hyst.initial_mode + 1)));
            for (size_t j = 0; j < hyst.frontiers.size(); ++j) {
                doc::Section f;
                f.name = "frontier";
                f.index = static_cast<int>(j + 1);
                f.entries.emplace_back("c", doc::vector_value(hyst.frontiers[j].c));
                f.entries.emplace_back("d", doc::text_value(doc::format_number(hyst.frontiers[j].d)));
                sw.children.push_back(std::move(f));
            }
        }
        s.children.push_back(std::move(sw));

        for (size_t mj = 0; mj < sub.modes.size(); ++mj) {
            const ModeSpec& mode = sub.modes[mj];
            doc::Section m;
            m.name = "mode";
            m.index = static_cast<int>(mj + 1);
            m.entries.emplace_back("lambda", doc::vector_value(mode.lambda));
            for (size_t rk = 0; rk < mode.memberships.size(); ++rk) {
                m.entries.emplace_back("membership[" + std::to_string(rk + 1) + "]",
                                       doc::text_value(mode.memberships[rk].source_text()));
            }
            for (size_t rk = 0; rk < mode.rules.size(); ++rk) {
                const RuleSpec& rule = mode.rules[rk];
                doc::Section r;
                r.name = "rule";
                r.index = static_cast<int>(rk + 1);
                r.entries.emplace_back("A", doc::matrix_value(rule.A));
                r.entries.emplace_back("B", doc::matrix_value(rule.B));
                if (sub.v > 0) r.entries.emplace_back("Bw", doc::matrix_value(rule.Bw));
                r.entries.emplace_back("C", doc::matrix_value(rule.C));
                for (const auto& [peer, cp] : rule.couplings) {
                    doc::Section c;
                    c.name = "coupling";
                    c.index = peer + 1;
                    c.entries.emplace_back("F", doc::matrix_value(cp.F));
                    c.entries.emplace_back("Bw", doc::matrix_value(cp.Bw));
                    r.children.push_back(std::move(c));
                }
                m.children.push_back(std::move(r));
            }
            s.children.push_back(std::move(m));
        }
        root.children.push_back(std::move(s));
    }
    return doc::serialize(root);
}

void save_system(const SystemSpec& system, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Parse, "cannot write system file '" + path + "'");
    out << serialize_system(system);
}

// ===========================================================================
// Validation
// ===========================================================================

namespace {

// Deterministic sample grid: ceil(100^(1/n)) points per axis over [-pi, pi].
std::vector<Eigen::VectorXd> sample_grid(int n) {
    int per_axis = static_cast<int>(std::ceil(std::pow(100.0, 1.0 / n)));
    per_axis = std::max(per_axis, 2);
    std::vector<Eigen::VectorXd> points;
    std::vector<int> idx(static_cast<size_t>(n), 0);
    while (true) {
        Eigen::VectorXd x(n);
        for (int d = 0; d < n; ++d)
            x(d) = -M_PI + 2.0 * M_PI * idx[static_cast<size_t>(d)] / (per_axis - 1);
        points.push_back(x);
        int d = 0;
        while (d < n && ++idx[static_cast<size_t>(d)] == per_axis) {
            idx[static_cast<size_t>(d)] = 0;
            ++d;
        }
        if (d == n) break;
    }
    return points;
}

}  // namespace

ValidationReport validate(const SystemSpec& system) {
    ValidationReport report;
    auto violation = [&](const std::string& m) { report.violations.push_back(m); };
    auto warning = [&](const std::string& m) { report.warnings.push_back(m); };

    if (system.subs.empty()) {
        violation("system has no subsystems");
        return report;
    }

    int n_subs = system.count();
    for (int i = 0; i < n_subs; ++i) {
        const SubsystemSpec& sub = system.subs[static_cast<size_t>(i)];
        std::string label = "subsystem[" + std::to_string(i + 1) + "]";

        if (sub.modes.empty()) {
            violation(label + ": no modes");
            continue;
        }
        if (sub.x0.size() != sub.n) violation(label + ": initial state dimension mismatch");

        for (size_t mj = 0; mj < sub.modes.size(); ++mj) {
            const ModeSpec& mode = sub.modes[mj];
            std::string mlabel = label + " mode[" + std::to_string(mj + 1) + "]";
            size_t r = mode.rules.size();
            if (r == 0) {
                violation(mlabel + ": no rules");
                continue;
            }
            if (mode.memberships.size() != r)
                violation(mlabel + ": membership count differs from rule count");
            if (mode.lambda.size() != static_cast<Eigen::Index>(r))
                violation(mlabel + ": lambda needs one entry per rule");
            for (Eigen::Index q = 0; q < mode.lambda.size(); ++q)
                if (mode.lambda(q) > 0.0)
                    warning(mlabel + ": lambda[" + std::to_string(q + 1) +
                            "] is positive; a derivative lower bound of a non-constant membership"
                            " is negative somewhere");

            for (size_t rk = 0; rk < r; ++rk) {
                const RuleSpec& rule = mode.rules[rk];
                std::string rlabel = mlabel + " rule[" + std::to_string(rk + 1) + "]";
                if (rule.A.rows() != sub.n || rule.A.cols() != sub.n)
                    violation(rlabel + ": A must be " + std::to_string(sub.n) + "x" + std::to_string(sub.n));
                if (rule.B.rows() != sub.n || rule.B.cols() != sub.u)
                    violation(rlabel + ": B must be " + std::to_string(sub.n) + "x" + std::to_string(sub.u));
                if (rule.C.rows() != sub.p || rule.C.cols() != sub.n)
                    violation(rlabel + ": C must be " + std::to_string(sub.p) + "x" + std::to_string(sub.n));
                if (rule.Bw.rows() != sub.n || rule.Bw.cols() != sub.v)
                    violation(rlabel + ": Bw must be " + std::to_string(sub.n) + "x" + std::to_string(sub.v));

                for (int alpha = 0; alpha < n_subs; ++alpha) {
                    if (alpha == i) continue;
                    auto it = rule.couplings.find(alpha);
                    if (it == rule.couplings.end()) {
                        violation(rlabel + ": missing coupling[" + std::to_string(alpha + 1) + "]");
                        continue;
                    }
                    const SubsystemSpec& peer = system.subs[static_cast<size_t>(alpha)];
                    const CouplingSpec& cp = it->second;
                    if (cp.F.rows() != sub.n || cp.F.cols() != peer.n)
                        violation(rlabel + ": coupling[" + std::to_string(alpha + 1) + "].F must be " +
                                  std::to_string(sub.n) + "x" + std::to_string(peer.n));
                    if (cp.Bw.rows() != sub.n || cp.Bw.cols() != peer.v)
                        violation(rlabel + ": coupling[" + std::to_string(alpha + 1) + "].Bw must be " +
                                  std::to_string(sub.n) + "x" + std::to_string(peer.v));
                }
                for (const auto& [peer, cp] : rule.couplings) {
                    (void)cp;
                    if (peer < 0 || peer >= n_subs)
                        violation(rlabel + ": coupling peer " + std::to_string(peer + 1) +
                                  " does not exist");
                }
            }

            // Membership sanity on the sample grid.
            if (mode.memberships.size() == r) {
                for (const MembershipFn& fn : mode.memberships)
                    if (fn.max_state_index() > sub.n)
                        violation(mlabel + ": membership '" + fn.source_text() +
                                  "' references a state beyond dimension " + std::to_string(sub.n));
                int bad_sum = 0, bad_range = 0;
                for (const Eigen::VectorXd& x : sample_grid(sub.n)) {
                    double sum = 0.0;
                    bool range_ok = true;
                    bool eval_ok = true;
                    for (const MembershipFn& fn : mode.memberships) {
                        double h = 0.0;
                        try {
                            h = fn.eval(x, mode.memberships);
                        } catch (const Error& e) {
                            violation(mlabel + ": " + e.what());
                            eval_ok = false;
                            break;
                        }
                        if (h < -kRangeTol || h > 1.0 + kRangeTol) range_ok = false;
                        sum += h;
                    }
                    if (!eval_ok) break;
                    if (!range_ok) ++bad_range;
                    if (std::abs(sum - 1.0) > kSumTol) ++bad_sum;
                }
                if (bad_sum > 0)
                    violation(mlabel + ": memberships do not sum to one on " +
                              std::to_string(bad_sum) + " grid points");
                if (bad_range > 0)
                    violation(mlabel + ": memberships leave [0, 1] on " + std::to_string(bad_range) +
                              " grid points");
            }
        }

        // Switching rule sanity.
        if (const auto* sched = std::get_if<TimeSchedule>(&sub.switching)) {
            if (sched->entries.empty()) violation(label + ": empty switching schedule");
            double prev = -std::numeric_limits<double>::infinity();
            for (const auto& [t, mode] : sched->entries) {
                if (t <= prev) violation(label + ": schedule times must be strictly increasing");
                prev = t;
                if (mode < 0 || mode >= static_cast<int>(sub.modes.size()))
                    violation(label + ": schedule mode out of range");
            }
            if (!sched->entries.empty() && sched->entries.front().first > 0.0)
                warning(label + ": schedule starts after t = 0; the first entry's mode is used before it");
        } else {
            const auto& hyst = std::get<HysteresisSwitching>(sub.switching);
            if (hyst.frontiers.size() != sub.modes.size())
                violation(label + ": hysteresis needs one frontier per mode");
            for (size_t j = 0; j < hyst.frontiers.size(); ++j)
                if (hyst.frontiers[j].c.size() != sub.n)
                    violation(label + ": frontier[" + std::to_string(j + 1) +
                              "] coefficient dimension mismatch");
            if (hyst.initial_mode < 0 || hyst.initial_mode >= static_cast<int>(sub.modes.size()))
                violation(label + ": initial mode out of range");
        }
    }
    return report;
}

// ===========================================================================
// Evaluation
// ===========================================================================

Eigen::VectorXd membership_eval(const SubsystemSpec& sub, int mode, const Eigen::VectorXd& x) {
    const ModeSpec& m = sub.modes.at(static_cast<size_t>(mode));
    Eigen::VectorXd h(static_cast<Eigen::Index>(m.memberships.size()));
    for (size_t s = 0; s < m.memberships.size(); ++s) {
        double v = m.memberships[s].eval(x, m.memberships);
        if (v < -kRangeTol || v > 1.0 + kRangeTol)
            throw Error(ErrorKind::Validation,
                        "membership '" + m.memberships[s].source_text() + "' evaluates to " +
                            std::to_string(v) + " outside [0, 1]");
        h(static_cast<Eigen::Index>(s)) = std::clamp(v, 0.0, 1.0);
    }
    double sum = h.sum();
    if (std::abs(sum - 1.0) > kSumTol)
        throw Error(ErrorKind::Validation,
                    "memberships sum to " + std::to_string(sum) + ", expected 1");
    h /= sum;
    return h;
}

double frontier_value(const HysteresisSwitching& rule, int mode, const Eigen::VectorXd& x) {
    const Frontier& f = rule.frontiers.at(static_cast<size_t>(mode));
    return f.c.dot(x) + f.d;
}

int initial_mode(const SwitchingRule& rule) {
    if (const auto* sched = std::get_if<TimeSchedule>(&rule)) {
        if (sched->entries.empty()) throw Error(ErrorKind::Validation, "empty switching schedule");
        return sched->entries.front().second;
    }
    return std::get<HysteresisSwitching>(rule).initial_mode;
}

int switching_eval(const SwitchingRule& rule, double t, const Eigen::VectorXd& x, int current_mode,
                   double entry_value) {
    if (const auto* sched = std::get_if<TimeSchedule>(&rule)) {
        int mode = sched->entries.front().second;
        for (const auto& [time, m] : sched->entries) {
            if (time <= t) mode = m;
            else break;
        }
        return mode;
    }
    const auto& hyst = std::get<HysteresisSwitching>(rule);
    double now = frontier_value(hyst, current_mode, x);
    // Sign change against the mode-entry sample; landing exactly on the
    // frontier counts as a crossing.
    if (entry_value * now < 0.0 || now == 0.0)
        return (current_mode + 1) % static_cast<int>(hyst.frontiers.size());
    return current_mode;
}

}  // namespace switsyn
