#pragma once

// Structured-text document tree shared by the system and controller file
// formats: nested `name[index] { ... }` sections, `key = value` entries,
// matrix literals as row lists, `#` comments.

#include <Eigen/Core>

#include <string>
#include <utility>
#include <vector>

namespace switsyn::doc {

struct Value {
    enum class Kind { Text, String, Matrix };

    Kind kind = Kind::Text;
    std::string text;        // Text: raw token run; String: unquoted content
    Eigen::MatrixXd matrix;  // Matrix only; a flat [a, b, ...] parses as 1 x n
    bool flat = false;       // written back as [a, b] instead of [[a, b]]
    int line = 0;
    int col = 0;
};

struct Section {
    std::string name;
    int index = -1;  // from `name[index]`; -1 when absent
    std::vector<std::pair<std::string, Value>> entries;
    std::vector<Section> children;
    int line = 0;
    int col = 0;

    [[nodiscard]] const Section* find(const std::string& name, int index = -1) const;
    [[nodiscard]] const Section& need(const std::string& name, int index = -1) const;
    [[nodiscard]] std::vector<const Section*> all(const std::string& name) const;

    [[nodiscard]] const Value* find_value(const std::string& key) const;
    [[nodiscard]] const Value& need_value(const std::string& key) const;
    [[nodiscard]] bool has(const std::string& key) const { return find_value(key) != nullptr; }

    // Typed accessors; throw Parse errors that carry the document position.
    [[nodiscard]] double scalar(const std::string& key) const;
    [[nodiscard]] double scalar_or(const std::string& key, double fallback) const;
    [[nodiscard]] long integer(const std::string& key) const;
    [[nodiscard]] long integer_or(const std::string& key, long fallback) const;
    [[nodiscard]] std::string text(const std::string& key) const;
    [[nodiscard]] std::string text_or(const std::string& key, const std::string& fallback) const;
    [[nodiscard]] Eigen::MatrixXd matrix(const std::string& key) const;
    [[nodiscard]] Eigen::VectorXd vector(const std::string& key) const;

    [[nodiscard]] std::string where() const;
};

// Parses a whole document; `source` names it in diagnostics.
[[nodiscard]] Section parse(const std::string& text, const std::string& source);

// Inverse of parse. Numbers are written with 17 significant digits so a
// parse/serialize round trip is value-exact.
[[nodiscard]] std::string serialize(const Section& root);

[[nodiscard]] std::string format_number(double v);

// Section builders used by the writers.
Value text_value(std::string text);
Value string_value(std::string text);
Value matrix_value(const Eigen::MatrixXd& m);
Value vector_value(const Eigen::VectorXd& v);

}  // namespace switsyn::doc
