#include "switsyn/doc.hpp"

#include "switsyn/error.hpp"

#include <cctype>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace switsyn::doc {

namespace {

class Cursor {
public:
    Cursor(const std::string& text, std::string source)
        : text_(text), source_(std::move(source)) {}

    [[nodiscard]] bool eof() const { return pos_ >= text_.size(); }
    [[nodiscard]] char peek() const { return eof() ? '\0' : text_[pos_]; }

    char get() {
        char c = text_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }

    // Skips whitespace and comments. Comments run from '#' to end of line.
    void skip_blank() {
        while (!eof()) {
            char c = peek();
            if (c == '#') {
                while (!eof() && peek() != '\n') get();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                get();
            } else {
                break;
            }
        }
    }

    // Same as skip_blank but stops at newlines (used inside key = value lines).
    void skip_inline_blank() {
        while (!eof()) {
            char c = peek();
            if (c == ' ' || c == '\t' || c == '\r') {
                get();
            } else {
                break;
            }
        }
    }

    [[nodiscard]] int line() const { return line_; }
    [[nodiscard]] int col() const { return col_; }

    [[noreturn]] void fail(const std::string& message) const {
        std::ostringstream os;
        os << source_ << ":" << line_ << ":" << col_ << ": " << message;
        throw Error(ErrorKind::Parse, os.str());
    }

    [[nodiscard]] const std::string& source() const { return source_; }

private:
    const std::string& text_;
    std::string source_;
    size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

bool is_ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::string read_ident(Cursor& cur) {
    std::string out;
    while (!cur.eof() && is_ident_char(cur.peek())) out.push_back(cur.get());
    return out;
}

double read_number(Cursor& cur) {
    std::string tok;
    auto take = [&] { tok.push_back(cur.get()); };
    if (cur.peek() == '+' || cur.peek() == '-') take();
    bool digits = false;
    while (!cur.eof() && (std::isdigit(static_cast<unsigned char>(cur.peek())) || cur.peek() == '.')) {
        digits = digits || std::isdigit(static_cast<unsigned char>(cur.peek()));
        take();
    }
    if (!cur.eof() && (cur.peek() == 'e' || cur.peek() == 'E')) {
        take();
        if (cur.peek() == '+' || cur.peek() == '-') take();
        while (!cur.eof() && std::isdigit(static_cast<unsigned char>(cur.peek()))) take();
    }
    if (!digits) cur.fail("expected a number");
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) cur.fail("bad number literal '" + tok + "'");
    return v;
}

std::vector<double> read_row(Cursor& cur) {
    std::vector<double> row;
    if (cur.peek() != '[') cur.fail("expected '['");
    cur.get();
    cur.skip_blank();
    while (cur.peek() != ']') {
        row.push_back(read_number(cur));
        cur.skip_blank();
        if (cur.peek() == ',') {
            cur.get();
            cur.skip_blank();
        } else if (cur.peek() != ']') {
            cur.fail("expected ',' or ']' in row literal");
        }
    }
    cur.get();
    return row;
}

Value read_matrix(Cursor& cur) {
    Value val;
    val.kind = Value::Kind::Matrix;
    val.line = cur.line();
    val.col = cur.col();
    if (cur.peek() != '[') cur.fail("expected '['");
    cur.get();
    cur.skip_blank();
    if (cur.peek() == ']') {  // empty literal: 0 x 0
        cur.get();
        val.flat = true;
        val.matrix.resize(0, 0);
        return val;
    }
    if (cur.peek() == '[') {
        std::vector<std::vector<double>> rows;
        while (true) {
            rows.push_back(read_row(cur));
            cur.skip_blank();
            if (cur.peek() == ',') {
                cur.get();
                cur.skip_blank();
                continue;
            }
            break;
        }
        if (cur.peek() != ']') cur.fail("expected ']' closing matrix literal");
        cur.get();
        size_t cols = rows.front().size();
        for (const auto& r : rows)
            if (r.size() != cols) cur.fail("ragged matrix literal");
        val.matrix.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
        for (size_t r = 0; r < rows.size(); ++r)
            for (size_t c = 0; c < cols; ++c)
                val.matrix(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        return val;
    }
    // flat vector [a, b, ...]
    std::vector<double> row;
    while (cur.peek() != ']') {
        row.push_back(read_number(cur));
        cur.skip_blank();
        if (cur.peek() == ',') {
            cur.get();
            cur.skip_blank();
        } else if (cur.peek() != ']') {
            cur.fail("expected ',' or ']' in vector literal");
        }
    }
    cur.get();
    val.flat = true;
    val.matrix.resize(1, static_cast<Eigen::Index>(row.size()));
    for (size_t c = 0; c < row.size(); ++c) val.matrix(0, static_cast<Eigen::Index>(c)) = row[c];
    return val;
}

Value read_string(Cursor& cur) {
    Value val;
    val.kind = Value::Kind::String;
    val.line = cur.line();
    val.col = cur.col();
    cur.get();  // opening quote
    while (!cur.eof() && cur.peek() != '"') {
        if (cur.peek() == '\n') cur.fail("unterminated string");
        val.text.push_back(cur.get());
    }
    if (cur.eof()) cur.fail("unterminated string");
    cur.get();
    return val;
}

Value read_raw_text(Cursor& cur) {
    Value val;
    val.kind = Value::Kind::Text;
    val.line = cur.line();
    val.col = cur.col();
    while (!cur.eof() && cur.peek() != '\n' && cur.peek() != '#') val.text.push_back(cur.get());
    while (!val.text.empty() && std::isspace(static_cast<unsigned char>(val.text.back())))
        val.text.pop_back();
    if (val.text.empty()) cur.fail("expected a value");
    return val;
}

void parse_body(Cursor& cur, Section& section, bool top_level);

void parse_item(Cursor& cur, Section& section) {
    int line = cur.line();
    int col = cur.col();
    if (!is_ident_start(cur.peek())) cur.fail("expected an identifier");
    std::string name = read_ident(cur);
    int index = -1;
    cur.skip_inline_blank();
    if (cur.peek() == '[') {
        cur.get();
        cur.skip_inline_blank();
        double num = read_number(cur);
        index = static_cast<int>(num);
        if (static_cast<double>(index) != num || index < 0)
            cur.fail("section index must be a small non-negative integer");
        cur.skip_inline_blank();
        if (cur.peek() != ']') cur.fail("expected ']' after index");
        cur.get();
        cur.skip_inline_blank();
    }
    if (cur.peek() == '{') {
        cur.get();
        Section child;
        child.name = name;
        child.index = index;
        child.line = line;
        child.col = col;
        parse_body(cur, child, false);
        section.children.push_back(std::move(child));
        return;
    }
    if (cur.peek() != '=') cur.fail("expected '=' or '{' after '" + name + "'");
    cur.get();
    cur.skip_inline_blank();
    std::string key = index >= 0 ? name + "[" + std::to_string(index) + "]" : name;
    Value val;
    if (cur.peek() == '[') {
        val = read_matrix(cur);
    } else if (cur.peek() == '"') {
        val = read_string(cur);
    } else {
        val = read_raw_text(cur);
    }
    val.line = line;
    val.col = col;
    section.entries.emplace_back(std::move(key), std::move(val));
}

void parse_body(Cursor& cur, Section& section, bool top_level) {
    while (true) {
        cur.skip_blank();
        if (cur.eof()) {
            if (!top_level) cur.fail("unexpected end of file inside '" + section.name + "'");
            return;
        }
        if (cur.peek() == '}') {
            if (top_level) cur.fail("unmatched '}'");
            cur.get();
            return;
        }
        parse_item(cur, section);
    }
}

void write_value(std::ostream& os, const Value& val) {
    switch (val.kind) {
        case Value::Kind::Text:
            os << val.text;
            break;
        case Value::Kind::String:
            os << '"' << val.text << '"';
            break;
        case Value::Kind::Matrix: {
            const auto& m = val.matrix;
            if (val.flat && m.rows() <= 1) {
                os << '[';
                for (Eigen::Index c = 0; c < m.cols(); ++c) {
                    if (c) os << ", ";
                    os << format_number(m(0, c));
                }
                os << ']';
            } else {
                os << '[';
                for (Eigen::Index r = 0; r < m.rows(); ++r) {
                    if (r) os << ", ";
                    os << '[';
                    for (Eigen::Index c = 0; c < m.cols(); ++c) {
                        if (c) os << ", ";
                        os << format_number(m(r, c));
                    }
                    os << ']';
                }
                os << ']';
            }
            break;
        }
    }
}

void write_section(std::ostream& os, const Section& section, int depth) {
    std::string pad(static_cast<size_t>(depth) * 2, ' ');
    os << pad << section.name;
    if (section.index >= 0) os << '[' << section.index << ']';
    os << " {\n";
    std::string inner(static_cast<size_t>(depth + 1) * 2, ' ');
    for (const auto& [key, val] : section.entries) {
        os << inner << key << " = ";
        write_value(os, val);
        os << '\n';
    }
    for (const auto& child : section.children) write_section(os, child, depth + 1);
    os << pad << "}\n";
}

[[noreturn]] void fail_at(const Section& s, const std::string& message) {
    throw Error(ErrorKind::Parse, s.where() + ": " + message);
}

}  // namespace

const Section* Section::find(const std::string& name, int index) const {
    for (const auto& child : children)
        if (child.name == name && (index < 0 || child.index == index)) return &child;
    return nullptr;
}

const Section& Section::need(const std::string& name, int index) const {
    const Section* s = find(name, index);
    if (!s) {
        std::string label = index >= 0 ? name + "[" + std::to_string(index) + "]" : name;
        fail_at(*this, "missing required section '" + label + "'");
    }
    return *s;
}

std::vector<const Section*> Section::all(const std::string& name) const {
    std::vector<const Section*> out;
    for (const auto& child : children)
        if (child.name == name) out.push_back(&child);
    return out;
}

const Value* Section::find_value(const std::string& key) const {
    for (const auto& [k, v] : entries)
        if (k == key) return &v;
    return nullptr;
}

const Value& Section::need_value(const std::string& key) const {
    const Value* v = find_value(key);
    if (!v) fail_at(*this, "missing required key '" + key + "'");
    return *v;
}

double Section::scalar(const std::string& key) const {
    const Value& v = need_value(key);
    if (v.kind == Value::Kind::Matrix && v.matrix.size() == 1) return v.matrix(0, 0);
    if (v.kind != Value::Kind::Text) fail_at(*this, "key '" + key + "' is not a number");
    char* end = nullptr;
    double out = std::strtod(v.text.c_str(), &end);
    if (end != v.text.c_str() + v.text.size())
        fail_at(*this, "key '" + key + "' is not a number: '" + v.text + "'");
    return out;
}

double Section::scalar_or(const std::string& key, double fallback) const {
    return has(key) ? scalar(key) : fallback;
}

long Section::integer(const std::string& key) const {
    double v = scalar(key);
    long out = static_cast<long>(v);
    if (static_cast<double>(out) != v) fail_at(*this, "key '" + key + "' is not an integer");
    return out;
}

long Section::integer_or(const std::string& key, long fallback) const {
    return has(key) ? integer(key) : fallback;
}

std::string Section::text(const std::string& key) const {
    const Value& v = need_value(key);
    if (v.kind == Value::Kind::Matrix) fail_at(*this, "key '" + key + "' is not text");
    return v.text;
}

std::string Section::text_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
}

Eigen::MatrixXd Section::matrix(const std::string& key) const {
    const Value& v = need_value(key);
    if (v.kind != Value::Kind::Matrix) fail_at(*this, "key '" + key + "' is not a matrix literal");
    return v.matrix;
}

Eigen::VectorXd Section::vector(const std::string& key) const {
    Eigen::MatrixXd m = matrix(key);
    if (m.rows() == 1) return m.transpose().col(0);
    if (m.cols() == 1) return m.col(0);
    fail_at(*this, "key '" + key + "' is not a vector literal");
}

std::string Section::where() const {
    std::ostringstream os;
    os << "line " << line << ":" << col;
    return os.str();
}

Section parse(const std::string& text, const std::string& source) {
    Cursor cur(text, source);
    Section root;
    root.name = "(document)";
    parse_body(cur, root, true);
    return root;
}

std::string serialize(const Section& root) {
    std::ostringstream os;
    for (const auto& [key, val] : root.entries) {
        os << key << " = ";
        write_value(os, val);
        os << '\n';
    }
    for (const auto& child : root.children) write_section(os, child, 0);
    return os.str();
}

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

Value text_value(std::string text) {
    Value v;
    v.kind = Value::Kind::Text;
    v.text = std::move(text);
    return v;
}

Value string_value(std::string text) {
    Value v;
    v.kind = Value::Kind::String;
    v.text = std::move(text);
    return v;
}

Value matrix_value(const Eigen::MatrixXd& m) {
    Value v;
    v.kind = Value::Kind::Matrix;
    v.matrix = m;
    return v;
}

Value vector_value(const Eigen::VectorXd& vec) {
    Value v;
    v.kind = Value::Kind::Matrix;
    v.flat = true;
    v.matrix = vec.transpose();
    return v;
}

}  // namespace switsyn::doc
