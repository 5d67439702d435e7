#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "invert/bitvector.hpp"
#include "invert/datamodel.hpp"
#include "invert/error.hpp"

namespace invert {

enum class BinaryOp { And, Or };

// Immutable boolean formula over atom indices (concepts, or neurons when used
// as a fuzzy circuit). Negation only appears on leaves. Copies share nodes.
class Formula {
public:
    enum class Kind { Leaf, And, Or };

    static Formula leaf(std::size_t index, bool negated = false) {
        auto n = std::make_shared<Node>();
        n->kind = Kind::Leaf;
        n->index = index;
        n->negated = negated;
        n->length = 1;
        return Formula(std::move(n));
    }
    static Formula combine(BinaryOp op, const Formula& left, const Formula& right) {
        auto n = std::make_shared<Node>();
        n->kind = op == BinaryOp::And ? Kind::And : Kind::Or;
        n->left = left.root_;
        n->right = right.root_;
        n->length = left.length() + right.length();
        return Formula(std::move(n));
    }
    static Formula conj(const Formula& l, const Formula& r) { return combine(BinaryOp::And, l, r); }
    static Formula disj(const Formula& l, const Formula& r) { return combine(BinaryOp::Or, l, r); }

    Kind kind() const noexcept { return root_->kind; }
    bool is_leaf() const noexcept { return root_->kind == Kind::Leaf; }
    std::size_t index() const noexcept { return root_->index; }
    bool negated() const noexcept { return root_->negated; }
    Formula left() const { return Formula(root_->left); }
    Formula right() const { return Formula(root_->right); }
    // Number of atom leaves; negation is free.
    std::size_t length() const noexcept { return root_->length; }

    // Pushes a negation down to the leaves (De Morgan).
    Formula negate() const {
        switch (kind()) {
            case Kind::Leaf: return leaf(index(), !negated());
            case Kind::And: return disj(left().negate(), right().negate());
            case Kind::Or: return conj(left().negate(), right().negate());
        }
        return *this;
    }

    std::size_t max_index() const {
        if (is_leaf()) return index();
        return std::max(left().max_index(), right().max_index());
    }

    void collect_indices(std::set<std::size_t>& out) const {
        if (is_leaf()) {
            out.insert(index());
            return;
        }
        left().collect_indices(out);
        right().collect_indices(out);
    }

    // Truth value under an assignment of atoms.
    template <class Assign>
    bool eval_bool(const Assign& atom) const {
        switch (kind()) {
            case Kind::Leaf: return atom(index()) != negated();
            case Kind::And: return left().eval_bool(atom) && right().eval_bool(atom);
            case Kind::Or: return left().eval_bool(atom) || right().eval_bool(atom);
        }
        return false;
    }

    friend bool operator==(const Formula& a, const Formula& b) {
        if (a.root_ == b.root_) return true;
        if (a.kind() != b.kind()) return false;
        if (a.is_leaf()) return a.index() == b.index() && a.negated() == b.negated();
        return a.left() == b.left() && a.right() == b.right();
    }

private:
    struct Node {
        Kind kind = Kind::Leaf;
        std::size_t index = 0;
        bool negated = false;
        std::shared_ptr<const Node> left, right;
        std::size_t length = 1;
    };
    explicit Formula(std::shared_ptr<const Node> n) : root_(std::move(n)) {}

    std::shared_ptr<const Node> root_;
};

// ---------------------------------------------------------------------------
// Text grammar
//
//   formula := or
//   or      := and ("OR" and)*
//   and     := unary ("AND" unary)*
//   unary   := "NOT" unary | atom
//   atom    := NAME | QUOTED_NAME | "(" formula ")"
//
// Keywords are case-insensitive, names case-sensitive. A quoted name is
// delimited by double quotes; \" and \\ escape inside it.
// ---------------------------------------------------------------------------

using NameResolver = std::function<std::optional<std::size_t>(std::string_view)>;

namespace formula_detail {

enum class Tok { LParen, RParen, And, Or, Not, Name, End };

struct Token {
    Tok kind;
    std::size_t pos;
    std::string text;
};

inline bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
            return false;
    return true;
}

inline bool is_name_char(char c) {
    return !std::isspace(static_cast<unsigned char>(c)) && c != '(' && c != ')' && c != '"';
}

inline std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (c == '(') {
            out.push_back({Tok::LParen, i++, "("});
        } else if (c == ')') {
            out.push_back({Tok::RParen, i++, ")"});
        } else if (c == '"') {
            const std::size_t start = i++;
            std::string name;
            bool closed = false;
            while (i < text.size()) {
                if (text[i] == '\\' && i + 1 < text.size()) {
                    name += text[i + 1];
                    i += 2;
                } else if (text[i] == '"') {
                    ++i;
                    closed = true;
                    break;
                } else {
                    name += text[i++];
                }
            }
            if (!closed) throw Error(ErrorKind::SyntaxError, "unterminated quoted name", start);
            out.push_back({Tok::Name, start, std::move(name)});
        } else {
            const std::size_t start = i;
            while (i < text.size() && is_name_char(text[i])) ++i;
            std::string_view word = text.substr(start, i - start);
            Tok kind = Tok::Name;
            if (iequals(word, "AND"))
                kind = Tok::And;
            else if (iequals(word, "OR"))
                kind = Tok::Or;
            else if (iequals(word, "NOT"))
                kind = Tok::Not;
            out.push_back({kind, start, std::string(word)});
        }
    }
    out.push_back({Tok::End, text.size(), ""});
    return out;
}

class Parser {
public:
    Parser(std::vector<Token> tokens, const NameResolver& resolve) : toks_(std::move(tokens)), resolve_(resolve) {}

    Formula parse() {
        Formula f = parse_or();
        if (peek().kind != Tok::End) fail("unexpected '" + peek().text + "'");
        return f;
    }

private:
    const Token& peek() const { return toks_[i_]; }
    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorKind::SyntaxError, what + " at position " + std::to_string(peek().pos), peek().pos);
    }

    Formula parse_or() {
        Formula f = parse_and();
        while (peek().kind == Tok::Or) {
            ++i_;
            f = Formula::disj(f, parse_and());
        }
        return f;
    }
    Formula parse_and() {
        Formula f = parse_unary();
        while (peek().kind == Tok::And) {
            ++i_;
            f = Formula::conj(f, parse_unary());
        }
        return f;
    }
    Formula parse_unary() {
        if (peek().kind == Tok::Not) {
            ++i_;
            return parse_unary().negate();
        }
        return parse_atom();
    }
    Formula parse_atom() {
        const Token& t = peek();
        if (t.kind == Tok::LParen) {
            ++i_;
            Formula f = parse_or();
            if (peek().kind != Tok::RParen) fail("expected ')'");
            ++i_;
            return f;
        }
        if (t.kind != Tok::Name) fail(t.kind == Tok::End ? "unexpected end of formula" : "expected a name");
        auto idx = resolve_(t.text);
        if (!idx) throw Error(ErrorKind::UnknownConcept, "unknown name '" + t.text + "'", t.pos, Error::npos, t.text);
        ++i_;
        return Formula::leaf(*idx);
    }

    std::vector<Token> toks_;
    const NameResolver& resolve_;
    std::size_t i_ = 0;
};

inline bool needs_quotes(std::string_view name) {
    if (name.empty()) return true;
    if (iequals(name, "AND") || iequals(name, "OR") || iequals(name, "NOT")) return true;
    return !std::all_of(name.begin(), name.end(), is_name_char);
}

inline std::string quote_name(std::string_view name) {
    if (!needs_quotes(name)) return std::string(name);
    std::string out = "\"";
    for (char c : name) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

inline int precedence(const Formula& f) {
    switch (f.kind()) {
        case Formula::Kind::Or: return 1;
        case Formula::Kind::And: return 2;
        case Formula::Kind::Leaf: return 3;
    }
    return 3;
}

inline void format_into(std::string& out, const Formula& f, std::span<const std::string> names) {
    if (f.is_leaf()) {
        if (f.negated()) out += "NOT ";
        out += quote_name(f.index() < names.size() ? names[f.index()] : "#" + std::to_string(f.index()));
        return;
    }
    const int p = precedence(f);
    const Formula l = f.left(), r = f.right();
    // Left-associative: a same-precedence right operand keeps its parentheses.
    const bool paren_l = precedence(l) < p;
    const bool paren_r = precedence(r) <= p;
    if (paren_l) out += '(';
    format_into(out, l, names);
    if (paren_l) out += ')';
    out += f.kind() == Formula::Kind::And ? " AND " : " OR ";
    if (paren_r) out += '(';
    format_into(out, r, names);
    if (paren_r) out += ')';
}

struct KeyParts {
    std::uint32_t length = 0;
    std::string leaves;
    std::string shape;

    std::string full() const {
        std::string k;
        for (int s = 24; s >= 0; s -= 8) k += static_cast<char>((length >> s) & 0xFF);
        return k + leaves + shape;
    }
};

inline void flatten(const Formula& f, Formula::Kind op, std::vector<Formula>& out) {
    if (f.kind() == op) {
        flatten(f.left(), op, out);
        flatten(f.right(), op, out);
    } else {
        out.push_back(f);
    }
}

inline KeyParts key_parts(const Formula& f) {
    KeyParts k;
    if (f.is_leaf()) {
        const auto atom = static_cast<std::uint32_t>((f.index() << 1) | (f.negated() ? 1u : 0u));
        k.length = 1;
        for (int s = 24; s >= 0; s -= 8) k.leaves += static_cast<char>((atom >> s) & 0xFF);
        k.shape = "L";
        return k;
    }
    std::vector<Formula> operands;
    flatten(f, f.kind(), operands);
    std::vector<std::pair<std::string, KeyParts>> children;
    children.reserve(operands.size());
    for (const auto& o : operands) {
        KeyParts c = key_parts(o);
        std::string full = c.full();
        children.emplace_back(std::move(full), std::move(c));
    }
    std::sort(children.begin(), children.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    k.shape += f.kind() == Formula::Kind::And ? 'A' : 'O';
    k.shape += static_cast<char>((children.size() >> 8) & 0xFF);
    k.shape += static_cast<char>(children.size() & 0xFF);
    for (auto& [full, c] : children) {
        k.length += c.length;
        k.leaves += c.leaves;
        k.shape += c.shape;
    }
    return k;
}

} // namespace formula_detail

inline Formula parse_formula(std::string_view text, const NameResolver& resolve) {
    formula_detail::Parser p(formula_detail::tokenize(text), resolve);
    return p.parse();
}

inline Formula parse_formula(std::string_view text, std::span<const std::string> names) {
    NameResolver resolve = [names](std::string_view n) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == n) return i;
        return std::nullopt;
    };
    return parse_formula(text, resolve);
}

// Minimal-parentheses rendering; parse_formula maps it back to the same tree.
inline std::string format_formula(const Formula& f, std::span<const std::string> names) {
    std::string out;
    formula_detail::format_into(out, f, names);
    return out;
}

// Byte string giving a total order on formulas that is blind to the order of
// operands of AND/OR and to their associativity. The leading four bytes are
// the big-endian length, so shorter formulas always sort first; after that
// come the canonically ordered leaf atoms, then the operator shape.
inline std::string canonical_key(const Formula& f) { return formula_detail::key_parts(f).full(); }

inline BitVector eval_formula(const Formula& f, std::span<const BitVector> columns) {
    switch (f.kind()) {
        case Formula::Kind::Leaf: {
            BitVector v = columns[f.index()];
            return f.negated() ? v.flip() : v;
        }
        case Formula::Kind::And: return eval_formula(f.left(), columns) & eval_formula(f.right(), columns);
        case Formula::Kind::Or: return eval_formula(f.left(), columns) | eval_formula(f.right(), columns);
    }
    return {};
}

inline BitVector eval_formula(const Formula& f, const ConceptMatrix& concepts) {
    if (f.max_index() >= concepts.n_concepts())
        throw Error(ErrorKind::InvalidArgument, "formula references concept " + std::to_string(f.max_index()) +
                                                    " of " + std::to_string(concepts.n_concepts()));
    return eval_formula(f, concepts.columns());
}

// Truth-table equivalence over the union of atoms used by both formulas.
inline bool logically_equivalent(const Formula& a, const Formula& b) {
    std::set<std::size_t> atoms;
    a.collect_indices(atoms);
    b.collect_indices(atoms);
    if (atoms.size() > 24) throw Error(ErrorKind::InstanceTooLarge, "too many atoms for a truth table");
    const std::vector<std::size_t> vars(atoms.begin(), atoms.end());
    for (std::uint64_t assignment = 0; assignment < (std::uint64_t{1} << vars.size()); ++assignment) {
        auto atom = [&](std::size_t idx) {
            const auto it = std::lower_bound(vars.begin(), vars.end(), idx);
            return ((assignment >> (it - vars.begin())) & 1u) != 0;
        };
        if (a.eval_bool(atom) != b.eval_bool(atom)) return false;
    }
    return true;
}

} // namespace invert
