#include "decohist/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace decohist {

struct Expression::Node {
    enum Kind { Number, Variable, Neg, Add, Sub, Mul, Div, Pow, Call } kind;
    double value{0.0};
    int index{0};
    double (*fn)(double){nullptr};
    std::shared_ptr<const Node> a, b;
};

namespace {

using NodeP = std::shared_ptr<const Expression::Node>;
using Node = Expression::Node;

NodeP make(Node::Kind k, NodeP a = nullptr, NodeP b = nullptr) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

struct Function {
    const char* name;
    double (*fn)(double);
};

const Function functions[] = {
    {"sin", [](double v) { return std::sin(v); }},   {"cos", [](double v) { return std::cos(v); }},
    {"tan", [](double v) { return std::tan(v); }},   {"exp", [](double v) { return std::exp(v); }},
    {"log", [](double v) { return std::log(v); }},   {"sqrt", [](double v) { return std::sqrt(v); }},
    {"tanh", [](double v) { return std::tanh(v); }}, {"abs", [](double v) { return std::abs(v); }},
};

class Parser {
public:
    Parser(const std::string& s, const std::vector<std::string>& vars) : s_(s), vars_(vars) {}

    NodeP parse() {
        NodeP n = expr();
        skip();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return n;
    }

private:
    const std::string& s_;
    const std::vector<std::string>& vars_;
    std::size_t pos_{0};

    [[noreturn]] void fail(const std::string& msg) const {
        throw std::invalid_argument("expression '" + s_ + "' at column " + std::to_string(pos_ + 1) + ": " + msg);
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodeP expr() {
        NodeP n = term();
        for (;;) {
            if (accept('+')) n = make(Node::Add, n, term());
            else if (accept('-')) n = make(Node::Sub, n, term());
            else return n;
        }
    }

    NodeP term() {
        NodeP n = unary();
        for (;;) {
            if (accept('*')) n = make(Node::Mul, n, unary());
            else if (accept('/')) n = make(Node::Div, n, unary());
            else return n;
        }
    }

    NodeP unary() {
        if (accept('-')) return make(Node::Neg, unary());
        if (accept('+')) return unary();
        return power();
    }

    // right associative; -x^2 parses as -(x^2)
    NodeP power() {
        NodeP base = primary();
        if (accept('^')) return make(Node::Pow, base, unary());
        return base;
    }

    NodeP primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            NodeP n = expr();
            if (!accept(')')) fail("expected ')'");
            return n;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = s_.c_str() + pos_;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) fail("bad number");
            pos_ += static_cast<std::size_t>(end - begin);
            auto n = std::make_shared<Node>();
            n->kind = Node::Number;
            n->value = v;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
            const std::string name = s_.substr(start, pos_ - start);
            for (std::size_t i = 0; i < vars_.size(); ++i) {
                if (vars_[i] == name) {
                    auto n = std::make_shared<Node>();
                    n->kind = Node::Variable;
                    n->index = static_cast<int>(i);
                    return n;
                }
            }
            if (name == "pi") {
                auto n = std::make_shared<Node>();
                n->kind = Node::Number;
                n->value = std::acos(-1.0);
                return n;
            }
            for (const auto& f : functions) {
                if (name == f.name) {
                    if (!accept('(')) fail("expected '(' after " + name);
                    NodeP arg = expr();
                    if (!accept(')')) fail("expected ')'");
                    auto n = std::make_shared<Node>();
                    n->kind = Node::Call;
                    n->fn = f.fn;
                    n->a = arg;
                    return n;
                }
            }
            pos_ = start;
            fail("unknown name '" + name + "'");
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }
};

double eval_node(const Node& n, const double* v) {
    switch (n.kind) {
        case Node::Number: return n.value;
        case Node::Variable: return v[n.index];
        case Node::Neg: return -eval_node(*n.a, v);
        case Node::Add: return eval_node(*n.a, v) + eval_node(*n.b, v);
        case Node::Sub: return eval_node(*n.a, v) - eval_node(*n.b, v);
        case Node::Mul: return eval_node(*n.a, v) * eval_node(*n.b, v);
        case Node::Div: return eval_node(*n.a, v) / eval_node(*n.b, v);
        case Node::Pow: return std::pow(eval_node(*n.a, v), eval_node(*n.b, v));
        case Node::Call: return n.fn(eval_node(*n.a, v));
    }
    return 0.0;
}

}  // namespace

Expression Expression::parse(const std::string& text, const std::vector<std::string>& variables) {
    Expression e;
    e.root_ = Parser(text, variables).parse();
    e.text_ = text;
    return e;
}

double Expression::eval(const double* vars) const {
    if (!root_) throw std::logic_error("Expression: evaluating an empty expression");
    return eval_node(*root_, vars);
}

}  // namespace decohist
