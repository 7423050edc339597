// expr.hpp - small arithmetic expression compiler for user-supplied vector fields
//
// Grammar: numbers, named variables, + - * / ^, unary minus, parentheses and
// the functions sin cos tan exp log sqrt tanh abs.

#pragma once

#include <memory>
#include <string>
#include <vector>

namespace decohist {

class Expression {
public:
    Expression() = default;

    // Throws std::invalid_argument with the offending position on parse errors
    // or unknown names.
    static Expression parse(const std::string& text, const std::vector<std::string>& variables);

    double eval(const double* vars) const;
    const std::string& text() const noexcept { return text_; }

    struct Node;

private:
    std::shared_ptr<const Node> root_;
    std::string text_;
};

}  // namespace decohist
