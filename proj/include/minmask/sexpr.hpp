#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace minmask {

/// Minimal S-expression tree for SMT-LIB documents and solver responses.
/// Comments (';' to end of line) are skipped; string literals and |quoted|
/// symbols are kept verbatim as atoms.
struct SExpr {
  bool is_list = false;
  std::string atom;
  std::vector<SExpr> items;
  std::size_t offset = 0;  // byte offset of the first character

  bool is_atom(std::string_view text) const { return !is_list && atom == text; }
  bool head_is(std::string_view text) const { return is_list && !items.empty() && items[0].is_atom(text); }
};

/// Parses every top-level expression. Throws ParseError("byte N", ...) on
/// unbalanced parentheses or unterminated literals.
std::vector<SExpr> parse_sexprs(std::string_view text);

std::string to_string(const SExpr& e);

}  // namespace minmask
