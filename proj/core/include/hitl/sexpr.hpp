#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hitl {

/// Error raised for malformed input text. Carries a 1-based source location
/// when one is known (line = 0 otherwise).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::size_t line = 0, std::size_t column = 0);

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

namespace sexpr {

/// A node of an s-expression tree: either an atom or a list of nodes.
struct Node {
  bool is_list = false;
  std::string atom;
  std::vector<Node> items;
  std::size_t line = 0;
  std::size_t column = 0;

  bool is_atom() const { return !is_list; }
  bool is_atom(std::string_view text) const { return !is_list && atom == text; }
  /// True for a list whose first element is the atom `head`.
  bool has_head(std::string_view head) const;
  const std::string& head() const;

  [[noreturn]] void fail(const std::string& message) const;
  double as_number() const;
  const std::string& as_symbol() const;
};

/// Parses every top-level form in `text`. Comments run from ';' to end of line.
std::vector<Node> parse_all(std::string_view text);

/// Renders a node on one line.
std::string to_string(const Node& node);

Node atom(std::string text);
Node list(std::vector<Node> items);

/// Formats a double so that parsing it back yields the same value.
std::string format_number(double value);

}  // namespace sexpr
}  // namespace hitl
