#include "hitl/sexpr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace hitl {

namespace {

std::string with_location(const std::string& message, std::size_t line, std::size_t column) {
  if (line == 0) return message;
  return std::to_string(line) + ":" + std::to_string(column) + ": " + message;
}

}  // namespace

ParseError::ParseError(const std::string& message, std::size_t line, std::size_t column)
    : std::runtime_error(with_location(message, line, column)), line_(line), column_(column) {}

namespace sexpr {

bool Node::has_head(std::string_view h) const {
  return is_list && !items.empty() && items.front().is_atom(h);
}

const std::string& Node::head() const {
  if (!is_list || items.empty() || items.front().is_list) fail("expected a form with a symbol head");
  return items.front().atom;
}

void Node::fail(const std::string& message) const { throw ParseError(message, line, column); }

double Node::as_number() const {
  if (is_list) fail("expected a number, got a list");
  double value = 0.0;
  const char* begin = atom.data();
  const char* end = begin + atom.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) fail("expected a number, got '" + atom + "'");
  return value;
}

const std::string& Node::as_symbol() const {
  if (is_list) fail("expected a symbol, got a list");
  return atom;
}

namespace {

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  std::vector<Node> read_all() {
    std::vector<Node> forms;
    skip_space();
    while (pos_ < text_.size()) {
      forms.push_back(read());
      skip_space();
    }
    return forms;
  }

 private:
  Node read() {
    skip_space();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", line_, column_);
    const char c = text_[pos_];
    if (c == ')') throw ParseError("unexpected ')'", line_, column_);
    if (c == '(') return read_list();
    return read_atom();
  }

  Node read_list() {
    Node node;
    node.is_list = true;
    node.line = line_;
    node.column = column_;
    advance();  // '('
    for (;;) {
      skip_space();
      if (pos_ >= text_.size()) throw ParseError("unterminated list", node.line, node.column);
      if (text_[pos_] == ')') {
        advance();
        return node;
      }
      node.items.push_back(read());
    }
  }

  Node read_atom() {
    Node node;
    node.line = line_;
    node.column = column_;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')' || c == ';') break;
      node.atom.push_back(c);
      advance();
    }
    return node;
  }

  void skip_space() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == ';') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t column_ = 1;
};

void write(std::ostringstream& out, const Node& node) {
  if (!node.is_list) {
    out << node.atom;
    return;
  }
  out << '(';
  for (std::size_t i = 0; i < node.items.size(); ++i) {
    if (i > 0) out << ' ';
    write(out, node.items[i]);
  }
  out << ')';
}

}  // namespace

std::vector<Node> parse_all(std::string_view text) { return Reader(text).read_all(); }

std::string to_string(const Node& node) {
  std::ostringstream out;
  write(out, node);
  return out.str();
}

Node atom(std::string text) {
  Node n;
  n.atom = std::move(text);
  return n;
}

Node list(std::vector<Node> items) {
  Node n;
  n.is_list = true;
  n.items = std::move(items);
  return n;
}

std::string format_number(double value) {
  char buffer[64];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc()) throw std::runtime_error("format_number: conversion failed");
  return std::string(buffer, ptr);
}

}  // namespace sexpr
}  // namespace hitl
