#include "minmask/sexpr.hpp"

#include <cctype>

#include "minmask/errors.hpp"

namespace minmask {

namespace {

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  std::vector<SExpr> all() {
    std::vector<SExpr> out;
    skip();
    while (pos_ < text_.size()) {
      out.push_back(one());
      skip();
    }
    return out;
  }

 private:
  [[noreturn]] void fail(std::size_t at, const std::string& what) const {
    throw ParseError("byte " + std::to_string(at), what);
  }

  void skip() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == ';') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  SExpr one() {
    SExpr e;
    e.offset = pos_;
    const char c = text_[pos_];
    if (c == ')') fail(pos_, "unexpected ')'");
    if (c == '(') {
      e.is_list = true;
      ++pos_;
      while (true) {
        skip();
        if (pos_ >= text_.size()) fail(e.offset, "unclosed '('");
        if (text_[pos_] == ')') {
          ++pos_;
          return e;
        }
        e.items.push_back(one());
      }
    }
    if (c == '"' || c == '|') {
      const std::size_t start = pos_++;
      while (true) {
        if (pos_ >= text_.size()) fail(start, c == '"' ? "unterminated string" : "unterminated quoted symbol");
        if (text_[pos_] == c) {
          // SMT-LIB escapes '"' inside strings by doubling it.
          if (c == '"' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '"') {
            pos_ += 2;
            continue;
          }
          ++pos_;
          break;
        }
        ++pos_;
      }
      e.atom = std::string(text_.substr(start, pos_ - start));
      return e;
    }
    const std::size_t start = pos_;
    while (pos_ < text_.size()) {
      const char d = text_[pos_];
      if (d == '(' || d == ')' || d == ';' || d == '"' || std::isspace(static_cast<unsigned char>(d))) break;
      ++pos_;
    }
    e.atom = std::string(text_.substr(start, pos_ - start));
    return e;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<SExpr> parse_sexprs(std::string_view text) { return Reader(text).all(); }

std::string to_string(const SExpr& e) {
  if (!e.is_list) return e.atom;
  std::string out = "(";
  for (std::size_t i = 0; i < e.items.size(); ++i) {
    if (i) out += ' ';
    out += to_string(e.items[i]);
  }
  return out + ")";
}

}  // namespace minmask
