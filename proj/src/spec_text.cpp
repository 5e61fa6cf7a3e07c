#include "atlasdiffeo/spec_text.hpp"

#include "atlasdiffeo/errors.hpp"

#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace atlasdiffeo {

namespace {

using nlohmann::json;

class TextParser {
 public:
  explicit TextParser(std::string_view s) : s_(s) {}

  json run() {
    json root = json::object();
    json* current = &root;
    for (;;) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        const bool array = s_.substr(pos_, 2) == "[[";
        pos_ += array ? 2 : 1;
        std::vector<std::string> path = key_path();
        skip_inline_ws();
        if (array) expect_str("]]");
        else expect_str("]");
        current = &root;
        for (std::size_t i = 0; i < path.size(); ++i) {
          json& next = (*current)[path[i]];
          const bool last = i + 1 == path.size();
          if (last && array) {
            if (next.is_null()) next = json::array();
            if (!next.is_array()) fail("'" + path[i] + "' is not an array of tables");
            next.push_back(json::object());
            current = &next.back();
          } else {
            if (next.is_null()) next = json::object();
            if (next.is_array() && !next.empty()) current = &next.back();
            else if (next.is_object()) current = &next;
            else fail("'" + path[i] + "' is not a table");
          }
        }
        end_of_line();
        continue;
      }
      std::vector<std::string> path = key_path();
      skip_inline_ws();
      expect_str("=");
      json value = parse_value();
      assign(*current, path, std::move(value));
      end_of_line();
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line_) + ": " + msg);
  }
  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }
  void advance() {
    if (peek() == '\n') ++line_;
    ++pos_;
  }
  void skip_inline_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) advance();
  }
  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') advance();
  }
  void skip_blank_lines() {
    for (;;) {
      skip_inline_ws();
      skip_comment();
      if (peek() == '\n') {
        advance();
        continue;
      }
      return;
    }
  }
  // whitespace, comments and newlines inside arrays and inline tables
  void skip_any_ws() {
    for (;;) {
      skip_inline_ws();
      skip_comment();
      if (peek() == '\n') {
        advance();
        continue;
      }
      return;
    }
  }
  void end_of_line() {
    skip_inline_ws();
    skip_comment();
    if (eof()) return;
    if (peek() != '\n') fail(std::string("unexpected '") + peek() + "' after value");
    advance();
  }
  void expect_str(std::string_view t) {
    if (s_.substr(pos_, t.size()) != t) fail("expected '" + std::string(t) + "'");
    for (std::size_t i = 0; i < t.size(); ++i) advance();
  }

  std::vector<std::string> key_path() {
    std::vector<std::string> path;
    for (;;) {
      skip_inline_ws();
      if (peek() == '"') {
        path.push_back(basic_string());
      } else {
        const std::size_t start = pos_;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) advance();
        if (pos_ == start) fail("expected a key");
        path.emplace_back(s_.substr(start, pos_ - start));
      }
      skip_inline_ws();
      if (peek() != '.') return path;
      advance();
    }
  }

  static void assign(json& table, const std::vector<std::string>& path, json value) {
    json* t = &table;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      json& next = (*t)[path[i]];
      if (next.is_null()) next = json::object();
      if (!next.is_object()) throw Error(ErrorCode::ParseError, "key '" + path[i] + "' is not a table");
      t = &next;
    }
    if (t->contains(path.back())) throw Error(ErrorCode::ParseError, "duplicate key '" + path.back() + "'");
    (*t)[path.back()] = std::move(value);
  }

  std::string basic_string() {
    advance();  // opening quote
    std::string out;
    for (;;) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = peek();
      advance();
      if (c == '"') return out;
      if (c == '\\') {
        char e = peek();
        advance();
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: fail(std::string("unsupported escape '\\") + e + "'");
        }
      } else {
        out += c;
      }
    }
  }

  json parse_value() {
    skip_inline_ws();
    const char c = peek();
    if (c == '"') return basic_string();
    if (c == '\'') {
      advance();
      const std::size_t start = pos_;
      while (!eof() && peek() != '\'' && peek() != '\n') advance();
      if (peek() != '\'') fail("unterminated literal string");
      std::string out(s_.substr(start, pos_ - start));
      advance();
      return out;
    }
    if (c == '[') {
      advance();
      json arr = json::array();
      for (;;) {
        skip_any_ws();
        if (peek() == ']') {
          advance();
          return arr;
        }
        arr.push_back(parse_value());
        skip_any_ws();
        if (peek() == ',') {
          advance();
          continue;
        }
        if (peek() == ']') {
          advance();
          return arr;
        }
        fail("expected ',' or ']' in array");
      }
    }
    if (c == '{') {
      advance();
      json obj = json::object();
      for (;;) {
        skip_any_ws();
        if (peek() == '}') {
          advance();
          return obj;
        }
        std::vector<std::string> path = key_path();
        skip_inline_ws();
        expect_str("=");
        assign(obj, path, parse_value());
        skip_any_ws();
        if (peek() == ',') {
          advance();
          continue;
        }
        if (peek() == '}') {
          advance();
          return obj;
        }
        fail("expected ',' or '}' in inline table");
      }
    }
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    const std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                      peek() == '.' || peek() == '_'))
      advance();
    std::string tok(s_.substr(start, pos_ - start));
    std::erase(tok, '_');
    if (tok.empty()) fail("expected a value");
    const char* b = tok.data();
    if (*b == '+') ++b;
    const bool integral = tok.find_first_of(".eE") == std::string::npos;
    if (integral) {
      long long iv = 0;
      auto r = std::from_chars(b, tok.data() + tok.size(), iv);
      if (r.ec == std::errc() && r.ptr == tok.data() + tok.size()) return iv;
    }
    double v = 0.0;
    auto r = std::from_chars(b, tok.data() + tok.size(), v);
    if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) fail("malformed value '" + tok + "'");
    return v;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

}  // namespace

nlohmann::json parse_spec_text(std::string_view text) { return TextParser(text).run(); }

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xF];
    h >>= 4;
  }
  return out;
}

}  // namespace atlasdiffeo
