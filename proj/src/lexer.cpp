#include "esp/lexer.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace esp::lex {

namespace {

constexpr std::array<std::string_view, 44> kKeywords{
    "auto",     "break",    "case",     "char",    "const",    "continue", "default",  "do",
    "double",   "else",     "enum",     "extern",  "float",    "for",      "goto",     "if",
    "inline",   "int",      "long",     "register", "restrict", "return",  "short",    "signed",
    "sizeof",   "static",   "struct",   "switch",  "typedef",  "union",    "unsigned", "void",
    "volatile", "while",    "_Bool",    "_Complex", "_Atomic", "_Alignas", "_Alignof", "_Noreturn",
    "_Static_assert", "_Thread_local", "bool", "__attribute__"};

// Longest first so that greedy matching picks "<<=" over "<<" over "<".
constexpr std::array<std::string_view, 24> kMultiPunct{
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=",
    "&&",  "||",  "+=",  "-=", "*=", "/=", "%=", "&=", "^=", "|=", "##", "::"};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

bool is_keyword(std::string_view word) {
  return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

int LexedFile::count_code_lines(int begin, int end) const {
  int n = 0;
  for (int l = std::max(begin, 1); l <= end && l <= int(code_lines.size()); ++l)
    if (code_lines[std::size_t(l - 1)]) ++n;
  return n;
}

LexedFile tokenize(std::string_view src) {
  LexedFile out;
  int line = 1;
  std::size_t i = 0;
  const std::size_t n = src.size();
  bool at_line_start = true;  // only whitespace seen since the last newline

  auto mark = [&](int l) {
    if (int(out.code_lines.size()) < l) out.code_lines.resize(std::size_t(l), false);
    out.code_lines[std::size_t(l - 1)] = true;
  };

  while (i < n) {
    char c = src[i];
    if (c == '\n') {
      ++line;
      ++i;
      at_line_start = true;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '/' && i + 1 < n && src[i + 1] == '/') {
      while (i < n && src[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < n && src[i + 1] == '*') {
      i += 2;
      while (i < n && !(src[i] == '*' && i + 1 < n && src[i + 1] == '/')) {
        if (src[i] == '\n') ++line;
        ++i;
      }
      i = std::min(n, i + 2);
      continue;
    }
    if (c == '#' && at_line_start) {
      Directive d{line, {}};
      ++i;
      while (i < n && src[i] != '\n') {
        if (src[i] == '\\' && i + 1 < n && src[i + 1] == '\n') {
          mark(line);
          ++line;
          i += 2;
          d.text.push_back(' ');
          continue;
        }
        if (src[i] == '/' && i + 1 < n && src[i + 1] == '/') {
          while (i < n && src[i] != '\n') ++i;
          break;
        }
        if (src[i] == '/' && i + 1 < n && src[i + 1] == '*') {
          i += 2;
          while (i < n && !(src[i] == '*' && i + 1 < n && src[i + 1] == '/')) {
            if (src[i] == '\n') ++line;
            ++i;
          }
          i = std::min(n, i + 2);
          d.text.push_back(' ');
          continue;
        }
        d.text.push_back(src[i]);
        ++i;
      }
      mark(d.line);
      auto first = d.text.find_first_not_of(" \t");
      d.text = first == std::string::npos ? std::string{} : d.text.substr(first);
      while (!d.text.empty() && std::isspace(static_cast<unsigned char>(d.text.back()))) d.text.pop_back();
      out.directives.push_back(std::move(d));
      continue;
    }
    at_line_start = false;
    mark(line);

    if (ident_start(c)) {
      std::size_t b = i;
      while (i < n && ident_char(src[i])) ++i;
      std::string word(src.substr(b, i - b));
      out.tokens.push_back({is_keyword(word) ? TokenKind::keyword : TokenKind::identifier, word, line});
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t b = i;
      while (i < n && (ident_char(src[i]) || src[i] == '.' ||
                       ((src[i] == '+' || src[i] == '-') && (src[i - 1] == 'e' || src[i - 1] == 'E' ||
                                                             src[i - 1] == 'p' || src[i - 1] == 'P'))))
        ++i;
      out.tokens.push_back({TokenKind::number, std::string(src.substr(b, i - b)), line});
      continue;
    }
    if (c == '"' || c == '\'') {
      const char quote = c;
      const int start_line = line;
      std::size_t b = i++;
      while (i < n && src[i] != quote) {
        if (src[i] == '\\' && i + 1 < n) {
          if (src[i + 1] == '\n') ++line;
          i += 2;
          continue;
        }
        if (src[i] == '\n') {  // unterminated literal; stop at end of line
          break;
        }
        ++i;
      }
      if (i < n && src[i] == quote) ++i;
      out.tokens.push_back({quote == '"' ? TokenKind::string : TokenKind::character,
                            std::string(src.substr(b, i - b)), start_line});
      for (int l = start_line; l <= line; ++l) mark(l);
      continue;
    }
    bool matched = false;
    for (auto p : kMultiPunct) {
      if (src.substr(i, p.size()) == p) {
        out.tokens.push_back({TokenKind::punct, std::string(p), line});
        i += p.size();
        matched = true;
        break;
      }
    }
    if (!matched) {
      out.tokens.push_back({TokenKind::punct, std::string(1, c), line});
      ++i;
    }
  }
  if (int(out.code_lines.size()) < line) out.code_lines.resize(std::size_t(line), false);
  return out;
}

}  // namespace esp::lex
