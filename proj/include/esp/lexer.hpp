#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace esp::lex {

enum class TokenKind { identifier, keyword, number, string, character, punct };

struct Token {
  TokenKind kind;
  std::string text;
  int line;
};

/// A preprocessor line with continuations joined; `text` excludes the '#'.
struct Directive {
  int line;
  std::string text;
};

struct LexedFile {
  std::vector<Token> tokens;
  std::vector<Directive> directives;
  /// code_lines[i] is true when line i+1 holds anything but whitespace and comments.
  std::vector<bool> code_lines;

  int count_code_lines(int begin, int end) const;
};

/// Comment-, string- and directive-aware tokenizer for C-like sources.
LexedFile tokenize(std::string_view source);

bool is_keyword(std::string_view word);

}  // namespace esp::lex
