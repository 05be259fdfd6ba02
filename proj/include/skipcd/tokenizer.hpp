#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "skipcd/config.hpp"
#include "skipcd/error.hpp"

namespace skipcd {

// Byte-level tokenizer: BOS=0, EOS=1, byte b -> token b+2.
class Tokenizer {
 public:
  explicit Tokenizer(int vocab_size) : vocab_size_(vocab_size) {
    if (vocab_size < 4) throw Error("tokenizer: vocab_size must be >= 4");
  }

  int vocab_size() const { return vocab_size_; }

  static constexpr Token byte_token(unsigned char b) { return static_cast<Token>(b) + 2; }
  static constexpr bool is_special(Token t) { return t == kBos || t == kEos; }

  std::vector<Token> encode(std::string_view text) const {
    std::vector<Token> out;
    out.reserve(text.size());
    for (char c : text) {
      const Token t = byte_token(static_cast<unsigned char>(c));
      if (t >= vocab_size_)
        throw Error("tokenizer: byte " + std::to_string(static_cast<unsigned char>(c)) +
                    " not representable with vocab_size " + std::to_string(vocab_size_));
      out.push_back(t);
    }
    return out;
  }

  // Special tokens and ids past the byte range decode to nothing.
  std::string decode(const std::vector<Token>& tokens) const {
    std::string out;
    out.reserve(tokens.size());
    for (Token t : tokens) out += token_bytes(t);
    return out;
  }

  std::string token_bytes(Token t) const {
    if (t < 0 || t >= vocab_size_) throw Error("tokenizer: token " + std::to_string(t) + " out of range");
    if (is_special(t) || t >= 258) return {};
    return std::string(1, static_cast<char>(t - 2));
  }

 private:
  int vocab_size_;
};

}  // namespace skipcd
