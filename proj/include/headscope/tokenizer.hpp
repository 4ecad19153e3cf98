#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "headscope/model_io.hpp"

namespace headscope {

/// Vocabulary and merge tables for byte-level BPE.
struct TokenizerTables {
  /// UTF-8 encoding of the printable codepoint standing in for each byte.
  std::array<std::string, 256> byte_to_unicode;
  std::unordered_map<std::string, TokenId> token_to_id;
  std::vector<std::string> id_to_token;
  /// Key is `left + '\0' + right`; lower rank merges first.
  std::unordered_map<std::string, int> merge_ranks;

  std::size_t vocab_size() const { return id_to_token.size(); }

  /// Byte map plus a 256-entry vocabulary of single bytes and no merges.
  static TokenizerTables byte_level();
};

/// Validates ids (bijective, contiguous from 0) and ranks merges in order.
TokenizerTables make_tokenizer_tables(std::vector<std::pair<std::string, TokenId>> vocab,
                                      std::vector<std::pair<std::string, std::string>> merges);

/// Loads a JSON token->id vocabulary and a merges file (one space-separated
/// pair per line, optional leading `#version` line).
TokenizerTables load_tokenizer_tables(const std::filesystem::path& vocab_path,
                                      const std::filesystem::path& merges_path);

/// Writes the tables back as a JSON vocabulary and a ranked merges file.
void save_tokenizer_tables(const TokenizerTables& tables, const std::filesystem::path& vocab_path,
                           const std::filesystem::path& merges_path);

/// GPT-2's 256-entry byte -> printable codepoint table.
std::array<char32_t, 256> gpt2_byte_to_codepoint();

/// Splits text the way GPT-2's pre-tokenization regex does:
/// 's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
std::vector<std::string_view> pretokenize(std::string_view text);

class Tokenizer {
 public:
  explicit Tokenizer(TokenizerTables tables);

  /// Never fails: any byte sequence maps onto byte-level tokens.
  std::vector<TokenId> encode(std::string_view text) const;
  /// The first `max_tokens` ids of encode(text), without running BPE on
  /// the rest of the text.
  std::vector<TokenId> encode_prefix(std::string_view text, std::size_t max_tokens) const;
  std::string decode(std::span<const TokenId> ids) const;
  /// Decoded bytes of a single token.
  std::string token_text(TokenId id) const;
  /// True iff the decoded token is an optional single space followed by one
  /// or more letters.
  bool is_word_token(TokenId id) const;

  std::size_t vocab_size() const { return tables_.vocab_size(); }
  const TokenizerTables& tables() const { return tables_; }

 private:
  void bpe(std::string_view piece, std::vector<TokenId>& out) const;
  void check_id(TokenId id) const;

  TokenizerTables tables_;
  std::unordered_map<std::string, unsigned char> unicode_to_byte_;
  std::array<TokenId, 256> byte_token_{};
};

}  // namespace headscope
