#include "headscope/tokenizer.hpp"

#include <algorithm>
#include <json.hpp>
#include <limits>
#include <map>

#include "headscope/detail/unicode.hpp"
#include "headscope/errors.hpp"
#include "headscope/file_io.hpp"

namespace headscope {
namespace {

using detail::Utf8Unit;

enum class CharClass { Letter, Number, Space, Other };

struct Unit {
  std::size_t offset;
  std::size_t length;
  char32_t cp;
  CharClass cls;
};

CharClass classify(const Utf8Unit& u) {
  if (!u.valid) return CharClass::Other;
  if (detail::is_letter(u.cp)) return CharClass::Letter;
  if (detail::is_number(u.cp)) return CharClass::Number;
  if (detail::is_space(u.cp)) return CharClass::Space;
  return CharClass::Other;
}

std::vector<Unit> decode_units(std::string_view text) {
  std::vector<Unit> units;
  units.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    const auto u = detail::decode_utf8(text, i);
    units.push_back({i, u.length, u.cp, classify(u)});
    i += u.length;
  }
  return units;
}

// Returns the unit index one past the piece starting at unit `i`.
std::size_t next_piece_end(const std::vector<Unit>& u, std::size_t i) {
  const std::size_t n = u.size();
  auto cp = [&](std::size_t k) { return k < n ? u[k].cp : char32_t{0}; };

  // Contractions: 's 't 're 've 'm 'll 'd
  if (u[i].cp == U'\'' && i + 1 < n) {
    const char32_t a = cp(i + 1);
    if (a == U's' || a == U't' || a == U'm' || a == U'd') return i + 2;
    const char32_t b = cp(i + 2);
    if (i + 2 < n && ((a == U'r' && b == U'e') || (a == U'v' && b == U'e') || (a == U'l' && b == U'l'))) {
      return i + 3;
    }
  }

  auto run = [&](std::size_t start, CharClass cls) {
    std::size_t j = start;
    while (j < n && u[j].cls == cls) ++j;
    return j;
  };
  // " ?X+" for letters, numbers and other (non-space, non-letter, non-number).
  for (CharClass cls : {CharClass::Letter, CharClass::Number, CharClass::Other}) {
    if (u[i].cp == U' ' && i + 1 < n && u[i + 1].cls == cls) return run(i + 1, cls);
    if (u[i].cls == cls) return run(i, cls);
  }

  // Whitespace: \s+(?!\S) leaves the last space for the following piece,
  // falling back to \s+ for a single space before non-space.
  const std::size_t j = run(i, CharClass::Space);
  if (j == n) return j;
  if (j - i >= 2) return j - 1;
  return j;
}

std::string merge_key(const std::string& a, const std::string& b) {
  std::string key;
  key.reserve(a.size() + b.size() + 1);
  key.append(a);
  key.push_back('\0');
  key.append(b);
  return key;
}

}  // namespace

std::array<char32_t, 256> gpt2_byte_to_codepoint() {
  std::array<char32_t, 256> table{};
  std::array<bool, 256> direct{};
  for (int b = '!'; b <= '~'; ++b) direct[static_cast<std::size_t>(b)] = true;
  for (int b = 0xA1; b <= 0xAC; ++b) direct[static_cast<std::size_t>(b)] = true;
  for (int b = 0xAE; b <= 0xFF; ++b) direct[static_cast<std::size_t>(b)] = true;
  char32_t next = 256;
  for (std::size_t b = 0; b < 256; ++b) table[b] = direct[b] ? static_cast<char32_t>(b) : next++;
  return table;
}

std::vector<std::string_view> pretokenize(std::string_view text) {
  const auto units = decode_units(text);
  std::vector<std::string_view> pieces;
  for (std::size_t i = 0; i < units.size();) {
    const std::size_t end = next_piece_end(units, i);
    const std::size_t begin_byte = units[i].offset;
    const std::size_t end_byte = end < units.size() ? units[end].offset : text.size();
    pieces.push_back(text.substr(begin_byte, end_byte - begin_byte));
    i = end;
  }
  return pieces;
}

TokenizerTables make_tokenizer_tables(std::vector<std::pair<std::string, TokenId>> vocab,
                                      std::vector<std::pair<std::string, std::string>> merges) {
  TokenizerTables t;
  const auto codepoints = gpt2_byte_to_codepoint();
  for (std::size_t b = 0; b < 256; ++b) detail::append_utf8(t.byte_to_unicode[b], codepoints[b]);

  const std::size_t n = vocab.size();
  t.id_to_token.assign(n, {});
  std::vector<bool> seen(n, false);
  for (auto& [token, id] : vocab) {
    if (id < 0 || static_cast<std::size_t>(id) >= n) {
      throw Error(ErrorCode::GapInIds, "id " + std::to_string(id) + " outside [0, " +
                                           std::to_string(n) + ") for " + std::to_string(n) + " entries");
    }
    if (seen[static_cast<std::size_t>(id)]) {
      throw Error(ErrorCode::DuplicateId, "id " + std::to_string(id) + " assigned to both '" +
                                              t.id_to_token[static_cast<std::size_t>(id)] + "' and '" +
                                              token + "'");
    }
    if (!t.token_to_id.emplace(token, id).second) {
      throw Error(ErrorCode::DuplicateId, "token '" + token + "' listed twice");
    }
    seen[static_cast<std::size_t>(id)] = true;
    t.id_to_token[static_cast<std::size_t>(id)] = token;
  }
  for (std::size_t b = 0; b < 256; ++b) {
    if (!t.token_to_id.contains(t.byte_to_unicode[b])) {
      throw Error(ErrorCode::InvalidConfig, "vocabulary lacks the token for byte " + std::to_string(b));
    }
  }
  int rank = 0;
  for (auto& [a, b] : merges) {
    if (t.merge_ranks.emplace(merge_key(a, b), rank).second) ++rank;
  }
  return t;
}

TokenizerTables TokenizerTables::byte_level() {
  const auto codepoints = gpt2_byte_to_codepoint();
  std::vector<std::pair<std::string, TokenId>> vocab;
  for (std::size_t b = 0; b < 256; ++b) {
    std::string s;
    detail::append_utf8(s, codepoints[b]);
    vocab.emplace_back(std::move(s), static_cast<TokenId>(b));
  }
  return make_tokenizer_tables(std::move(vocab), {});
}

TokenizerTables load_tokenizer_tables(const std::filesystem::path& vocab_path,
                                      const std::filesystem::path& merges_path) {
  nlohmann::json vocab_json;
  try {
    vocab_json = nlohmann::json::parse(read_text_file(vocab_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, vocab_path.string() + ": " + e.what());
  }
  if (!vocab_json.is_object()) throw Error(ErrorCode::InvalidConfig, vocab_path.string() + ": not an object");
  std::vector<std::pair<std::string, TokenId>> vocab;
  vocab.reserve(vocab_json.size());
  for (auto it = vocab_json.begin(); it != vocab_json.end(); ++it) {
    if (!it->is_number_integer()) {
      throw Error(ErrorCode::InvalidConfig, vocab_path.string() + ": id for '" + it.key() + "' is not an integer");
    }
    const auto id = it->get<long long>();
    if (id < 0 || id > std::numeric_limits<TokenId>::max()) {
      throw Error(ErrorCode::GapInIds, "id " + std::to_string(id) + " out of range");
    }
    vocab.emplace_back(it.key(), static_cast<TokenId>(id));
  }

  const std::string text = read_text_file(merges_path);
  std::vector<std::pair<std::string, std::string>> merges;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("#version", 0) == 0) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 == line.size() ||
        line.find(' ', sp + 1) != std::string::npos) {
      throw Error(ErrorCode::MalformedMergeLine,
                  merges_path.string() + ":" + std::to_string(line_no) + ": '" + line + "'");
    }
    merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return make_tokenizer_tables(std::move(vocab), std::move(merges));
}

void save_tokenizer_tables(const TokenizerTables& tables, const std::filesystem::path& vocab_path,
                           const std::filesystem::path& merges_path) {
  nlohmann::json vocab = nlohmann::json::object();
  for (std::size_t id = 0; id < tables.id_to_token.size(); ++id) vocab[tables.id_to_token[id]] = id;
  write_file_atomic(vocab_path, vocab.dump());

  std::vector<const std::string*> by_rank(tables.merge_ranks.size());
  for (const auto& [key, rank] : tables.merge_ranks) by_rank[static_cast<std::size_t>(rank)] = &key;
  std::string merges = "#version: 0.2\n";
  for (const auto* key : by_rank) {
    const auto sep = key->find('\0');
    merges += key->substr(0, sep) + " " + key->substr(sep + 1) + "\n";
  }
  write_file_atomic(merges_path, merges);
}

Tokenizer::Tokenizer(TokenizerTables tables) : tables_(std::move(tables)) {
  for (std::size_t b = 0; b < 256; ++b) {
    unicode_to_byte_.emplace(tables_.byte_to_unicode[b], static_cast<unsigned char>(b));
    auto it = tables_.token_to_id.find(tables_.byte_to_unicode[b]);
    if (it == tables_.token_to_id.end()) {
      throw Error(ErrorCode::InvalidConfig, "vocabulary lacks the token for byte " + std::to_string(b));
    }
    byte_token_[b] = it->second;
  }
}

void Tokenizer::bpe(std::string_view piece, std::vector<TokenId>& out) const {
  std::vector<std::string> symbols;
  symbols.reserve(piece.size());
  for (char c : piece) symbols.push_back(tables_.byte_to_unicode[static_cast<unsigned char>(c)]);

  while (symbols.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    std::size_t best = 0;
    for (std::size_t k = 0; k + 1 < symbols.size(); ++k) {
      auto it = tables_.merge_ranks.find(merge_key(symbols[k], symbols[k + 1]));
      if (it != tables_.merge_ranks.end() && it->second < best_rank) {
        best_rank = it->second;
        best = k;
      }
    }
    if (best_rank == std::numeric_limits<int>::max()) break;
    const std::string first = symbols[best];
    const std::string second = symbols[best + 1];
    std::vector<std::string> merged;
    merged.reserve(symbols.size());
    for (std::size_t k = 0; k < symbols.size();) {
      if (k + 1 < symbols.size() && symbols[k] == first && symbols[k + 1] == second) {
        merged.push_back(first + second);
        k += 2;
      } else {
        merged.push_back(std::move(symbols[k]));
        ++k;
      }
    }
    symbols = std::move(merged);
  }

  for (const auto& s : symbols) {
    auto it = tables_.token_to_id.find(s);
    if (it != tables_.token_to_id.end()) {
      out.push_back(it->second);
      continue;
    }
    // Merged symbol absent from the vocabulary: fall back to its bytes.
    for (std::size_t i = 0; i < s.size();) {
      const auto u = detail::decode_utf8(s, i);
      std::string ch(s.substr(i, u.length));
      out.push_back(byte_token_[unicode_to_byte_.at(ch)]);
      i += u.length;
    }
  }
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (auto piece : pretokenize(text)) bpe(piece, ids);
  return ids;
}

std::vector<TokenId> Tokenizer::encode_prefix(std::string_view text, std::size_t max_tokens) const {
  std::vector<TokenId> ids;
  for (auto piece : pretokenize(text)) {
    if (ids.size() >= max_tokens) break;
    bpe(piece, ids);
  }
  if (ids.size() > max_tokens) ids.resize(max_tokens);
  return ids;
}

void Tokenizer::check_id(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tables_.vocab_size()) {
    throw Error(ErrorCode::UnknownId, std::to_string(id));
  }
}

std::string Tokenizer::token_text(TokenId id) const {
  check_id(id);
  const std::string& token = tables_.id_to_token[static_cast<std::size_t>(id)];
  std::string bytes;
  for (std::size_t i = 0; i < token.size();) {
    const auto u = detail::decode_utf8(token, i);
    const std::string ch = token.substr(i, u.length);
    auto it = unicode_to_byte_.find(ch);
    if (it != unicode_to_byte_.end()) {
      bytes.push_back(static_cast<char>(it->second));
    } else {
      bytes.append(ch);
    }
    i += u.length;
  }
  return bytes;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += token_text(id);
  return out;
}

bool Tokenizer::is_word_token(TokenId id) const {
  const std::string text = token_text(id);
  std::string_view rest = text;
  if (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
  if (rest.empty()) return false;
  for (std::size_t i = 0; i < rest.size();) {
    const auto u = detail::decode_utf8(rest, i);
    if (!u.valid || !detail::is_letter(u.cp)) return false;
    i += u.length;
  }
  return true;
}

}  // namespace headscope
