#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>

#include "headscope/tokenizer.hpp"
#include "test_support.hpp"

namespace headscope {
namespace {

using testing::data_path;
using testing::gpt2_tokenizer;
using testing::TempDir;

TEST(Tokenizer, PublishedTablesHaveExpectedSizes) {
  const auto& tok = gpt2_tokenizer();
  EXPECT_EQ(tok.vocab_size(), 50257u);
  EXPECT_EQ(tok.tables().merge_ranks.size(), 50000u);
}

TEST(Tokenizer, ByteMapIsInjectiveAndTotal) {
  const auto map = gpt2_byte_to_codepoint();
  std::set<char32_t> seen(map.begin(), map.end());
  EXPECT_EQ(seen.size(), 256u);
  EXPECT_EQ(map['A'], U'A');
  EXPECT_EQ(map[' '], U'Ġ');
}

TEST(Tokenizer, MatchesReferenceIdsOnParityCorpus) {
  const auto& tok = gpt2_tokenizer();
  std::ifstream in(data_path("tokenizer_parity.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto text = j.at("text").get<std::string>();
    EXPECT_EQ(tok.encode(text), j.at("ids").get<std::vector<TokenId>>()) << text;
    EXPECT_EQ(tok.decode(tok.encode(text)), text);
    ++n;
  }
  EXPECT_EQ(n, 100);
}

TEST(Tokenizer, KnownSingleTokenFacts) {
  const auto& tok = gpt2_tokenizer();
  const auto facts = testing::read_json(data_path("tokenizer_facts.json"));
  for (const auto& [text, ids] : facts.items()) {
    EXPECT_EQ(tok.encode(text), ids.get<std::vector<TokenId>>()) << text;
  }
  const auto go = tok.encode(" go");
  ASSERT_EQ(go.size(), 1u);
  EXPECT_EQ(tok.token_text(go[0]), " go");
}

TEST(Tokenizer, EmptyInputsRoundTrip) {
  const auto& tok = gpt2_tokenizer();
  EXPECT_TRUE(tok.encode("").empty());
  EXPECT_EQ(tok.decode(std::vector<TokenId>{}), "");
  EXPECT_EQ(tok.decode(tok.encode("Hello, world")), "Hello, world");
  const std::string fig = "while baseball stadiums can come and";
  EXPECT_EQ(tok.decode(tok.encode(fig)), fig);
}

TEST(Tokenizer, OutOfRangeIdIsUnknown) {
  const auto& tok = gpt2_tokenizer();
  const std::vector<TokenId> bad = {static_cast<TokenId>(tok.vocab_size())};
  EXPECT_ERROR_CODE(tok.decode(bad), ErrorCode::UnknownId);
  EXPECT_ERROR_CODE(tok.is_word_token(-1), ErrorCode::UnknownId);
}

TEST(Tokenizer, WordTokenFilter) {
  const auto& tok = gpt2_tokenizer();
  EXPECT_TRUE(tok.is_word_token(467));     // " go"
  EXPECT_TRUE(tok.is_word_token(15496));   // "Hello"
  EXPECT_FALSE(tok.is_word_token(2235));   // "##"
  EXPECT_FALSE(tok.is_word_token(17031));  // " 123"
  EXPECT_FALSE(tok.is_word_token(220));    // " "
}

TEST(Tokenizer, PretokenizerFollowsGpt2Pattern) {
  const auto pieces = pretokenize("I'm here  don't 42x!!\n\n end");
  const std::vector<std::string_view> expected = {"I", "'m", " here", " ", " don", "'t", " 42", "x", "!!", "\n\n", " end"};
  EXPECT_EQ(pieces, expected);
}

TEST(Tokenizer, EncodePrefixAgreesWithFullEncode) {
  const auto& tok = gpt2_tokenizer();
  const std::string text = "The quick brown fox jumps over the lazy dog, again and again and again.";
  const auto full = tok.encode(text);
  for (std::size_t n = 0; n <= full.size() + 2; ++n) {
    const auto prefix = tok.encode_prefix(text, n);
    ASSERT_EQ(prefix, std::vector<TokenId>(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(std::min(n, full.size()))));
  }
}

std::string random_utf8(std::mt19937_64& rng, std::size_t n) {
  static const std::vector<char32_t> pool = {U'a', U'Z', U' ', U'\n', U'\t', U'7', U'\'', U'!', U'é', U'ß', U'Ω',
                                             U'中', U'文', U'😀', U' ', U' ', U'ـ', U'٣', U'k'};
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::uniform_int_distribution<int> any(1, 0x10FFFF);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    char32_t c = rng() % 8 == 0 ? static_cast<char32_t>(any(rng)) : pool[pick(rng)];
    if (c >= 0xD800 && c <= 0xDFFF) c = U'x';
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (c >> 12)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (c >> 18)));
      out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

TEST(Tokenizer, RoundTripOnGeneratedUtf8) {
  const auto& tok = gpt2_tokenizer();
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 500; ++i) {
    const auto text = random_utf8(rng, 1 + rng() % 40);
    const auto ids = tok.encode(text);
    for (auto id : ids) ASSERT_LT(static_cast<std::size_t>(id), tok.vocab_size());
    ASSERT_EQ(tok.decode(ids), text);
  }
}

TEST(Tokenizer, ArbitraryBytesStillEncode) {
  const auto& tok = gpt2_tokenizer();
  std::string bytes;
  for (int b = 0; b < 256; ++b) bytes.push_back(static_cast<char>(b));
  EXPECT_EQ(tok.decode(tok.encode(bytes)), bytes);
}

TEST(TokenizerTables, DuplicateIdIsRejected) {
  TempDir dir;
  write_file_atomic(dir / "vocab.json", R"({"a": 0, "b": 1, "c": 2, "d": 3, "e": 4, "f": 5, "g": 6, "h": 7, "i": 7})");
  write_file_atomic(dir / "merges.txt", "#version: 0.2\n");
  EXPECT_ERROR_CODE(load_tokenizer_tables(dir / "vocab.json", dir / "merges.txt"), ErrorCode::DuplicateId);
}

TEST(TokenizerTables, GapAndMalformedMergeAreRejected) {
  EXPECT_ERROR_CODE(make_tokenizer_tables({{"a", 0}, {"b", 2}}, {}), ErrorCode::GapInIds);
  TempDir dir;
  write_file_atomic(dir / "vocab.json", R"({"a": 0, "b": 1})");
  write_file_atomic(dir / "merges.txt", "#version: 0.2\na b c\n");
  EXPECT_ERROR_CODE(load_tokenizer_tables(dir / "vocab.json", dir / "merges.txt"), ErrorCode::MalformedMergeLine);
}

TEST(TokenizerTables, ByteVocabWithEmptyMergesIsValid) {
  TempDir dir;
  save_tokenizer_tables(TokenizerTables::byte_level(), dir / "vocab.json", dir / "merges.txt");
  write_file_atomic(dir / "merges.txt", "");
  const Tokenizer tok(load_tokenizer_tables(dir / "vocab.json", dir / "merges.txt"));
  EXPECT_EQ(tok.vocab_size(), 256u);
  EXPECT_TRUE(tok.tables().merge_ranks.empty());
  const std::string text = "byte level only";
  EXPECT_EQ(tok.encode(text).size(), text.size());
  EXPECT_EQ(tok.decode(tok.encode(text)), text);
}

TEST(TokenizerTables, SaveLoadRoundTrip) {
  TempDir dir;
  const auto& tok = gpt2_tokenizer();
  save_tokenizer_tables(tok.tables(), dir / "vocab.json", dir / "merges.txt");
  const Tokenizer back(load_tokenizer_tables(dir / "vocab.json", dir / "merges.txt"));
  EXPECT_EQ(back.tables().id_to_token, tok.tables().id_to_token);
  EXPECT_EQ(back.tables().merge_ranks, tok.tables().merge_ranks);
}

}  // namespace
}  // namespace headscope
