#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rosetta/common.hpp"
#include "rosetta/tokenization.hpp"

using namespace rosetta;
using namespace rosetta::tokenization;

namespace {

CodecSpec default_codec() {
  CodecSpec c;
  c.codebook_size = 256;
  c.expansion = 3;
  c.vocab_size = 50;
  c.jitter_range = 8;
  c.prefix_len = 1;
  c.languages = {"src", "tgt"};
  return c;
}

TextVocab default_vocab() {
  TextVocab v;
  v.words_per_language = 50;
  v.languages = {"src", "tgt"};
  return v;
}

}  // namespace

TEST_CASE("text vocab layout and sizes") {
  TextVocab v = default_vocab();
  v.validate();
  CHECK(v.total_size() == kNumTextSpecials + 2 * 51);
  CHECK(v.block_base(0) == kNumTextSpecials);
  CHECK(v.block_base(1) == kNumTextSpecials + 51);
  CHECK(v.unk_word() == 50);
  CHECK(v.language_index("tgt") == 1);
  CHECK_THROWS_AS(v.language_index("xx"), ConfigError);
}

TEST_CASE("text encode/decode round trip") {
  TextVocab v = default_vocab();
  WordSeq words = {0, 7, 49, 13};
  TokenSeq toks = v.encode(words, "tgt");
  for (int32_t t : toks) CHECK(t >= v.block_base(1));
  CHECK(v.decode(toks, "tgt") == words);

  SUBCASE("empty") {
    CHECK(v.encode({}, "src").empty());
    CHECK(v.decode({}, "src").empty());
  }
  SUBCASE("pad is stripped on decode") {
    TokenSeq padded = toks;
    padded.push_back(kPadText);
    padded.insert(padded.begin(), kPadText);
    CHECK(v.decode(padded, "tgt") == words);
  }
  SUBCASE("foreign token id is an input error") {
    TokenSeq bad = toks;
    bad.push_back(v.block_base(0));  // src-block token in a tgt decode
    CHECK_THROWS_AS(v.decode(bad, "tgt"), InputError);
    CHECK_THROWS_AS(v.decode({kSep}, "tgt"), InputError);
  }
  SUBCASE("lenient decode maps strays to UNK and drops controls") {
    TokenSeq messy = {kSep, toks[0], v.block_base(0), kEosText, toks[1]};
    WordSeq got = v.decode_lenient(messy, "tgt");
    CHECK(got == WordSeq{words[0], v.unk_word(), words[1]});
  }
  SUBCASE("out-of-range word id is an input error") {
    CHECK_THROWS_AS(v.encode({51}, "tgt"), InputError);
    CHECK_THROWS_AS(v.encode({-1}, "tgt"), InputError);
  }
}

TEST_CASE("speech encode matches the code-point formula") {
  // No prefix, no jitter: token(w, j) = w * expansion + j.
  CodecSpec c;
  c.codebook_size = 6561;
  c.expansion = 2;
  c.vocab_size = 100;
  c.jitter_range = 1;
  c.prefix_len = 0;
  c.languages = {"src", "tgt"};
  CHECK(encode_speech(c, {0, 1}, "src", 0) == TokenSeq{0, 1, 2, 3});

  // Language offset shifts the block; tgt sits half a codebook up.
  CHECK(encode_speech(c, {0, 1}, "tgt", 0) ==
        TokenSeq{3280, 3281, 3282, 3283});

  // Jitter shifts every body token and is announced by the prefix.
  CodecSpec d = default_codec();
  TokenSeq s0 = encode_speech(d, {5}, "src", 0);
  TokenSeq s1 = encode_speech(d, {5}, "src", 1);
  REQUIRE(s0.size() == 4);  // prefix + 3 body tokens
  CHECK(s0[0] == 3 * 50 + 0);
  CHECK(s1[0] == 3 * 50 + 1);
  for (int j = 0; j < 3; ++j) {
    CHECK(s0[1 + j] == 5 * 3 + j);
    CHECK(s1[1 + j] == 5 * 3 + j + 1);
  }
}

TEST_CASE("speech stream length follows the expansion factor") {
  CodecSpec c = default_codec();
  for (int n : {1, 4, 9}) {
    WordSeq words(n, 7);
    CHECK(static_cast<int>(encode_speech(c, words, "tgt", 3).size()) ==
          c.expected_speech_len(n));
  }
}

TEST_CASE("speech decode inverts encode across languages, speakers, lengths") {
  CodecSpec c = default_codec();
  Rng rng(41);
  for (int trial = 0; trial < 2000; ++trial) {
    int len = 1 + static_cast<int>(rng.uniform_int(12));
    WordSeq words(len);
    for (auto& w : words)
      w = static_cast<int32_t>(rng.uniform_int(c.vocab_size));
    std::string lang = rng.uniform_int(2) == 0 ? "src" : "tgt";
    int speaker = static_cast<int>(rng.uniform_int(64));
    TokenSeq speech = encode_speech(c, words, lang, speaker);
    CHECK(decode_speech(c, speech, lang) == words);
  }
}

TEST_CASE("speaker jitter never changes the decoded text") {
  CodecSpec c = default_codec();
  WordSeq words = {1, 2, 3, 4, 5};
  TokenSeq a = encode_speech(c, words, "src", 1);
  TokenSeq b = encode_speech(c, words, "src", 2);
  CHECK(a[0] != b[0]);                      // distinct speaker prefixes
  CHECK(a != b);                            // distinct streams
  CHECK(decode_speech(c, a, "src") == decode_speech(c, b, "src"));
}

TEST_CASE("speech decode is total") {
  CodecSpec c = default_codec();
  WordSeq words = {10, 20, 30};
  TokenSeq speech = encode_speech(c, words, "src", 0);

  SUBCASE("empty stream decodes to the empty sentence") {
    CHECK(decode_speech(c, {}, "src").empty());
  }
  SUBCASE("a corrupted block becomes UNK; neighbors survive") {
    TokenSeq bad = speech;
    bad[1 + 3] = static_cast<int32_t>((bad[1 + 3] + 7) % c.codebook_size);
    WordSeq got = decode_speech(c, bad, "src");
    REQUIRE(got.size() == 3);
    CHECK(got[0] == 10);
    CHECK(got[1] == c.vocab_size);  // UNK
    CHECK(got[2] == 30);
  }
  SUBCASE("trailing partial block becomes UNK") {
    TokenSeq cut = speech;
    cut.pop_back();
    WordSeq got = decode_speech(c, cut, "src");
    REQUIRE(got.size() == 3);
    CHECK(got[0] == 10);
    CHECK(got[1] == 20);
    CHECK(got[2] == c.vocab_size);
  }
  SUBCASE("stream of specials decodes without throwing") {
    TokenSeq junk = {c.pad(), c.pad(), c.pad(), c.pad()};
    WordSeq got = decode_speech(c, junk, "src");
    for (int32_t w : got) CHECK(w == c.vocab_size);
  }
  SUBCASE("everything after EOS is ignored") {
    TokenSeq with_eos = speech;
    with_eos.push_back(c.eos());
    with_eos.push_back(12345 % c.codebook_size);
    CHECK(decode_speech(c, with_eos, "src") == words);
  }
}

TEST_CASE("codec configuration validation") {
  CodecSpec c = default_codec();
  SUBCASE("jitter without a prefix is unrecoverable") {
    c.prefix_len = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("code region must fit the codebook") {
    c.codebook_size = 64;  // 3*50 + 8 > 64
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("unknown language") {
    CHECK_THROWS_AS(c.language_offset("nope"), ConfigError);
  }
}

TEST_CASE("grouping pads the final row and ungroup strips it") {
  const int32_t PAD = 257;
  Grid2<int32_t> g = group_speech({5, 6, 7, 8, 9}, 4, PAD);
  REQUIRE(g.n0 == 2);
  REQUIRE(g.n1 == 4);
  CHECK(g(0, 0) == 5);
  CHECK(g(0, 3) == 8);
  CHECK(g(1, 0) == 9);
  CHECK(g(1, 1) == PAD);
  CHECK(g(1, 2) == PAD);
  CHECK(g(1, 3) == PAD);
  CHECK(ungroup_speech(g, PAD) == TokenSeq{5, 6, 7, 8, 9});

  SUBCASE("divisible length needs no padding") {
    Grid2<int32_t> g2 = group_speech({1, 2, 3, 4}, 4, PAD);
    CHECK(g2.n0 == 1);
    for (int j = 0; j < 4; ++j) CHECK(g2(0, j) == j + 1);
  }
  SUBCASE("empty stream groups to zero rows") {
    Grid2<int32_t> g3 = group_speech({}, 4, PAD);
    CHECK(g3.n0 == 0);
    CHECK(ungroup_speech(g3, PAD).empty());
  }
}

TEST_CASE("group/ungroup round trip holds for all supported widths") {
  const int32_t PAD = 999;
  Rng rng(7);
  for (int g : {1, 2, 4, 8}) {
    for (int trial = 0; trial < 250; ++trial) {
      int len = static_cast<int>(rng.uniform_int(40));
      TokenSeq toks(len);
      for (auto& t : toks) t = static_cast<int32_t>(rng.uniform_int(900));
      // Trailing PADs in the source cannot survive (documented modulo).
      while (!toks.empty() && toks.back() == PAD) toks.pop_back();
      CHECK(ungroup_speech(group_speech(toks, g, PAD), PAD) == toks);
    }
  }
}

TEST_CASE("grouped head layout mirrors the codec token space") {
  CodecSpec c = default_codec();
  SpeechLayoutSpec lay = SpeechLayoutSpec::grouped(4, c);
  CHECK(lay.head_vocab() == c.total_size());
  CHECK(lay.head_eos() == c.eos());
  CHECK(lay.head_pad() == c.pad());

  TokenSeq stream = {3, 1, 4, 1, 5, 9, 2, c.eos()};
  Grid2<int32_t> grid = lay.to_step_grid(stream);
  CHECK(grid.n0 == 2);
  TokenSeq back;
  bool ended = false;
  for (int i = 0; i < grid.n0 && !ended; ++i) {
    std::vector<int32_t> tuple(grid.n1);
    for (int j = 0; j < grid.n1; ++j) tuple[j] = grid(i, j);
    ended = lay.tuple_to_stream(tuple, back);
  }
  CHECK(ended);
  CHECK(back == TokenSeq{3, 1, 4, 1, 5, 9, 2});
}

TEST_CASE("digit-factored head layout splits tokens into digits") {
  CodecSpec c = default_codec();  // 256 == 4^4
  SpeechLayoutSpec lay = SpeechLayoutSpec::digits(4, c);
  CHECK(lay.digit_base == 4);
  CHECK(lay.head_vocab() == 6);
  CHECK(lay.head_eos() == 4);

  TokenSeq stream = {255, 0, 27, c.eos()};
  Grid2<int32_t> grid = lay.to_step_grid(stream);
  REQUIRE(grid.n0 == 4);
  // 255 = 3333_4; 27 = 0123_4.
  for (int j = 0; j < 4; ++j) CHECK(grid(0, j) == 3);
  for (int j = 0; j < 4; ++j) CHECK(grid(1, j) == 0);
  CHECK(grid(2, 0) == 0);
  CHECK(grid(2, 1) == 1);
  CHECK(grid(2, 2) == 2);
  CHECK(grid(2, 3) == 3);
  for (int j = 0; j < 4; ++j) CHECK(grid(3, j) == lay.head_eos());

  TokenSeq back;
  bool ended = false;
  for (int i = 0; i < grid.n0 && !ended; ++i) {
    std::vector<int32_t> tuple(grid.n1);
    for (int j = 0; j < grid.n1; ++j) tuple[j] = grid(i, j);
    ended = lay.tuple_to_stream(tuple, back);
  }
  CHECK(ended);
  CHECK(back == TokenSeq{255, 0, 27});

  SUBCASE("non-power codebook is rejected") {
    CodecSpec bad = c;
    bad.codebook_size = 200;
    bad.vocab_size = 20;
    CHECK_THROWS_AS(SpeechLayoutSpec::digits(4, bad), ConfigError);
  }
}

TEST_CASE("derived seeds separate stages and records") {
  CHECK(derive_seed(7, "corpus") != derive_seed(7, "model"));
  CHECK(derive_seed(7, "corpus") != derive_seed(8, "corpus"));
  CHECK(mix_seed(7, 0) != mix_seed(7, 1));
}
