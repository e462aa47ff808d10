#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rosetta/common.hpp"

namespace rosetta::tokenization {

// Sentences are sequences of integer word ids; speech is a sequence of
// integer codec tokens. Both stay plain vectors so manifests stay trivial.
using WordSeq = std::vector<int32_t>;
using TokenSeq = std::vector<int32_t>;

// Shared text control tokens. Per-language word blocks start right after
// them, each block holding word ids 0..vocab_size-1 plus a trailing UNK.
enum TextSpecial : int32_t {
  kPadText = 0,
  kBos = 1,
  kEosText = 2,
  kSep = 3,
  kTaskS2tt = 4,
  kTaskT2st = 5,
};
inline constexpr int kNumTextSpecials = 6;

struct TextVocab {
  int words_per_language = 0;             // word ids 0..V-1; UNK word id == V
  std::vector<std::string> languages;     // registration order fixes blocks

  void validate() const;
  int language_index(const std::string& tag) const;  // ConfigError if absent
  int block_size() const { return words_per_language + 1; }
  int32_t unk_word() const { return words_per_language; }
  int32_t total_size() const {
    return kNumTextSpecials +
           static_cast<int32_t>(languages.size()) * block_size();
  }
  int32_t block_base(int lang_idx) const {
    return kNumTextSpecials + lang_idx * block_size();
  }
  // Token id of a word (UNK allowed); InputError when out of range.
  int32_t word_token(int lang_idx, int32_t word) const;

  TokenSeq encode(const WordSeq& words, const std::string& lang) const;
  // Strict inverse: PAD_T is stripped, any other id outside the language's
  // block is an input error.
  WordSeq decode(const TokenSeq& tokens, const std::string& lang) const;
  // Total variant for model output: control tokens are dropped, ids outside
  // the block map to UNK.
  WordSeq decode_lenient(const TokenSeq& tokens, const std::string& lang) const;
};

// Synthetic deterministic "codec". A word expands to `expansion` consecutive
// tokens; language and speaker tilt the code points:
//   body token(w, j) = (offset(lang) + w * expansion + j + jitter) mod codebook
// with jitter = speaker % jitter_range, plus `prefix_len` copies of a prefix
// token (offset(lang) + expansion * vocab_size + jitter) mod codebook that
// announces the jitter so decoding stays speaker-blind. EOS / PAD live just
// above the codebook.
struct CodecSpec {
  int codebook_size = 256;
  int expansion = 3;       // speech tokens per word
  int vocab_size = 50;     // word ids per language
  int frame_rate = 25;     // nominal tokens/sec; metadata only
  int jitter_range = 8;
  int prefix_len = 1;
  std::vector<std::string> languages = {"src", "tgt"};

  void validate() const;
  int32_t eos() const { return codebook_size; }
  int32_t pad() const { return codebook_size + 1; }
  int32_t total_size() const { return codebook_size + 2; }
  int language_index(const std::string& tag) const;  // ConfigError if absent
  int language_offset(const std::string& tag) const;
  int jitter_of(int speaker) const;
  int expected_speech_len(int n_words) const {
    return prefix_len + expansion * n_words;
  }
};

TokenSeq encode_speech(const CodecSpec& codec, const WordSeq& words,
                       const std::string& lang, int speaker);

// Total inverse: never throws on content. Corrupted or truncated blocks
// decode to the UNK word id (== vocab_size); an empty stream is an empty
// sentence; anything past the first EOS is ignored.
WordSeq decode_speech(const CodecSpec& codec, const TokenSeq& tokens,
                      const std::string& lang);

// Chunks a token stream into rows of `group_size`, padding the final row
// with `pad_token`. ungroup strips only trailing pads.
Grid2<int32_t> group_speech(const TokenSeq& tokens, int group_size,
                            int32_t pad_token);
TokenSeq ungroup_speech(const Grid2<int32_t>& grid, int32_t pad_token);

// How the G speech heads carve up the codec stream per backbone step.
//   grouped_tokens: each head owns one of G consecutive codec tokens and
//                   predicts over the full codebook (the default).
//   digit_factored: one codec token per step, split into G base-B digits
//                   with B^G == codebook_size; each head predicts a digit.
enum class SpeechHeadLayout { grouped_tokens, digit_factored };

struct SpeechLayoutSpec {
  SpeechHeadLayout mode = SpeechHeadLayout::grouped_tokens;
  int group_size = 4;     // G
  int codebook_size = 256;
  int digit_base = 0;     // digit mode only

  static SpeechLayoutSpec grouped(int g, const CodecSpec& codec);
  static SpeechLayoutSpec digits(int g, const CodecSpec& codec);  // needs B^G == codebook

  void validate() const;
  // Width of each speech head's logits: body symbols + EOS + PAD (PAD last).
  int32_t head_vocab() const;
  int32_t head_eos() const;
  int32_t head_pad() const { return head_vocab() - 1; }

  // Training-side: codec stream (terminal EOS already appended by the
  // caller) -> [steps][G] grid in head space, PAD-completed.
  Grid2<int32_t> to_step_grid(const TokenSeq& tokens_with_eos) const;

  // Inference-side: one emitted head tuple -> codec tokens appended to
  // `stream`. Returns true when the tuple terminates the speech stream.
  bool tuple_to_stream(const std::vector<int32_t>& tuple,
                       TokenSeq& stream) const;
};

}  // namespace rosetta::tokenization
