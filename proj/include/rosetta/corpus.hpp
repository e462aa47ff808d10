#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rosetta/common.hpp"
#include "rosetta/tokenization.hpp"

namespace rosetta::corpus {

using tokenization::CodecSpec;
using tokenization::TokenSeq;
using tokenization::WordSeq;

// An invertible positional permutation applied on top of the word-level
// dictionary; together they make the toy translation exactly reversible.
enum class ReorderKind { identity, reverse, rotate };

struct ReorderRule {
  ReorderKind kind = ReorderKind::identity;
  int k = 0;  // left-rotation amount, rotate only

  static ReorderRule parse(const std::string& text);  // "identity" | "reverse" | "rotate:K"
  std::string to_string() const;
};

WordSeq apply_reorder(const ReorderRule& rule, const WordSeq& words);
WordSeq invert_reorder(const ReorderRule& rule, const WordSeq& words);

// A fully specified toy translation pair: a bijective word dictionary plus
// a reorder rule, with the codec-facing expansion / speaker parameters.
struct LanguagePairSpec {
  uint64_t seed = 0;
  int vocab_size = 0;
  std::vector<int32_t> dict_fwd;  // src word -> tgt word (bijection)
  std::vector<int32_t> dict_bwd;  // inverse
  ReorderRule reorder;
  int expansion_factor = 3;  // speech tokens per word
  int speaker_count = 1;
  std::string src_tag = "src";
  std::string tgt_tag = "tgt";

  void validate() const;
};

struct GenOptions {
  int expansion_factor = 3;
  int speaker_count = 2;
  std::string src_tag = "src";
  std::string tgt_tag = "tgt";
};

// Deterministic in every field for a fixed (seed, vocab_size, rule, opts);
// the dictionary is a uniformly random bijection under `seed`.
LanguagePairSpec gen_language_pair(uint64_t seed, int vocab_size,
                                   ReorderRule rule, GenOptions opts = {});

enum class Side { source, target };

struct Utterance {
  std::string id;
  std::string language;
  WordSeq text;
  TokenSeq speech;
  int32_t speaker = 0;

  bool operator==(const Utterance&) const = default;
};

// Synthesizes n utterances on one side of the pair. Sentence lengths are
// uniform over [len_range.first, len_range.second], words uniform over the
// vocabulary, speakers uniform over speaker_count; ids embed (side, seed)
// so namespaces never collide.
std::vector<Utterance> gen_monolingual_corpus(const LanguagePairSpec& spec,
                                              const CodecSpec& codec, Side side,
                                              int n,
                                              std::pair<int, int> len_range,
                                              uint64_t seed);

// Line-delimited JSON, one utterance per line, preceded by a header line
// carrying the codec spec when one is supplied. Writing is byte-stable for
// identical inputs.
void write_manifest(const std::vector<Utterance>& utterances,
                    const std::string& path, const CodecSpec* codec = nullptr);
std::vector<Utterance> read_manifest(const std::string& path);
// Header accessor; IoError if the manifest carries no codec header.
CodecSpec read_manifest_codec(const std::string& path);

}  // namespace rosetta::corpus
