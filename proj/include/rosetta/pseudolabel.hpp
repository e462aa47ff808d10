#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rosetta/common.hpp"
#include "rosetta/corpus.hpp"

namespace rosetta::pseudolabel {

using corpus::LanguagePairSpec;
using corpus::Utterance;
using tokenization::TokenSeq;
using tokenization::WordSeq;

// A training record assembled from monolingual data. Exactly one speech side
// is present for the two pseudo-parallel kinds; `parallel` (used only for
// supervised fine-tuning experiments) carries both.
enum class TripletKind { from_source, from_target, parallel };

struct Triplet {
  TripletKind kind = TripletKind::from_source;
  WordSeq t_src;
  WordSeq t_tgt;
  std::optional<TokenSeq> s_src;
  std::optional<TokenSeq> s_tgt;
  double quality = 1.0;
  std::string src_language = "src";
  std::string tgt_language = "tgt";

  void validate() const;  // presence invariants per kind
  bool operator==(const Triplet&) const = default;
};

enum class Direction { src_to_tgt, tgt_to_src };

// Sentence-level machine translation stand-in. Implementations must be
// stateless after construction: translate() is a pure function of
// (configuration, input), so corpora can be labeled in parallel.
class Translator {
 public:
  virtual ~Translator() = default;
  virtual WordSeq translate(const WordSeq& words) const = 0;
  virtual Direction direction() const = 0;
  virtual const std::string& input_language() const = 0;
  virtual const std::string& output_language() const = 0;
};

// Dictionary + reorder oracle. With p_err == 0 it reproduces the language
// pair's exact translation; with p_err > 0 each output word is independently
// replaced by a uniformly random *wrong* word with that probability. The
// corruption stream is derived from (seed, direction, input words), so calls
// are order-independent and reproducible.
class OracleTranslator : public Translator {
 public:
  OracleTranslator(LanguagePairSpec spec, Direction dir, double p_err = 0.0,
                   uint64_t seed = 0);
  WordSeq translate(const WordSeq& words) const override;
  Direction direction() const override { return dir_; }
  const std::string& input_language() const override;
  const std::string& output_language() const override;

 private:
  LanguagePairSpec spec_;
  Direction dir_;
  double p_err_;
  uint64_t seed_;
};

// Directional quality estimate in [0, 1] for a (t_src, t_tgt) pair.
class QualityScorer {
 public:
  virtual ~QualityScorer() = default;
  virtual double score(const WordSeq& t_src, const WordSeq& t_tgt) const = 0;
};

// Position-level token F1 of the candidate against the clean oracle
// translation of the trusted side. `scored` names which side is the
// candidate: src_to_tgt scores t_tgt against oracle(t_src), tgt_to_src
// scores t_src against oracle(t_tgt). Equals 1 exactly when the candidate
// matches the oracle translation token for token.
class OracleScorer : public QualityScorer {
 public:
  OracleScorer(LanguagePairSpec spec, Direction scored);
  double score(const WordSeq& t_src, const WordSeq& t_tgt) const override;

 private:
  OracleTranslator clean_;
  Direction scored_;
};

// Validates non-emptiness and delegates to the scorer.
double score_pair(const WordSeq& t_src, const WordSeq& t_tgt,
                  const QualityScorer& scorer);

// Labels a monolingual corpus into triplets of `kind`, keeping input order
// and dropping records whose quality falls below `threshold`. The corpus
// language must match the translator's input side.
std::vector<Triplet> build_triplets(const std::vector<Utterance>& mono,
                                    const Translator& translator,
                                    const QualityScorer& scorer,
                                    double threshold, TripletKind kind);

// Retains triplets with quality >= threshold, preserving order.
std::vector<Triplet> filter_triplets(const std::vector<Triplet>& triplets,
                                     double threshold);

// True parallel pairs for the fine-tuning ablation: target side derived by
// the clean oracle, both speech streams synthesized.
std::vector<Triplet> build_parallel_pairs(const std::vector<Utterance>& src_mono,
                                          const LanguagePairSpec& spec,
                                          const tokenization::CodecSpec& codec,
                                          uint64_t seed);

void write_triplets(const std::vector<Triplet>& triplets,
                    const std::string& path);
std::vector<Triplet> read_triplets(const std::string& path);

const char* kind_name(TripletKind kind);
TripletKind kind_from_name(const std::string& name);

}  // namespace rosetta::pseudolabel
