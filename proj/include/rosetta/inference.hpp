#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rosetta/checkpoint.hpp"
#include "rosetta/model.hpp"
#include "rosetta/tokenization.hpp"

namespace rosetta::inference {

struct DecodingConfig {
  // Speech heads sample from a nucleus: temperature softmax, then the
  // top_k most probable ids, then the smallest prefix reaching top_p.
  int top_k = 20;
  double top_p = 0.8;
  double temperature = 0.95;
  // Once the emitted codec stream exceeds length_ratio times the expected
  // length, every head's EOS logit grows by length_alpha per excess token,
  // which drags even a badly trained model to a stop.
  double length_ratio = 2.0;
  double length_alpha = 0.5;
  int max_output_steps = 0;  // 0 = all the room the position table has

  void validate() const;
};

// Temperature softmax over one logits row, computed in double.
std::vector<double> softmax_temperature(const std::vector<double>& logits,
                                        double temperature);

// Ids surviving the nucleus filter, in sampling order: sort by probability
// (ties broken toward the smaller id), keep at most top_k, cut at the
// smallest prefix whose mass reaches top_p. Never empty for a valid
// distribution — the most probable id always survives.
std::vector<int32_t> nucleus_candidates(const std::vector<double>& probs,
                                        int top_k, double top_p);

// One draw from the renormalized nucleus.
int32_t sample_nucleus(const std::vector<double>& probs, int top_k,
                       double top_p, Rng& rng);

// EOS logit after the overlength boost; pure in all arguments.
double boosted_eos_logit(double eos_logit, int64_t produced, int64_t expected,
                         const DecodingConfig& cfg);

struct Translation {
  tokenization::WordSeq text;      // decoded target-language words
  tokenization::TokenSeq speech;   // codec tokens, terminal EOS stripped
  bool text_truncated = false;     // ran out of steps before text EOS
  bool speech_truncated = false;   // ran out of steps before speech EOS
  int steps = 0;                   // joint output steps consumed
};

// Speech prompt -> target text along the trained speech-to-text task.
// Text decoding is greedy, so this needs no seed.
template <class S>
Translation translate_speech_to_text(const model::Model<S>& m,
                                     const checkpoint::Bundle& b,
                                     const tokenization::TokenSeq& s_src,
                                     const std::string& tgt_language,
                                     const DecodingConfig& cfg);

// Source-language text -> target text and target speech along the trained
// text-to-speech task. Greedy text, nucleus-sampled speech.
template <class S>
Translation translate_text(const model::Model<S>& m,
                           const checkpoint::Bundle& b,
                           const tokenization::WordSeq& words,
                           const std::string& src_language,
                           const std::string& tgt_language,
                           const DecodingConfig& cfg, uint64_t seed);

// Speech prompt under the text-to-speech task tag: the speech-to-speech
// configuration no training pair ever showed the model. The two trained
// tasks have to compose for this to produce anything useful.
template <class S>
Translation translate_speech(const model::Model<S>& m,
                             const checkpoint::Bundle& b,
                             const tokenization::TokenSeq& s_src,
                             const std::string& tgt_language,
                             const DecodingConfig& cfg, uint64_t seed);

}  // namespace rosetta::inference
