#include "rosetta/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rosetta::inference {

using tokenization::TokenSeq;
using tokenization::WordSeq;

void DecodingConfig::validate() const {
  if (top_k < 1) throw ConfigError("decode: top_k must be at least 1");
  if (!(top_p > 0.0 && top_p <= 1.0))
    throw ConfigError("decode: top_p must lie in (0, 1]");
  if (!(temperature > 0.0))
    throw ConfigError("decode: temperature must be positive");
  if (!(length_ratio > 0.0))
    throw ConfigError("decode: length_ratio must be positive");
  if (length_alpha < 0.0)
    throw ConfigError("decode: length_alpha must be >= 0");
  if (max_output_steps < 0)
    throw ConfigError("decode: max_output_steps must be >= 0");
}

std::vector<double> softmax_temperature(const std::vector<double>& logits,
                                        double temperature) {
  if (logits.empty()) throw InputError("softmax of an empty row");
  if (!(temperature > 0.0))
    throw ConfigError("decode: temperature must be positive");
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : logits) mx = std::max(mx, x / temperature);
  std::vector<double> out(logits.size());
  double sum = 0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] / temperature - mx);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

std::vector<int32_t> nucleus_candidates(const std::vector<double>& probs,
                                        int top_k, double top_p) {
  if (probs.empty()) throw InputError("nucleus over an empty distribution");
  if (top_k < 1) throw ConfigError("decode: top_k must be at least 1");
  if (!(top_p > 0.0 && top_p <= 1.0))
    throw ConfigError("decode: top_p must lie in (0, 1]");
  std::vector<int32_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    if (probs[static_cast<size_t>(a)] != probs[static_cast<size_t>(b)])
      return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)];
    return a < b;
  });
  const size_t keep = std::min(order.size(), static_cast<size_t>(top_k));
  std::vector<int32_t> out;
  double mass = 0;
  for (size_t i = 0; i < keep; ++i) {
    out.push_back(order[i]);
    mass += probs[static_cast<size_t>(order[i])];
    if (mass >= top_p) break;
  }
  return out;
}

int32_t sample_nucleus(const std::vector<double>& probs, int top_k,
                       double top_p, Rng& rng) {
  auto cand = nucleus_candidates(probs, top_k, top_p);
  double mass = 0;
  for (int32_t id : cand) mass += probs[static_cast<size_t>(id)];
  double u = rng.uniform() * mass;
  double cum = 0;
  for (int32_t id : cand) {
    cum += probs[static_cast<size_t>(id)];
    if (u < cum) return id;
  }
  return cand.back();
}

double boosted_eos_logit(double eos_logit, int64_t produced, int64_t expected,
                         const DecodingConfig& cfg) {
  const double budget = cfg.length_ratio * static_cast<double>(expected);
  if (static_cast<double>(produced) <= budget) return eos_logit;
  return eos_logit + cfg.length_alpha * (static_cast<double>(produced) - budget);
}

// ---------------------------------------------------------------------------
// Segmented autoregressive decoding, one output step per backbone position
// past the separator: the text stream decodes greedily to its EOS first, and
// only then does the grouped speech stream start sampling, so the speech
// tokens are always conditioned on the complete generated text (mirroring
// the training layout). Both streams get the overlength EOS boost — the text
// stream against a budget sized from the prompt, so a rambling text segment
// cannot starve the speech segment of positions; the speech stream against a
// budget sized from the text it actually produced. Every step recomputes the
// whole sequence — at these sizes the simplicity is worth far more than a
// key/value cache.

namespace {

template <class S>
Translation decode(const model::Model<S>& m, const checkpoint::Bundle& b,
                   int32_t task_tag, const TokenSeq* speech_prompt,
                   const TokenSeq* text_prompt,
                   const std::string& tgt_language, bool want_speech,
                   int64_t expected_speech_len, const DecodingConfig& cfg,
                   uint64_t seed) {
  cfg.validate();
  const auto& mc = m.cfg;
  const int G = mc.group_size;
  const int32_t head_pad = b.layout.head_pad();
  Rng rng(derive_seed(seed, "decode"));

  int prompt_len = 0;
  if (speech_prompt) {
    if (speech_prompt->empty()) throw InputError("empty speech prompt");
    const int L = static_cast<int>(speech_prompt->size());
    if (L > mc.max_prompt_frames)
      throw InputError("speech prompt of " + std::to_string(L) +
                       " frames exceeds max_prompt_frames " +
                       std::to_string(mc.max_prompt_frames));
    prompt_len = (L + mc.encoder.downsample_ratio - 1) /
                 mc.encoder.downsample_ratio;
  } else {
    if (text_prompt->empty()) throw InputError("empty text prompt");
    prompt_len = static_cast<int>(text_prompt->size());
  }
  const int sep_pos = 1 + prompt_len;
  const int room = mc.max_steps - sep_pos;
  if (room < 1)
    throw InputError("prompt occupies the whole position table; no room "
                     "left to generate");
  const int cap = cfg.max_output_steps > 0
                      ? std::min(cfg.max_output_steps, room)
                      : room;

  // Token streams, extended one position per step.
  std::vector<int32_t> text_in(static_cast<size_t>(sep_pos + 1),
                               tokenization::kPadText);
  std::vector<std::vector<int32_t>> speech_in(
      static_cast<size_t>(sep_pos + 1),
      std::vector<int32_t>(static_cast<size_t>(G), head_pad));
  text_in[0] = task_tag;
  if (text_prompt)
    for (size_t i = 0; i < text_prompt->size(); ++i)
      text_in[1 + i] = (*text_prompt)[i];
  text_in[static_cast<size_t>(sep_pos)] = tokenization::kSep;

  Translation out;
  TokenSeq text_tokens;
  bool text_done = false;
  bool speech_done = !want_speech;
  bool fed_text_eos = false;
  int64_t expected = expected_speech_len;
  // Same-length word counts are the norm in this corpus family, so the
  // prompt length (frames mapped back through prefix and expansion for a
  // speech prompt) is a sound text-length budget.
  const int64_t expected_text =
      text_prompt ? static_cast<int64_t>(text_prompt->size())
                  : std::max<int64_t>(
                        1, (static_cast<int64_t>(speech_prompt->size()) -
                            b.codec.prefix_len + b.codec.expansion - 1) /
                               b.codec.expansion);

  while (!(text_done && speech_done) && out.steps < cap) {
    // The speech segment begins on the step after the text EOS, exactly as
    // in the teacher-forced layout (the EOS step itself carries no speech).
    const bool in_speech_segment = text_done;
    const int T = sep_pos + 1 + out.steps;
    model::SequenceBatch seq;
    seq.batch = 1;
    seq.steps = T;
    seq.group = G;
    seq.text_pad = tokenization::kPadText;
    seq.speech_pad = head_pad;
    seq.text_in = Grid2<int32_t>(1, T);
    seq.speech_in = Grid3<int32_t>(1, T, G);
    seq.enc_slot = Grid2<int32_t>(1, T, -1);
    seq.prompt_speech.resize(1);
    if (speech_prompt) {
      seq.prompt_speech[0] = *speech_prompt;
      for (int s = 0; s < prompt_len; ++s) seq.enc_slot(0, 1 + s) = s;
    }
    seq.seq_len = {T};
    for (int t = 0; t < T; ++t) {
      seq.text_in(0, t) = text_in[static_cast<size_t>(t)];
      for (int g = 0; g < G; ++g)
        seq.speech_in(0, t, g) = speech_in[static_cast<size_t>(t)][
            static_cast<size_t>(g)];
    }

    auto logits = m.forward(seq, nullptr);
    const Eigen::Index row = T - 1;  // logits here predict step out.steps

    int32_t text_tok = tokenization::kPadText;
    if (!text_done) {
      std::vector<double> lt(static_cast<size_t>(mc.text_vocab));
      for (int32_t v = 0; v < mc.text_vocab; ++v)
        lt[static_cast<size_t>(v)] = static_cast<double>(logits.text(row, v));
      lt[tokenization::kEosText] = boosted_eos_logit(
          lt[tokenization::kEosText],
          static_cast<int64_t>(text_tokens.size()), expected_text, cfg);
      int32_t best = 0;
      for (int32_t v = 1; v < mc.text_vocab; ++v)
        if (lt[static_cast<size_t>(v)] > lt[static_cast<size_t>(best)])
          best = v;
      text_tok = best;
      if (text_tok == tokenization::kEosText) {
        text_done = true;
        // The full translation is now known; size the speech budget off it.
        expected = b.codec.expected_speech_len(
            static_cast<int>(text_tokens.size()));
      } else {
        text_tokens.push_back(text_tok);
      }
    }

    std::vector<int32_t> tuple(static_cast<size_t>(G), head_pad);
    if (in_speech_segment && !speech_done) {
      for (int g = 0; g < G; ++g) {
        std::vector<double> lg(static_cast<size_t>(mc.speech_head_vocab));
        for (int32_t v = 0; v < mc.speech_head_vocab; ++v)
          lg[static_cast<size_t>(v)] =
              static_cast<double>(logits.speech[static_cast<size_t>(g)](row, v));
        lg[static_cast<size_t>(b.layout.head_eos())] = boosted_eos_logit(
            lg[static_cast<size_t>(b.layout.head_eos())],
            static_cast<int64_t>(out.speech.size()), expected, cfg);
        auto probs = softmax_temperature(lg, cfg.temperature);
        tuple[static_cast<size_t>(g)] =
            sample_nucleus(probs, cfg.top_k, cfg.top_p, rng);
      }
      if (b.layout.tuple_to_stream(tuple, out.speech)) {
        speech_done = true;
        // Grouped teacher-forced rows hold PAD after the stream's EOS
        // (digit rows end as all-EOS); mirror that in what gets fed back.
        if (b.layout.mode == tokenization::SpeechHeadLayout::grouped_tokens) {
          bool past_eos = false;
          for (int g = 0; g < G; ++g) {
            if (past_eos) tuple[static_cast<size_t>(g)] = head_pad;
            if (tuple[static_cast<size_t>(g)] == b.layout.head_eos())
              past_eos = true;
          }
        }
      }
    }

    // Feed this step's outputs as the next position's inputs, mirroring the
    // teacher-forced layout: the text EOS is shown once, then PAD.
    int32_t next_text = tokenization::kPadText;
    if (text_done && !fed_text_eos) {
      next_text = tokenization::kEosText;
      fed_text_eos = true;
    } else if (!text_done) {
      next_text = text_tok;
    }
    text_in.push_back(next_text);
    speech_in.push_back(tuple);
    out.steps += 1;
  }

  out.text_truncated = !text_done;
  out.speech_truncated = !speech_done;
  out.text = b.vocab.decode_lenient(text_tokens, tgt_language);
  return out;
}

}  // namespace

template <class S>
Translation translate_speech_to_text(const model::Model<S>& m,
                                     const checkpoint::Bundle& b,
                                     const TokenSeq& s_src,
                                     const std::string& tgt_language,
                                     const DecodingConfig& cfg) {
  return decode<S>(m, b, tokenization::kTaskS2tt, &s_src, nullptr,
                   tgt_language, /*want_speech=*/false,
                   /*expected_speech_len=*/0, cfg, /*seed=*/0);
}

template <class S>
Translation translate_text(const model::Model<S>& m,
                           const checkpoint::Bundle& b, const WordSeq& words,
                           const std::string& src_language,
                           const std::string& tgt_language,
                           const DecodingConfig& cfg, uint64_t seed) {
  TokenSeq prompt = b.vocab.encode(words, src_language);
  const int64_t expected =
      b.codec.expected_speech_len(static_cast<int>(words.size()));
  return decode<S>(m, b, tokenization::kTaskT2st, nullptr, &prompt,
                   tgt_language, /*want_speech=*/true, expected, cfg, seed);
}

template <class S>
Translation translate_speech(const model::Model<S>& m,
                             const checkpoint::Bundle& b, const TokenSeq& s_src,
                             const std::string& tgt_language,
                             const DecodingConfig& cfg, uint64_t seed) {
  // A same-length utterance in the target language is the natural initial
  // budget; the decode refines it once the text segment is complete. The
  // s2tt tag keeps the text segment in its trained speech-prompted context.
  const int64_t expected = static_cast<int64_t>(s_src.size());
  return decode<S>(m, b, tokenization::kTaskS2tt, &s_src, nullptr,
                   tgt_language, /*want_speech=*/true, expected, cfg, seed);
}

template Translation translate_speech_to_text<float>(
    const model::Model<float>&, const checkpoint::Bundle&, const TokenSeq&,
    const std::string&, const DecodingConfig&);
template Translation translate_speech_to_text<double>(
    const model::Model<double>&, const checkpoint::Bundle&, const TokenSeq&,
    const std::string&, const DecodingConfig&);
template Translation translate_text<float>(const model::Model<float>&,
                                           const checkpoint::Bundle&,
                                           const WordSeq&, const std::string&,
                                           const std::string&,
                                           const DecodingConfig&, uint64_t);
template Translation translate_text<double>(const model::Model<double>&,
                                            const checkpoint::Bundle&,
                                            const WordSeq&, const std::string&,
                                            const std::string&,
                                            const DecodingConfig&, uint64_t);
template Translation translate_speech<float>(const model::Model<float>&,
                                             const checkpoint::Bundle&,
                                             const TokenSeq&,
                                             const std::string&,
                                             const DecodingConfig&, uint64_t);
template Translation translate_speech<double>(const model::Model<double>&,
                                              const checkpoint::Bundle&,
                                              const TokenSeq&,
                                              const std::string&,
                                              const DecodingConfig&, uint64_t);

}  // namespace rosetta::inference
