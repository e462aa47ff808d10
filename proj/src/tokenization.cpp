#include "rosetta/tokenization.hpp"

#include <algorithm>

namespace rosetta::tokenization {

namespace {

int positive_mod(int64_t x, int m) {
  int64_t r = x % m;
  return static_cast<int>(r < 0 ? r + m : r);
}

}  // namespace

void TextVocab::validate() const {
  if (words_per_language < 1)
    throw ConfigError("text vocab: words_per_language must be >= 1");
  if (languages.empty()) throw ConfigError("text vocab: no languages registered");
}

int TextVocab::language_index(const std::string& tag) const {
  for (size_t i = 0; i < languages.size(); ++i)
    if (languages[i] == tag) return static_cast<int>(i);
  throw ConfigError("text vocab: unknown language '" + tag + "'");
}

int32_t TextVocab::word_token(int lang_idx, int32_t word) const {
  if (word < 0 || word > unk_word())
    throw InputError("text encode: word id " + std::to_string(word) +
                     " outside [0, " + std::to_string(unk_word()) + "]");
  return block_base(lang_idx) + word;
}

TokenSeq TextVocab::encode(const WordSeq& words, const std::string& lang) const {
  int li = language_index(lang);
  TokenSeq out;
  out.reserve(words.size());
  for (int32_t w : words) out.push_back(word_token(li, w));
  return out;
}

WordSeq TextVocab::decode(const TokenSeq& tokens, const std::string& lang) const {
  int li = language_index(lang);
  int32_t base = block_base(li);
  WordSeq out;
  out.reserve(tokens.size());
  for (int32_t t : tokens) {
    if (t == kPadText) continue;
    if (t < base || t >= base + block_size())
      throw InputError("text decode: token id " + std::to_string(t) +
                       " not in language block '" + lang + "'");
    out.push_back(t - base);
  }
  return out;
}

WordSeq TextVocab::decode_lenient(const TokenSeq& tokens,
                                  const std::string& lang) const {
  int li = language_index(lang);
  int32_t base = block_base(li);
  WordSeq out;
  out.reserve(tokens.size());
  for (int32_t t : tokens) {
    if (t >= 0 && t < kNumTextSpecials) continue;
    if (t >= base && t < base + block_size())
      out.push_back(t - base);
    else
      out.push_back(unk_word());
  }
  return out;
}

void CodecSpec::validate() const {
  if (codebook_size < 2) throw ConfigError("codec: codebook_size must be >= 2");
  if (expansion < 1) throw ConfigError("codec: expansion must be >= 1");
  if (vocab_size < 1) throw ConfigError("codec: vocab_size must be >= 1");
  if (jitter_range < 1) throw ConfigError("codec: jitter_range must be >= 1");
  if (prefix_len < 0) throw ConfigError("codec: prefix_len must be >= 0");
  if (prefix_len == 0 && jitter_range != 1)
    throw ConfigError(
        "codec: jitter_range > 1 requires a jitter prefix (prefix_len >= 1); "
        "without one the decoder cannot recover the speaker shift");
  if (languages.empty()) throw ConfigError("codec: no languages registered");
  // Within one language the code region must be injective modulo the
  // codebook, otherwise round-trips break silently.
  int span = expansion * vocab_size + (prefix_len > 0 ? jitter_range : 0);
  if (span > codebook_size)
    throw ConfigError("codec: code region (" + std::to_string(span) +
                      " points) exceeds codebook_size " +
                      std::to_string(codebook_size));
}

int CodecSpec::language_index(const std::string& tag) const {
  for (size_t i = 0; i < languages.size(); ++i)
    if (languages[i] == tag) return static_cast<int>(i);
  throw ConfigError("codec: unknown language '" + tag + "'");
}

int CodecSpec::language_offset(const std::string& tag) const {
  int idx = language_index(tag);
  return idx * (codebook_size / static_cast<int>(languages.size()));
}

int CodecSpec::jitter_of(int speaker) const {
  if (speaker < 0) throw InputError("codec: speaker id must be >= 0");
  return speaker % jitter_range;
}

TokenSeq encode_speech(const CodecSpec& codec, const WordSeq& words,
                       const std::string& lang, int speaker) {
  codec.validate();
  int offset = codec.language_offset(lang);
  int jitter = codec.jitter_of(speaker);
  TokenSeq out;
  out.reserve(codec.expected_speech_len(static_cast<int>(words.size())));
  int32_t prefix = static_cast<int32_t>(positive_mod(
      offset + codec.expansion * codec.vocab_size + jitter, codec.codebook_size));
  for (int i = 0; i < codec.prefix_len; ++i) out.push_back(prefix);
  for (int32_t w : words) {
    if (w < 0 || w >= codec.vocab_size)
      throw InputError("speech encode: word id " + std::to_string(w) +
                       " outside [0, " + std::to_string(codec.vocab_size) + ")");
    for (int j = 0; j < codec.expansion; ++j)
      out.push_back(static_cast<int32_t>(positive_mod(
          offset + w * codec.expansion + j + jitter, codec.codebook_size)));
  }
  return out;
}

WordSeq decode_speech(const CodecSpec& codec, const TokenSeq& tokens,
                      const std::string& lang) {
  codec.validate();
  int offset = codec.language_offset(lang);
  WordSeq words;
  if (tokens.empty()) return words;

  // Ignore everything at and past the first EOS.
  size_t n = tokens.size();
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == codec.eos()) {
      n = i;
      break;
    }
  }
  if (n == 0) return words;

  // Recover the speaker jitter from the prefix when one parses; otherwise
  // fall back to jitter 0 and treat the stream as prefix-less garbage.
  size_t i = 0;
  int jitter = 0;
  if (codec.prefix_len > 0 && n >= static_cast<size_t>(codec.prefix_len)) {
    int32_t v0 = tokens[0];
    if (v0 >= 0 && v0 < codec.codebook_size) {
      int u = positive_mod(
          static_cast<int64_t>(v0) - offset - codec.expansion * codec.vocab_size,
          codec.codebook_size);
      bool uniform = true;
      for (int k = 1; k < codec.prefix_len; ++k)
        if (tokens[k] != v0) uniform = false;
      if (u < codec.jitter_range && uniform) {
        jitter = u;
        i = static_cast<size_t>(codec.prefix_len);
      }
    }
  }

  for (; i + codec.expansion <= n; i += codec.expansion) {
    bool ok = true;
    int32_t w = -1;
    for (int j = 0; j < codec.expansion && ok; ++j) {
      int32_t t = tokens[i + j];
      if (t < 0 || t >= codec.codebook_size) {
        ok = false;
        break;
      }
      int x = positive_mod(static_cast<int64_t>(t) - offset - jitter,
                           codec.codebook_size);
      if (j == 0) {
        if (x % codec.expansion != 0) {
          ok = false;
          break;
        }
        w = x / codec.expansion;
        if (w >= codec.vocab_size) ok = false;
      } else if (x != w * codec.expansion + j) {
        ok = false;
      }
    }
    words.push_back(ok ? w : static_cast<int32_t>(codec.vocab_size));
  }
  if (i < n) words.push_back(static_cast<int32_t>(codec.vocab_size));
  return words;
}

Grid2<int32_t> group_speech(const TokenSeq& tokens, int group_size,
                            int32_t pad_token) {
  if (group_size < 1) throw ConfigError("group_speech: group_size must be >= 1");
  int n = static_cast<int>(tokens.size());
  int rows = (n + group_size - 1) / group_size;
  Grid2<int32_t> grid(rows, group_size, pad_token);
  for (int i = 0; i < n; ++i) grid(i / group_size, i % group_size) = tokens[i];
  return grid;
}

TokenSeq ungroup_speech(const Grid2<int32_t>& grid, int32_t pad_token) {
  TokenSeq out;
  out.reserve(static_cast<size_t>(grid.n0) * grid.n1);
  for (int i = 0; i < grid.n0; ++i)
    for (int j = 0; j < grid.n1; ++j) out.push_back(grid(i, j));
  while (!out.empty() && out.back() == pad_token) out.pop_back();
  return out;
}

SpeechLayoutSpec SpeechLayoutSpec::grouped(int g, const CodecSpec& codec) {
  SpeechLayoutSpec s;
  s.mode = SpeechHeadLayout::grouped_tokens;
  s.group_size = g;
  s.codebook_size = codec.codebook_size;
  s.validate();
  return s;
}

SpeechLayoutSpec SpeechLayoutSpec::digits(int g, const CodecSpec& codec) {
  SpeechLayoutSpec s;
  s.mode = SpeechHeadLayout::digit_factored;
  s.group_size = g;
  s.codebook_size = codec.codebook_size;
  // digit_base = codebook^(1/G), required exact.
  int base = 1;
  while (true) {
    int64_t p = 1;
    for (int i = 0; i < g; ++i) p *= (base + 1);
    if (p > codec.codebook_size) break;
    ++base;
    if (p == codec.codebook_size) break;
  }
  int64_t check = 1;
  for (int i = 0; i < g; ++i) check *= base;
  if (check != codec.codebook_size)
    throw ConfigError("speech layout: codebook_size " +
                      std::to_string(codec.codebook_size) +
                      " is not a perfect power of group_size " +
                      std::to_string(g));
  s.digit_base = base;
  s.validate();
  return s;
}

void SpeechLayoutSpec::validate() const {
  if (group_size < 1) throw ConfigError("speech layout: group_size must be >= 1");
  if (codebook_size < 2)
    throw ConfigError("speech layout: codebook_size must be >= 2");
  if (mode == SpeechHeadLayout::digit_factored && digit_base < 2)
    throw ConfigError("speech layout: digit_base must be >= 2");
}

int32_t SpeechLayoutSpec::head_vocab() const {
  return mode == SpeechHeadLayout::grouped_tokens ? codebook_size + 2
                                                  : digit_base + 2;
}

int32_t SpeechLayoutSpec::head_eos() const {
  return mode == SpeechHeadLayout::grouped_tokens ? codebook_size : digit_base;
}

Grid2<int32_t> SpeechLayoutSpec::to_step_grid(
    const TokenSeq& tokens_with_eos) const {
  if (mode == SpeechHeadLayout::grouped_tokens)
    return group_speech(tokens_with_eos, group_size, head_pad());

  // One codec token per step, factored into G digits, most significant
  // first. The codec EOS becomes an all-EOS digit tuple.
  int rows = static_cast<int>(tokens_with_eos.size());
  Grid2<int32_t> grid(rows, group_size, head_pad());
  for (int i = 0; i < rows; ++i) {
    int32_t t = tokens_with_eos[i];
    if (t == codebook_size) {  // codec EOS
      for (int g = 0; g < group_size; ++g) grid(i, g) = head_eos();
      continue;
    }
    if (t < 0 || t >= codebook_size)
      throw InputError("speech layout: codec token " + std::to_string(t) +
                       " not factorable into digits");
    int64_t rest = t;
    for (int g = group_size - 1; g >= 0; --g) {
      grid(i, g) = static_cast<int32_t>(rest % digit_base);
      rest /= digit_base;
    }
  }
  return grid;
}

bool SpeechLayoutSpec::tuple_to_stream(const std::vector<int32_t>& tuple,
                                       TokenSeq& stream) const {
  if (static_cast<int>(tuple.size()) != group_size)
    throw InputError("speech layout: tuple width != group_size");
  if (mode == SpeechHeadLayout::grouped_tokens) {
    for (int32_t t : tuple) {
      if (t == head_eos()) return true;
      stream.push_back(t);
    }
    return false;
  }
  // Digit mode terminates on an all-EOS tuple; otherwise clamp stray digits
  // so the emitted stream stays total.
  bool all_eos = true;
  for (int32_t t : tuple)
    if (t != head_eos()) all_eos = false;
  if (all_eos) return true;
  int64_t token = 0;
  for (int32_t t : tuple) {
    int32_t d = std::clamp(t, 0, digit_base - 1);
    token = token * digit_base + d;
  }
  stream.push_back(static_cast<int32_t>(token));
  return false;
}

}  // namespace rosetta::tokenization
