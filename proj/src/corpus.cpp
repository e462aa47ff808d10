#include "rosetta/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace rosetta::corpus {

using ordered_json = nlohmann::ordered_json;

ReorderRule ReorderRule::parse(const std::string& text) {
  if (text == "identity") return {ReorderKind::identity, 0};
  if (text == "reverse") return {ReorderKind::reverse, 0};
  if (text.rfind("rotate:", 0) == 0) {
    try {
      int k = std::stoi(text.substr(7));
      if (k < 0) throw ConfigError("reorder rule: rotate amount must be >= 0");
      return {ReorderKind::rotate, k};
    } catch (const std::invalid_argument&) {
    } catch (const std::out_of_range&) {
    }
  }
  throw ConfigError("reorder rule: expected identity | reverse | rotate:K, got '" +
                    text + "'");
}

std::string ReorderRule::to_string() const {
  switch (kind) {
    case ReorderKind::identity: return "identity";
    case ReorderKind::reverse: return "reverse";
    case ReorderKind::rotate: return "rotate:" + std::to_string(k);
  }
  return "identity";
}

WordSeq apply_reorder(const ReorderRule& rule, const WordSeq& words) {
  WordSeq out(words.size());
  int n = static_cast<int>(words.size());
  switch (rule.kind) {
    case ReorderKind::identity:
      out = words;
      break;
    case ReorderKind::reverse:
      for (int i = 0; i < n; ++i) out[i] = words[n - 1 - i];
      break;
    case ReorderKind::rotate:
      for (int i = 0; i < n; ++i) out[i] = words[(i + rule.k) % std::max(1, n)];
      break;
  }
  return out;
}

WordSeq invert_reorder(const ReorderRule& rule, const WordSeq& words) {
  int n = static_cast<int>(words.size());
  switch (rule.kind) {
    case ReorderKind::identity:
    case ReorderKind::reverse:
      return apply_reorder(rule, words);  // both are involutions
    case ReorderKind::rotate: {
      WordSeq out(words.size());
      for (int i = 0; i < n; ++i) out[(i + rule.k) % std::max(1, n)] = words[i];
      return out;
    }
  }
  return words;
}

void LanguagePairSpec::validate() const {
  if (vocab_size < 8)
    throw ConfigError("language pair: vocab_size must be >= 8, got " +
                      std::to_string(vocab_size));
  if (expansion_factor < 1)
    throw ConfigError("language pair: expansion_factor must be >= 1");
  if (speaker_count < 1)
    throw ConfigError("language pair: speaker_count must be >= 1");
  if (src_tag == tgt_tag)
    throw ConfigError("language pair: src and tgt language tags must differ");
  if (static_cast<int>(dict_fwd.size()) != vocab_size ||
      static_cast<int>(dict_bwd.size()) != vocab_size)
    throw ConfigError("language pair: dictionary size != vocab_size");
  std::vector<bool> seen(vocab_size, false);
  for (int w = 0; w < vocab_size; ++w) {
    int32_t m = dict_fwd[w];
    if (m < 0 || m >= vocab_size || seen[m])
      throw ConfigError("language pair: dictionary is not a bijection");
    seen[m] = true;
    if (dict_bwd[m] != w)
      throw ConfigError("language pair: dict_bwd is not the inverse of dict_fwd");
  }
}

LanguagePairSpec gen_language_pair(uint64_t seed, int vocab_size,
                                   ReorderRule rule, GenOptions opts) {
  if (vocab_size < 8)
    throw ConfigError("gen_language_pair: vocab_size must be >= 8, got " +
                      std::to_string(vocab_size));
  LanguagePairSpec spec;
  spec.seed = seed;
  spec.vocab_size = vocab_size;
  spec.reorder = rule;
  spec.expansion_factor = opts.expansion_factor;
  spec.speaker_count = opts.speaker_count;
  spec.src_tag = opts.src_tag;
  spec.tgt_tag = opts.tgt_tag;

  spec.dict_fwd.resize(vocab_size);
  std::iota(spec.dict_fwd.begin(), spec.dict_fwd.end(), 0);
  Rng rng(derive_seed(seed, "language-pair-dictionary"));
  rng.shuffle(spec.dict_fwd);
  spec.dict_bwd.assign(vocab_size, 0);
  for (int w = 0; w < vocab_size; ++w) spec.dict_bwd[spec.dict_fwd[w]] = w;

  spec.validate();
  return spec;
}

std::vector<Utterance> gen_monolingual_corpus(const LanguagePairSpec& spec,
                                              const CodecSpec& codec, Side side,
                                              int n,
                                              std::pair<int, int> len_range,
                                              uint64_t seed) {
  spec.validate();
  codec.validate();
  if (n < 1) throw ConfigError("gen_monolingual_corpus: n must be >= 1");
  if (len_range.first < 1 || len_range.second < len_range.first)
    throw ConfigError("gen_monolingual_corpus: bad length range [" +
                      std::to_string(len_range.first) + ", " +
                      std::to_string(len_range.second) + "]");

  const std::string side_name = side == Side::source ? "source" : "target";
  const std::string lang = side == Side::source ? spec.src_tag : spec.tgt_tag;
  Rng rng(derive_seed(mix_seed(seed, side == Side::source ? 0 : 1),
                      "monolingual-corpus"));

  std::vector<Utterance> out;
  out.reserve(n);
  int span = len_range.second - len_range.first + 1;
  for (int i = 0; i < n; ++i) {
    Utterance u;
    char id[64];
    std::snprintf(id, sizeof(id), "%s-%llu-%06d", side_name.c_str(),
                  static_cast<unsigned long long>(seed), i);
    u.id = id;
    u.language = lang;
    int len = len_range.first + static_cast<int>(rng.uniform_int(span));
    u.text.resize(len);
    for (int j = 0; j < len; ++j)
      u.text[j] = static_cast<int32_t>(rng.uniform_int(spec.vocab_size));
    u.speaker = static_cast<int32_t>(rng.uniform_int(spec.speaker_count));
    u.speech = tokenization::encode_speech(codec, u.text, lang, u.speaker);
    out.push_back(std::move(u));
  }
  return out;
}

namespace {

ordered_json codec_to_json(const CodecSpec& c) {
  ordered_json j;
  j["codebook_size"] = c.codebook_size;
  j["expansion"] = c.expansion;
  j["vocab_size"] = c.vocab_size;
  j["frame_rate"] = c.frame_rate;
  j["jitter_range"] = c.jitter_range;
  j["prefix_len"] = c.prefix_len;
  j["languages"] = c.languages;
  return j;
}

CodecSpec codec_from_json(const nlohmann::json& j, const std::string& where) {
  CodecSpec c;
  try {
    c.codebook_size = j.at("codebook_size").get<int>();
    c.expansion = j.at("expansion").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.frame_rate = j.at("frame_rate").get<int>();
    c.jitter_range = j.at("jitter_range").get<int>();
    c.prefix_len = j.at("prefix_len").get<int>();
    c.languages = j.at("languages").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(where + ": bad codec header: " + e.what());
  }
  c.validate();
  return c;
}

template <class T>
T field(const nlohmann::json& j, const char* name, int line_no) {
  auto it = j.find(name);
  if (it == j.end())
    throw IoError("manifest line " + std::to_string(line_no) +
                  ": missing field '" + name + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw IoError("manifest line " + std::to_string(line_no) +
                  ": field '" + name + "' has the wrong type");
  }
}

}  // namespace

void write_manifest(const std::vector<Utterance>& utterances,
                    const std::string& path, const CodecSpec* codec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  if (codec != nullptr) {
    ordered_json header;
    header["manifest"] = "corpus";
    header["version"] = 1;
    header["codec"] = codec_to_json(*codec);
    out << header.dump() << "\n";
  }
  for (const Utterance& u : utterances) {
    ordered_json j;
    j["id"] = u.id;
    j["language"] = u.language;
    j["text"] = u.text;
    j["speech"] = u.speech;
    j["speaker"] = u.speaker;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("short write to '" + path + "'");
}

namespace {

std::vector<Utterance> read_manifest_impl(const std::string& path,
                                          CodecSpec* codec_out,
                                          bool* has_codec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  std::vector<Utterance> out;
  std::string line;
  int line_no = 0;
  if (has_codec) *has_codec = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("manifest line " + std::to_string(line_no) +
                    ": not valid JSON: " + e.what());
    }
    if (!j.is_object())
      throw IoError("manifest line " + std::to_string(line_no) +
                    ": expected a JSON object");
    if (line_no == 1 && j.contains("manifest")) {
      if (j.contains("codec")) {
        CodecSpec c = codec_from_json(j["codec"], path);
        if (codec_out) *codec_out = c;
        if (has_codec) *has_codec = true;
      }
      continue;
    }
    Utterance u;
    u.id = field<std::string>(j, "id", line_no);
    u.language = field<std::string>(j, "language", line_no);
    u.text = field<WordSeq>(j, "text", line_no);
    u.speech = field<TokenSeq>(j, "speech", line_no);
    u.speaker = field<int32_t>(j, "speaker", line_no);
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace

std::vector<Utterance> read_manifest(const std::string& path) {
  return read_manifest_impl(path, nullptr, nullptr);
}

CodecSpec read_manifest_codec(const std::string& path) {
  CodecSpec c;
  bool has = false;
  read_manifest_impl(path, &c, &has);
  if (!has) throw IoError("manifest '" + path + "' carries no codec header");
  return c;
}

}  // namespace rosetta::corpus
