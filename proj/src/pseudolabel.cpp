#include "rosetta/pseudolabel.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace rosetta::pseudolabel {

using ordered_json = nlohmann::ordered_json;

void Triplet::validate() const {
  switch (kind) {
    case TripletKind::from_source:
      if (!s_src.has_value() || s_tgt.has_value())
        throw InputError(
            "triplet: from_source requires s_src present and s_tgt absent");
      break;
    case TripletKind::from_target:
      if (s_src.has_value() || !s_tgt.has_value())
        throw InputError(
            "triplet: from_target requires s_tgt present and s_src absent");
      break;
    case TripletKind::parallel:
      if (!s_src.has_value() || !s_tgt.has_value())
        throw InputError("triplet: parallel requires both speech sides");
      break;
  }
  if (quality < 0.0 || quality > 1.0)
    throw InputError("triplet: quality outside [0, 1]");
  if (t_src.empty() || t_tgt.empty())
    throw InputError("triplet: empty text side");
}

OracleTranslator::OracleTranslator(LanguagePairSpec spec, Direction dir,
                                   double p_err, uint64_t seed)
    : spec_(std::move(spec)), dir_(dir), p_err_(p_err), seed_(seed) {
  spec_.validate();
  if (p_err_ < 0.0 || p_err_ > 1.0)
    throw ConfigError("oracle translator: p_err must be in [0, 1]");
}

const std::string& OracleTranslator::input_language() const {
  return dir_ == Direction::src_to_tgt ? spec_.src_tag : spec_.tgt_tag;
}

const std::string& OracleTranslator::output_language() const {
  return dir_ == Direction::src_to_tgt ? spec_.tgt_tag : spec_.src_tag;
}

WordSeq OracleTranslator::translate(const WordSeq& words) const {
  if (words.empty()) throw InputError("translate: empty sentence");
  WordSeq out(words.size());
  for (size_t i = 0; i < words.size(); ++i) {
    int32_t w = words[i];
    if (w < 0 || w >= spec_.vocab_size)
      throw InputError("translate: word id " + std::to_string(w) +
                       " outside vocabulary of size " +
                       std::to_string(spec_.vocab_size));
    out[i] = dir_ == Direction::src_to_tgt ? spec_.dict_fwd[w] : spec_.dict_bwd[w];
  }
  out = dir_ == Direction::src_to_tgt ? apply_reorder(spec_.reorder, out)
                                      : invert_reorder(spec_.reorder, out);
  if (p_err_ <= 0.0) return out;

  // Per-call corruption stream: a pure function of (seed, direction, input),
  // so the translator stays stateless and map-parallel safe.
  uint64_t call_seed = mix_seed(seed_, dir_ == Direction::src_to_tgt ? 17 : 31);
  call_seed = splitmix64(call_seed ^
                         fnv1a64(words.data(), words.size() * sizeof(int32_t)));
  Rng rng(call_seed);
  for (size_t i = 0; i < out.size(); ++i) {
    if (rng.uniform() < p_err_) {
      int32_t wrong =
          static_cast<int32_t>(rng.uniform_int(spec_.vocab_size - 1));
      if (wrong >= out[i]) ++wrong;
      out[i] = wrong;
    }
  }
  return out;
}

OracleScorer::OracleScorer(LanguagePairSpec spec, Direction scored)
    : clean_(std::move(spec), scored, 0.0, 0), scored_(scored) {}

double OracleScorer::score(const WordSeq& t_src, const WordSeq& t_tgt) const {
  const WordSeq& candidate = scored_ == Direction::src_to_tgt ? t_tgt : t_src;
  const WordSeq& trusted = scored_ == Direction::src_to_tgt ? t_src : t_tgt;
  WordSeq reference = clean_.translate(trusted);

  size_t overlap = std::min(candidate.size(), reference.size());
  size_t matches = 0;
  for (size_t i = 0; i < overlap; ++i)
    if (candidate[i] == reference[i]) ++matches;
  if (matches == 0) return 0.0;
  double precision = static_cast<double>(matches) / candidate.size();
  double recall = static_cast<double>(matches) / reference.size();
  return 2.0 * precision * recall / (precision + recall);
}

double score_pair(const WordSeq& t_src, const WordSeq& t_tgt,
                  const QualityScorer& scorer) {
  if (t_src.empty() || t_tgt.empty())
    throw InputError("score_pair: empty sentence");
  double q = scorer.score(t_src, t_tgt);
  if (!(q >= 0.0 && q <= 1.0))
    throw InputError("score_pair: scorer returned a value outside [0, 1]");
  return q;
}

std::vector<Triplet> build_triplets(const std::vector<Utterance>& mono,
                                    const Translator& translator,
                                    const QualityScorer& scorer,
                                    double threshold, TripletKind kind) {
  if (threshold < 0.0 || threshold > 1.0)
    throw ConfigError("build_triplets: threshold must be in [0, 1]");
  if (kind == TripletKind::parallel)
    throw ConfigError("build_triplets: use build_parallel_pairs for parallel data");
  Direction want = kind == TripletKind::from_source ? Direction::src_to_tgt
                                                    : Direction::tgt_to_src;
  if (translator.direction() != want)
    throw ConfigError("build_triplets: translator direction does not match kind");
  for (const Utterance& u : mono) {
    if (u.language != translator.input_language())
      throw ConfigError("build_triplets: corpus language '" + u.language +
                        "' does not match translator input language '" +
                        translator.input_language() + "'");
  }

  const std::string& src_lang = kind == TripletKind::from_source
                                    ? translator.input_language()
                                    : translator.output_language();
  const std::string& tgt_lang = kind == TripletKind::from_source
                                    ? translator.output_language()
                                    : translator.input_language();

  // Label in parallel (translator/scorer are stateless), keep corpus order.
  std::vector<Triplet> labeled(mono.size());
  parallel_for_jobs(
      static_cast<int>(mono.size()), worker_threads(), [&](int i, int) {
        const Utterance& u = mono[i];
        Triplet t;
        t.kind = kind;
        t.src_language = src_lang;
        t.tgt_language = tgt_lang;
        WordSeq cand = translator.translate(u.text);
        if (kind == TripletKind::from_source) {
          t.t_src = u.text;
          t.t_tgt = std::move(cand);
          t.s_src = u.speech;
          t.quality = score_pair(t.t_src, t.t_tgt, scorer);
        } else {
          t.t_src = std::move(cand);
          t.t_tgt = u.text;
          t.s_tgt = u.speech;
          t.quality = score_pair(t.t_src, t.t_tgt, scorer);
        }
        t.validate();
        labeled[i] = std::move(t);
      });

  return filter_triplets(labeled, threshold);
}

std::vector<Triplet> filter_triplets(const std::vector<Triplet>& triplets,
                                     double threshold) {
  if (threshold < 0.0 || threshold > 1.0)
    throw ConfigError("filter_triplets: threshold must be in [0, 1]");
  std::vector<Triplet> out;
  out.reserve(triplets.size());
  for (const Triplet& t : triplets)
    if (t.quality >= threshold) out.push_back(t);
  return out;
}

std::vector<Triplet> build_parallel_pairs(const std::vector<Utterance>& src_mono,
                                          const LanguagePairSpec& spec,
                                          const tokenization::CodecSpec& codec,
                                          uint64_t seed) {
  OracleTranslator clean(spec, Direction::src_to_tgt, 0.0, 0);
  Rng rng(derive_seed(seed, "parallel-pairs"));
  std::vector<Triplet> out;
  out.reserve(src_mono.size());
  for (const Utterance& u : src_mono) {
    if (u.language != spec.src_tag)
      throw ConfigError("build_parallel_pairs: corpus language '" + u.language +
                        "' is not the pair's source '" + spec.src_tag + "'");
    Triplet t;
    t.kind = TripletKind::parallel;
    t.src_language = spec.src_tag;
    t.tgt_language = spec.tgt_tag;
    t.t_src = u.text;
    t.t_tgt = clean.translate(u.text);
    t.s_src = u.speech;
    int speaker = static_cast<int>(rng.uniform_int(spec.speaker_count));
    t.s_tgt = tokenization::encode_speech(codec, t.t_tgt, spec.tgt_tag, speaker);
    t.quality = 1.0;
    t.validate();
    out.push_back(std::move(t));
  }
  return out;
}

const char* kind_name(TripletKind kind) {
  switch (kind) {
    case TripletKind::from_source: return "from_source";
    case TripletKind::from_target: return "from_target";
    case TripletKind::parallel: return "parallel";
  }
  return "from_source";
}

TripletKind kind_from_name(const std::string& name) {
  if (name == "from_source") return TripletKind::from_source;
  if (name == "from_target") return TripletKind::from_target;
  if (name == "parallel") return TripletKind::parallel;
  throw ConfigError("unknown triplet kind '" + name + "'");
}

void write_triplets(const std::vector<Triplet>& triplets,
                    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const Triplet& t : triplets) {
    ordered_json j;
    j["kind"] = kind_name(t.kind);
    j["t_src"] = t.t_src;
    j["t_tgt"] = t.t_tgt;
    if (t.s_src.has_value())
      j["s_src"] = *t.s_src;
    else
      j["s_src"] = nullptr;
    if (t.s_tgt.has_value())
      j["s_tgt"] = *t.s_tgt;
    else
      j["s_tgt"] = nullptr;
    j["quality"] = t.quality;
    j["src_language"] = t.src_language;
    j["tgt_language"] = t.tgt_language;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("short write to '" + path + "'");
}

std::vector<Triplet> read_triplets(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open triplet manifest '" + path + "'");
  std::vector<Triplet> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("triplet manifest line " + std::to_string(line_no) +
                    ": not valid JSON: " + e.what());
    }
    auto need = [&](const char* name) -> const nlohmann::json& {
      auto it = j.find(name);
      if (it == j.end())
        throw IoError("triplet manifest line " + std::to_string(line_no) +
                      ": missing field '" + name + "'");
      return *it;
    };
    Triplet t;
    try {
      t.kind = kind_from_name(need("kind").get<std::string>());
      t.t_src = need("t_src").get<WordSeq>();
      t.t_tgt = need("t_tgt").get<WordSeq>();
      const auto& ss = need("s_src");
      if (!ss.is_null()) t.s_src = ss.get<TokenSeq>();
      const auto& st = need("s_tgt");
      if (!st.is_null()) t.s_tgt = st.get<TokenSeq>();
      t.quality = need("quality").get<double>();
      if (j.contains("src_language"))
        t.src_language = j["src_language"].get<std::string>();
      if (j.contains("tgt_language"))
        t.tgt_language = j["tgt_language"].get<std::string>();
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw IoError("triplet manifest line " + std::to_string(line_no) + ": " +
                    e.what());
    }
    try {
      t.validate();
    } catch (const Error& e) {
      throw IoError("triplet manifest line " + std::to_string(line_no) + ": " +
                    e.what());
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace rosetta::pseudolabel
