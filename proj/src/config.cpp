#include "rosetta/config.hpp"

#include <fstream>
#include <set>

namespace rosetta::config {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ConfigError(path + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key()))
      throw ConfigError("unknown config key: " +
                        (path.empty() ? it.key() : path + "." + it.key()));
  }
}

std::string join(const std::string& path, const char* key) {
  return path.empty() ? key : path + "." + key;
}

void read_int(const json& j, const std::string& path, const char* key,
              int& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_integer())
    throw ConfigError(join(path, key) + " must be an integer");
  out = v.get<int>();
}

void read_double(const json& j, const std::string& path, const char* key,
                 double& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number())
    throw ConfigError(join(path, key) + " must be a number");
  out = v.get<double>();
}

void read_bool(const json& j, const std::string& path, const char* key,
               bool& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_boolean())
    throw ConfigError(join(path, key) + " must be true or false");
  out = v.get<bool>();
}

void read_string(const json& j, const std::string& path, const char* key,
                 std::string& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_string())
    throw ConfigError(join(path, key) + " must be a string");
  out = v.get<std::string>();
}

}  // namespace

void RunConfig::validate() const {
  if (languages.size() != 2 || languages[0].empty() || languages[1].empty() ||
      languages[0] == languages[1])
    throw ConfigError(
        "languages must list exactly two distinct non-empty names "
        "(source first, target last)");
  if (corpus.vocab_size < 8)
    throw ConfigError("corpus.vocab_size must be at least 8");
  if (corpus.expansion_factor < 1)
    throw ConfigError("corpus.expansion_factor must be positive");
  if (corpus.speaker_count < 1)
    throw ConfigError("corpus.speaker_count must be positive");
  if (corpus.n_from_source < 1)
    throw ConfigError("corpus.n_from_source must be positive");
  if (corpus.n_from_target < 1)
    throw ConfigError("corpus.n_from_target must be positive");
  if (corpus.n_test < 1) throw ConfigError("corpus.n_test must be positive");
  if (corpus.len_min < 1 || corpus.len_max < corpus.len_min)
    throw ConfigError(
        "corpus.len_min/corpus.len_max must satisfy 1 <= len_min <= len_max");
  if (pseudolabel.threshold < 0.0 || pseudolabel.threshold > 1.0)
    throw ConfigError("pseudolabel.threshold must be in [0, 1]");
  if (pseudolabel.p_err < 0.0 || pseudolabel.p_err > 1.0)
    throw ConfigError("pseudolabel.p_err must be in [0, 1]");
  if (codec.codebook_size < 2)
    throw ConfigError("codec.codebook_size must be at least 2");
  if (codec.frame_rate < 1)
    throw ConfigError("codec.frame_rate must be positive");
  if (codec.jitter_range < 1)
    throw ConfigError("codec.jitter_range must be positive");
  if (codec.prefix_len < 0)
    throw ConfigError("codec.prefix_len must be non-negative");
  if (layout.mode != "grouped" && layout.mode != "digits")
    throw ConfigError("layout.mode must be \"grouped\" or \"digits\"");
  if (layout.group_size < 1)
    throw ConfigError("layout.group_size must be positive");
  // the assembled specs run their own cross-checks
  bundle();
  optimizer.validate();
  trainer_config().validate();
  decoding.validate();
}

tokenization::CodecSpec RunConfig::codec_spec() const {
  tokenization::CodecSpec c;
  c.codebook_size = codec.codebook_size;
  c.expansion = corpus.expansion_factor;
  c.vocab_size = corpus.vocab_size;
  c.frame_rate = codec.frame_rate;
  c.jitter_range = codec.jitter_range;
  c.prefix_len = codec.prefix_len;
  c.languages = languages;
  c.validate();
  return c;
}

checkpoint::Bundle RunConfig::bundle() const {
  checkpoint::Bundle b;
  b.vocab.words_per_language = corpus.vocab_size;
  b.vocab.languages = languages;
  b.codec = codec_spec();
  b.layout = layout.mode == "grouped"
                 ? tokenization::SpeechLayoutSpec::grouped(layout.group_size,
                                                           b.codec)
                 : tokenization::SpeechLayoutSpec::digits(layout.group_size,
                                                          b.codec);
  b.model.d_model = model.d_model;
  b.model.n_layers = model.n_layers;
  b.model.n_heads = model.n_heads;
  b.model.ffn_mult = model.ffn_mult;
  b.model.max_steps = model.max_steps;
  b.model.max_prompt_frames = model.max_prompt_frames;
  b.model.text_vocab = b.vocab.total_size();
  b.model.speech_head_vocab = b.layout.head_vocab();
  b.model.speech_prompt_vocab = b.codec.total_size();
  b.model.group_size = layout.group_size;
  b.model.encoder.n_layers = model.encoder.n_layers;
  b.model.encoder.downsample_ratio = model.encoder.downsample_ratio;
  b.model.encoder.freeze = model.encoder.freeze;
  b.validate();
  return b;
}

corpus::LanguagePairSpec RunConfig::language_pair() const {
  corpus::GenOptions opts;
  opts.expansion_factor = corpus.expansion_factor;
  opts.speaker_count = corpus.speaker_count;
  opts.src_tag = languages[0];
  opts.tgt_tag = languages[1];
  return corpus::gen_language_pair(stage_seed("language-pair"),
                                   corpus.vocab_size, corpus.reorder, opts);
}

training::TrainerConfig RunConfig::trainer_config() const {
  training::TrainerConfig tc;
  tc.mode = training.mode;
  tc.total_steps = training.total_steps;
  tc.batch_size = training.batch_size;
  tc.optim = optimizer;
  tc.seed = stage_seed("train");
  tc.log_every = training.log_every;
  tc.threads = training.threads;
  return tc;
}

uint64_t RunConfig::stage_seed(const std::string& stage) const {
  return derive_seed(seed, stage);
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  check_keys(j, "",
             {"seed", "languages", "corpus", "pseudolabel", "codec", "layout",
              "model", "optimizer", "training", "decoding"});

  if (j.contains("seed")) {
    const auto& v = j.at("seed");
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<int64_t>() < 0))
      throw ConfigError("seed must be a non-negative integer");
    c.seed = v.get<uint64_t>();
  }
  if (j.contains("languages")) {
    const auto& v = j.at("languages");
    if (!v.is_array()) throw ConfigError("languages must be an array");
    c.languages.clear();
    for (const auto& e : v) {
      if (!e.is_string())
        throw ConfigError("languages entries must be strings");
      c.languages.push_back(e.get<std::string>());
    }
  }
  if (j.contains("corpus")) {
    const auto& s = j.at("corpus");
    check_keys(s, "corpus",
               {"vocab_size", "reorder", "expansion_factor", "speaker_count",
                "n_from_source", "n_from_target", "n_test", "len_min",
                "len_max"});
    read_int(s, "corpus", "vocab_size", c.corpus.vocab_size);
    std::string reorder;
    read_string(s, "corpus", "reorder", reorder);
    if (!reorder.empty()) {
      try {
        c.corpus.reorder = corpus::ReorderRule::parse(reorder);
      } catch (const Error& e) {
        throw ConfigError(std::string("corpus.reorder: ") + e.what());
      }
    }
    read_int(s, "corpus", "expansion_factor", c.corpus.expansion_factor);
    read_int(s, "corpus", "speaker_count", c.corpus.speaker_count);
    read_int(s, "corpus", "n_from_source", c.corpus.n_from_source);
    read_int(s, "corpus", "n_from_target", c.corpus.n_from_target);
    read_int(s, "corpus", "n_test", c.corpus.n_test);
    read_int(s, "corpus", "len_min", c.corpus.len_min);
    read_int(s, "corpus", "len_max", c.corpus.len_max);
  }
  if (j.contains("pseudolabel")) {
    const auto& s = j.at("pseudolabel");
    check_keys(s, "pseudolabel", {"threshold", "p_err"});
    read_double(s, "pseudolabel", "threshold", c.pseudolabel.threshold);
    read_double(s, "pseudolabel", "p_err", c.pseudolabel.p_err);
  }
  if (j.contains("codec")) {
    const auto& s = j.at("codec");
    check_keys(s, "codec",
               {"codebook_size", "frame_rate", "jitter_range", "prefix_len"});
    read_int(s, "codec", "codebook_size", c.codec.codebook_size);
    read_int(s, "codec", "frame_rate", c.codec.frame_rate);
    read_int(s, "codec", "jitter_range", c.codec.jitter_range);
    read_int(s, "codec", "prefix_len", c.codec.prefix_len);
  }
  if (j.contains("layout")) {
    const auto& s = j.at("layout");
    check_keys(s, "layout", {"mode", "group_size"});
    read_string(s, "layout", "mode", c.layout.mode);
    read_int(s, "layout", "group_size", c.layout.group_size);
  }
  if (j.contains("model")) {
    const auto& s = j.at("model");
    check_keys(s, "model",
               {"d_model", "n_layers", "n_heads", "ffn_mult", "max_steps",
                "max_prompt_frames", "encoder"});
    read_int(s, "model", "d_model", c.model.d_model);
    read_int(s, "model", "n_layers", c.model.n_layers);
    read_int(s, "model", "n_heads", c.model.n_heads);
    read_int(s, "model", "ffn_mult", c.model.ffn_mult);
    read_int(s, "model", "max_steps", c.model.max_steps);
    read_int(s, "model", "max_prompt_frames", c.model.max_prompt_frames);
    if (s.contains("encoder")) {
      const auto& e = s.at("encoder");
      check_keys(e, "model.encoder",
                 {"n_layers", "downsample_ratio", "freeze"});
      read_int(e, "model.encoder", "n_layers", c.model.encoder.n_layers);
      read_int(e, "model.encoder", "downsample_ratio",
               c.model.encoder.downsample_ratio);
      read_bool(e, "model.encoder", "freeze", c.model.encoder.freeze);
    }
  }
  if (j.contains("optimizer")) {
    const auto& s = j.at("optimizer");
    check_keys(s, "optimizer",
               {"lr_peak", "warmup_steps", "total_steps", "beta1", "beta2",
                "eps", "weight_decay"});
    read_double(s, "optimizer", "lr_peak", c.optimizer.lr_peak);
    read_int(s, "optimizer", "warmup_steps", c.optimizer.warmup_steps);
    read_int(s, "optimizer", "total_steps", c.optimizer.total_steps);
    read_double(s, "optimizer", "beta1", c.optimizer.beta1);
    read_double(s, "optimizer", "beta2", c.optimizer.beta2);
    read_double(s, "optimizer", "eps", c.optimizer.eps);
    read_double(s, "optimizer", "weight_decay", c.optimizer.weight_decay);
  }
  if (j.contains("training")) {
    const auto& s = j.at("training");
    check_keys(s, "training",
               {"mode", "total_steps", "batch_size", "log_every", "threads"});
    std::string mode;
    read_string(s, "training", "mode", mode);
    if (!mode.empty()) {
      try {
        c.training.mode = training::mode_from_name(mode);
      } catch (const Error& e) {
        throw ConfigError(std::string("training.mode: ") + e.what());
      }
    }
    read_int(s, "training", "total_steps", c.training.total_steps);
    read_int(s, "training", "batch_size", c.training.batch_size);
    read_int(s, "training", "log_every", c.training.log_every);
    read_int(s, "training", "threads", c.training.threads);
  }
  if (j.contains("decoding")) {
    const auto& s = j.at("decoding");
    check_keys(s, "decoding",
               {"top_k", "top_p", "temperature", "length_ratio",
                "length_alpha", "max_output_steps"});
    read_int(s, "decoding", "top_k", c.decoding.top_k);
    read_double(s, "decoding", "top_p", c.decoding.top_p);
    read_double(s, "decoding", "temperature", c.decoding.temperature);
    read_double(s, "decoding", "length_ratio", c.decoding.length_ratio);
    read_double(s, "decoding", "length_alpha", c.decoding.length_alpha);
    read_int(s, "decoding", "max_output_steps", c.decoding.max_output_steps);
  }
  return c;
}

nlohmann::ordered_json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["languages"] = c.languages;
  j["corpus"] = {{"vocab_size", c.corpus.vocab_size},
                 {"reorder", c.corpus.reorder.to_string()},
                 {"expansion_factor", c.corpus.expansion_factor},
                 {"speaker_count", c.corpus.speaker_count},
                 {"n_from_source", c.corpus.n_from_source},
                 {"n_from_target", c.corpus.n_from_target},
                 {"n_test", c.corpus.n_test},
                 {"len_min", c.corpus.len_min},
                 {"len_max", c.corpus.len_max}};
  j["pseudolabel"] = {{"threshold", c.pseudolabel.threshold},
                      {"p_err", c.pseudolabel.p_err}};
  j["codec"] = {{"codebook_size", c.codec.codebook_size},
                {"frame_rate", c.codec.frame_rate},
                {"jitter_range", c.codec.jitter_range},
                {"prefix_len", c.codec.prefix_len}};
  j["layout"] = {{"mode", c.layout.mode}, {"group_size", c.layout.group_size}};
  j["model"] = {{"d_model", c.model.d_model},
                {"n_layers", c.model.n_layers},
                {"n_heads", c.model.n_heads},
                {"ffn_mult", c.model.ffn_mult},
                {"max_steps", c.model.max_steps},
                {"max_prompt_frames", c.model.max_prompt_frames},
                {"encoder",
                 {{"n_layers", c.model.encoder.n_layers},
                  {"downsample_ratio", c.model.encoder.downsample_ratio},
                  {"freeze", c.model.encoder.freeze}}}};
  j["optimizer"] = {{"lr_peak", c.optimizer.lr_peak},
                    {"warmup_steps", c.optimizer.warmup_steps},
                    {"total_steps", c.optimizer.total_steps},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps},
                    {"weight_decay", c.optimizer.weight_decay}};
  j["training"] = {{"mode", training::mode_name(c.training.mode)},
                   {"total_steps", c.training.total_steps},
                   {"batch_size", c.training.batch_size},
                   {"log_every", c.training.log_every},
                   {"threads", c.training.threads}};
  j["decoding"] = {{"top_k", c.decoding.top_k},
                   {"top_p", c.decoding.top_p},
                   {"temperature", c.decoding.temperature},
                   {"length_ratio", c.decoding.length_ratio},
                   {"length_alpha", c.decoding.length_alpha},
                   {"max_output_steps", c.decoding.max_output_steps}};
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " +
                      e.what());
  }
  auto c = config_from_json(j);
  c.validate();
  return c;
}

}  // namespace rosetta::config
