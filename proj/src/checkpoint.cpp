#include "rosetta/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace rosetta::checkpoint {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr char kBlobMagic[8] = {'R', 'S', 'T', 'T', 'N', 'S', 'R', '1'};

template <class T>
T get_field(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key))
    throw IoError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw IoError(where + ": field '" + key + "' has the wrong type");
  }
}

std::string layout_name(tokenization::SpeechHeadLayout m) {
  return m == tokenization::SpeechHeadLayout::grouped_tokens
             ? "grouped_tokens"
             : "digit_factored";
}

tokenization::SpeechHeadLayout layout_from_name(const std::string& s) {
  if (s == "grouped_tokens")
    return tokenization::SpeechHeadLayout::grouped_tokens;
  if (s == "digit_factored")
    return tokenization::SpeechHeadLayout::digit_factored;
  throw IoError("unknown speech head layout '" + s + "'");
}

}  // namespace

void Bundle::validate() const {
  vocab.validate();
  codec.validate();
  layout.validate();
  model.validate();
  if (layout.codebook_size != codec.codebook_size)
    throw ConfigError("head layout and codec disagree on codebook size");
  if (model.text_vocab != vocab.total_size())
    throw ConfigError("model text_vocab does not match the vocabulary");
  if (model.speech_head_vocab != layout.head_vocab())
    throw ConfigError("model speech_head_vocab does not match the layout");
  if (model.speech_prompt_vocab != codec.total_size())
    throw ConfigError("model speech_prompt_vocab does not match the codec");
  if (model.group_size != layout.group_size)
    throw ConfigError("model group_size does not match the layout");
}

ordered_json bundle_to_json(const Bundle& b) {
  ordered_json j;
  j["vocab"] = {{"words_per_language", b.vocab.words_per_language},
                {"languages", b.vocab.languages}};
  j["codec"] = {{"codebook_size", b.codec.codebook_size},
                {"expansion", b.codec.expansion},
                {"vocab_size", b.codec.vocab_size},
                {"frame_rate", b.codec.frame_rate},
                {"jitter_range", b.codec.jitter_range},
                {"prefix_len", b.codec.prefix_len},
                {"languages", b.codec.languages}};
  j["layout"] = {{"mode", layout_name(b.layout.mode)},
                 {"group_size", b.layout.group_size},
                 {"codebook_size", b.layout.codebook_size},
                 {"digit_base", b.layout.digit_base}};
  j["model"] = {{"d_model", b.model.d_model},
                {"n_layers", b.model.n_layers},
                {"n_heads", b.model.n_heads},
                {"ffn_mult", b.model.ffn_mult},
                {"max_steps", b.model.max_steps},
                {"max_prompt_frames", b.model.max_prompt_frames},
                {"text_vocab", b.model.text_vocab},
                {"speech_head_vocab", b.model.speech_head_vocab},
                {"speech_prompt_vocab", b.model.speech_prompt_vocab},
                {"group_size", b.model.group_size},
                {"ln_eps", b.model.ln_eps},
                {"encoder",
                 {{"n_layers", b.model.encoder.n_layers},
                  {"downsample_ratio", b.model.encoder.downsample_ratio},
                  {"freeze", b.model.encoder.freeze}}}};
  return j;
}

Bundle bundle_from_json(const json& j) {
  Bundle b;
  const json& v = j.contains("vocab") ? j.at("vocab") : json::object();
  b.vocab.words_per_language =
      get_field<int>(v, "words_per_language", "bundle.vocab");
  b.vocab.languages =
      get_field<std::vector<std::string>>(v, "languages", "bundle.vocab");

  const json& c = j.contains("codec") ? j.at("codec") : json::object();
  b.codec.codebook_size = get_field<int>(c, "codebook_size", "bundle.codec");
  b.codec.expansion = get_field<int>(c, "expansion", "bundle.codec");
  b.codec.vocab_size = get_field<int>(c, "vocab_size", "bundle.codec");
  b.codec.frame_rate = get_field<int>(c, "frame_rate", "bundle.codec");
  b.codec.jitter_range = get_field<int>(c, "jitter_range", "bundle.codec");
  b.codec.prefix_len = get_field<int>(c, "prefix_len", "bundle.codec");
  b.codec.languages =
      get_field<std::vector<std::string>>(c, "languages", "bundle.codec");

  const json& l = j.contains("layout") ? j.at("layout") : json::object();
  b.layout.mode =
      layout_from_name(get_field<std::string>(l, "mode", "bundle.layout"));
  b.layout.group_size = get_field<int>(l, "group_size", "bundle.layout");
  b.layout.codebook_size =
      get_field<int>(l, "codebook_size", "bundle.layout");
  b.layout.digit_base = get_field<int>(l, "digit_base", "bundle.layout");

  const json& m = j.contains("model") ? j.at("model") : json::object();
  b.model.d_model = get_field<int>(m, "d_model", "bundle.model");
  b.model.n_layers = get_field<int>(m, "n_layers", "bundle.model");
  b.model.n_heads = get_field<int>(m, "n_heads", "bundle.model");
  b.model.ffn_mult = get_field<int>(m, "ffn_mult", "bundle.model");
  b.model.max_steps = get_field<int>(m, "max_steps", "bundle.model");
  b.model.max_prompt_frames =
      get_field<int>(m, "max_prompt_frames", "bundle.model");
  b.model.text_vocab = get_field<int>(m, "text_vocab", "bundle.model");
  b.model.speech_head_vocab =
      get_field<int>(m, "speech_head_vocab", "bundle.model");
  b.model.speech_prompt_vocab =
      get_field<int>(m, "speech_prompt_vocab", "bundle.model");
  b.model.group_size = get_field<int>(m, "group_size", "bundle.model");
  b.model.ln_eps = get_field<double>(m, "ln_eps", "bundle.model");
  const json& e = m.contains("encoder") ? m.at("encoder") : json::object();
  b.model.encoder.n_layers =
      get_field<int>(e, "n_layers", "bundle.model.encoder");
  b.model.encoder.downsample_ratio =
      get_field<int>(e, "downsample_ratio", "bundle.model.encoder");
  b.model.encoder.freeze =
      get_field<bool>(e, "freeze", "bundle.model.encoder");
  b.validate();
  return b;
}

// ---------------------------------------------------------------------------
// Named-tensor blob

namespace {

template <class S>
constexpr uint8_t dtype_tag() {
  return sizeof(S) == 4 ? 0 : 1;
}

template <class T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in, const std::string& where) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError(where + ": truncated tensor blob");
  return v;
}

template <class S>
void write_blob(const std::string& path,
                const std::vector<model::ConstParamRef<S>>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kBlobMagic, sizeof(kBlobMagic));
  write_pod(out, dtype_tag<S>());
  write_pod(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    write_pod(out, static_cast<uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_pod(out, static_cast<uint64_t>(t.mat->rows()));
    write_pod(out, static_cast<uint64_t>(t.mat->cols()));
    out.write(reinterpret_cast<const char*>(t.mat->data()),
              static_cast<std::streamsize>(sizeof(S)) * t.mat->size());
  }
  if (!out) throw IoError("short write to '" + path + "'");
}

template <class S>
void read_blob(const std::string& path,
               const std::vector<model::ParamRef<S>>& tensors) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kBlobMagic, 8) != 0)
    throw IoError("'" + path + "' is not a tensor blob");
  auto dtype = read_pod<uint8_t>(in, path);
  if (dtype != dtype_tag<S>())
    throw IoError("'" + path + "' holds " +
                  std::string(dtype == 0 ? "f32" : "f64") +
                  " tensors; the requested precision does not match");
  auto count = read_pod<uint32_t>(in, path);
  if (count != tensors.size())
    throw IoError("'" + path + "' holds " + std::to_string(count) +
                  " tensors, expected " + std::to_string(tensors.size()));
  for (const auto& t : tensors) {
    auto name_len = read_pod<uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in || name != t.name)
      throw IoError("'" + path + "': expected tensor '" + t.name +
                    "', found '" + name + "'");
    auto rows = read_pod<uint64_t>(in, path);
    auto cols = read_pod<uint64_t>(in, path);
    if (rows != static_cast<uint64_t>(t.mat->rows()) ||
        cols != static_cast<uint64_t>(t.mat->cols()))
      throw IoError("'" + path + "': tensor '" + t.name +
                    "' has shape " + std::to_string(rows) + "x" +
                    std::to_string(cols) + ", expected " +
                    std::to_string(t.mat->rows()) + "x" +
                    std::to_string(t.mat->cols()));
    in.read(reinterpret_cast<char*>(t.mat->data()),
            static_cast<std::streamsize>(sizeof(S)) * t.mat->size());
    if (!in) throw IoError("'" + path + "': truncated tensor data");
  }
}

template <class S>
std::vector<model::ConstParamRef<S>> adam_tensors(const AdamState<S>& a) {
  std::vector<model::ConstParamRef<S>> out;
  for (const auto& e : a.m.entries())
    out.push_back({"m." + e.name, e.mat, e.kind, e.encoder});
  for (const auto& e : a.v.entries())
    out.push_back({"v." + e.name, e.mat, e.kind, e.encoder});
  return out;
}

template <class S>
std::vector<model::ParamRef<S>> adam_tensors_mut(AdamState<S>& a) {
  std::vector<model::ParamRef<S>> out;
  for (auto& e : a.m.entries())
    out.push_back({"m." + e.name, e.mat, e.kind, e.encoder});
  for (auto& e : a.v.entries())
    out.push_back({"v." + e.name, e.mat, e.kind, e.encoder});
  return out;
}

ordered_json cursor_to_json(const PoolCursor& c) {
  return {{"epoch", c.epoch}, {"offset", c.offset}};
}

PoolCursor cursor_from_json(const json& j, const std::string& where) {
  PoolCursor c;
  c.epoch = get_field<int64_t>(j, "epoch", where);
  c.offset = get_field<int64_t>(j, "offset", where);
  return c;
}

}  // namespace

template <class S>
void save_checkpoint(const std::string& dir, const Bundle& bundle,
                     const model::Parameters<S>& params,
                     const AdamState<S>* opt, const TrainingState* state) {
  bundle.validate();
  std::filesystem::create_directories(dir);
  {
    ordered_json j;
    j["bundle"] = bundle_to_json(bundle);
    j["precision"] = sizeof(S) == 4 ? "f32" : "f64";
    std::ofstream out(dir + "/config.json");
    if (!out) throw IoError("cannot write '" + dir + "/config.json'");
    out << j.dump(2) << "\n";
  }
  write_blob<S>(dir + "/weights.bin", params.entries());
  if (opt) {
    if (opt->m.param_count() != params.param_count() ||
        opt->v.param_count() != params.param_count())
      throw ConfigError("optimizer state does not match the parameters");
    write_blob<S>(dir + "/optimizer.bin", adam_tensors(*opt));
  }
  if (state) {
    ordered_json j;
    j["step"] = state->step;
    j["optimizer_t"] = opt ? opt->t : int64_t{0};
    j["cursors"] = {{"s2tt", cursor_to_json(state->s2tt)},
                    {"t2st", cursor_to_json(state->t2st)},
                    {"parallel", cursor_to_json(state->parallel)}};
    j["wall_time_s"] = state->wall_time_s;
    std::ofstream out(dir + "/training_state.json");
    if (!out) throw IoError("cannot write '" + dir + "/training_state.json'");
    out << j.dump(2) << "\n";
  }
}

Bundle load_bundle(const std::string& dir) {
  std::ifstream in(dir + "/config.json");
  if (!in) throw IoError("cannot open '" + dir + "/config.json'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("'" + dir + "/config.json' is not valid JSON: " + e.what());
  }
  if (!j.contains("bundle"))
    throw IoError("'" + dir + "/config.json' has no bundle section");
  return bundle_from_json(j.at("bundle"));
}

template <class S>
model::Parameters<S> load_params(const std::string& dir,
                                 const model::ModelConfig& cfg) {
  auto p = model::Parameters<S>::allocate(cfg);
  read_blob<S>(dir + "/weights.bin", p.entries());
  return p;
}

template <class S>
AdamState<S> load_adam(const std::string& dir,
                       const model::ModelConfig& cfg) {
  AdamState<S> a;
  a.m = model::Parameters<S>::allocate(cfg);
  a.v = model::Parameters<S>::allocate(cfg);
  read_blob<S>(dir + "/optimizer.bin", adam_tensors_mut(a));
  std::ifstream in(dir + "/training_state.json");
  if (!in) throw IoError("cannot open '" + dir + "/training_state.json'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("'" + dir + "/training_state.json' is not valid JSON: " +
                  e.what());
  }
  a.t = get_field<int64_t>(j, "optimizer_t", "training_state");
  return a;
}

TrainingState load_state(const std::string& dir) {
  std::ifstream in(dir + "/training_state.json");
  if (!in) throw IoError("cannot open '" + dir + "/training_state.json'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("'" + dir + "/training_state.json' is not valid JSON: " +
                  e.what());
  }
  TrainingState st;
  st.step = get_field<int64_t>(j, "step", "training_state");
  const json& c = j.contains("cursors") ? j.at("cursors") : json::object();
  st.s2tt = cursor_from_json(
      c.contains("s2tt") ? c.at("s2tt") : json::object(), "cursors.s2tt");
  st.t2st = cursor_from_json(
      c.contains("t2st") ? c.at("t2st") : json::object(), "cursors.t2st");
  st.parallel =
      cursor_from_json(c.contains("parallel") ? c.at("parallel") : json::object(),
                       "cursors.parallel");
  st.wall_time_s = get_field<double>(j, "wall_time_s", "training_state");
  return st;
}

bool has_optimizer_state(const std::string& dir) {
  return std::filesystem::exists(dir + "/optimizer.bin") &&
         std::filesystem::exists(dir + "/training_state.json");
}

template void save_checkpoint<float>(const std::string&, const Bundle&,
                                     const model::Parameters<float>&,
                                     const AdamState<float>*,
                                     const TrainingState*);
template void save_checkpoint<double>(const std::string&, const Bundle&,
                                      const model::Parameters<double>&,
                                      const AdamState<double>*,
                                      const TrainingState*);
template model::Parameters<float> load_params<float>(
    const std::string&, const model::ModelConfig&);
template model::Parameters<double> load_params<double>(
    const std::string&, const model::ModelConfig&);
template AdamState<float> load_adam<float>(const std::string&,
                                           const model::ModelConfig&);
template AdamState<double> load_adam<double>(const std::string&,
                                             const model::ModelConfig&);

}  // namespace rosetta::checkpoint
