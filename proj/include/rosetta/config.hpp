#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rosetta/checkpoint.hpp"
#include "rosetta/corpus.hpp"
#include "rosetta/inference.hpp"
#include "rosetta/training.hpp"

namespace rosetta::config {

// One JSON document drives the whole pipeline. Schema (all keys optional,
// defaults shown; unknown keys are rejected with their full dotted path):
//
// {
//   "seed": 0,
//   "languages": ["src", "tgt"],          // exactly two; the last is the target
//   "corpus": {
//     "vocab_size": 50,
//     "reorder": "reverse",               // identity | reverse | rotate:K
//     "expansion_factor": 3,              // speech tokens per word
//     "speaker_count": 2,
//     "n_from_source": 2000,              // source-side monolingual corpus
//     "n_from_target": 2000,              // target-side monolingual corpus
//     "n_test": 200,                      // held-out parallel sentences
//     "len_min": 3, "len_max": 8
//   },
//   "pseudolabel": { "threshold": 0.8, "p_err": 0.0 },
//   "codec": {
//     "codebook_size": 256, "frame_rate": 25,
//     "jitter_range": 4, "prefix_len": 1
//   },
//   "layout": { "mode": "grouped", "group_size": 4 },  // grouped | digits
//   "model": {
//     "d_model": 192, "n_layers": 4, "n_heads": 4, "ffn_mult": 4,
//     "max_steps": 48, "max_prompt_frames": 64,
//     "encoder": { "n_layers": 2, "downsample_ratio": 2, "freeze": false }
//   },
//   "optimizer": {
//     "lr_peak": 1e-3, "warmup_steps": 500, "total_steps": 8000,
//     "beta1": 0.9, "beta2": 0.999, "eps": 1e-6, "weight_decay": 0.01
//   },
//   "training": {
//     "mode": "joint",                    // joint | s2tt_then_t2st |
//                                         // t2st_then_s2tt | finetune_parallel
//     "total_steps": 8000, "batch_size": 8,
//     "log_every": 50, "threads": 0
//   },
//   "decoding": {
//     "top_k": 20, "top_p": 0.8, "temperature": 0.95,
//     "length_ratio": 2.0, "length_alpha": 0.5, "max_output_steps": 0
//   }
// }
//
// Derived quantities are computed, never configured twice: the codec's
// word vocabulary and expansion come from `corpus`, the model's token-table
// sizes come from the vocabulary, codec and layout.
struct CorpusSection {
  int vocab_size = 50;
  corpus::ReorderRule reorder = corpus::ReorderRule::parse("reverse");
  int expansion_factor = 3;
  int speaker_count = 2;
  int n_from_source = 2000;
  int n_from_target = 2000;
  int n_test = 200;
  int len_min = 3;
  int len_max = 8;
};

struct PseudolabelSection {
  double threshold = 0.8;
  double p_err = 0.0;
};

struct CodecSection {
  int codebook_size = 256;
  int frame_rate = 25;
  int jitter_range = 4;
  int prefix_len = 1;
};

struct LayoutSection {
  std::string mode = "grouped";
  int group_size = 4;
};

struct EncoderSection {
  int n_layers = 2;
  int downsample_ratio = 2;
  bool freeze = false;
};

struct ModelSection {
  int d_model = 192;
  int n_layers = 4;
  int n_heads = 4;
  int ffn_mult = 4;
  int max_steps = 48;
  int max_prompt_frames = 64;
  EncoderSection encoder;
};

struct TrainingSection {
  training::TrainMode mode = training::TrainMode::joint;
  int total_steps = 8000;
  int batch_size = 8;
  int log_every = 50;
  int threads = 0;
};

struct RunConfig {
  uint64_t seed = 0;
  std::vector<std::string> languages{"src", "tgt"};
  CorpusSection corpus;
  PseudolabelSection pseudolabel;
  CodecSection codec;
  LayoutSection layout;
  ModelSection model;
  // Desk-scale schedule by default; the full-scale preset (2e-3 peak,
  // 10000 warmup, 100000 total) is a config away.
  training::OptimizerConfig optimizer{
      .lr_peak = 1e-3, .warmup_steps = 500, .total_steps = 8000};
  TrainingSection training;
  inference::DecodingConfig decoding;

  // Rebuilds every sub-config and validates it; errors name the offending
  // key ("pseudolabel.threshold must be in [0, 1]").
  void validate() const;

  // The assembled token spaces and model shape this config implies.
  checkpoint::Bundle bundle() const;

  // The toy translation pair between the two configured languages,
  // deterministic in the global seed.
  corpus::LanguagePairSpec language_pair() const;

  tokenization::CodecSpec codec_spec() const;

  training::TrainerConfig trainer_config() const;

  // Per-stage seeds all fan out of the global seed through the same keyed
  // hash, so one number reproduces the entire pipeline.
  uint64_t stage_seed(const std::string& stage) const;
};

// Strict parse: every key must be known, every value well-typed; violations
// throw ConfigError naming the full dotted path.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const RunConfig& c);

// Reads and parses a JSON config file (IoError on unreadable file,
// ConfigError on malformed or unknown content).
RunConfig load_config(const std::string& path);

}  // namespace rosetta::config
