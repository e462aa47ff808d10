#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "rosetta/model.hpp"
#include "rosetta/tokenization.hpp"

namespace rosetta::checkpoint {

// Everything a consumer needs to rebuild the pipeline around a weight file:
// the text token space, the codec, the head layout, and the net's shape.
struct Bundle {
  tokenization::TextVocab vocab;
  tokenization::CodecSpec codec;
  tokenization::SpeechLayoutSpec layout;
  model::ModelConfig model;

  void validate() const;  // cross-checks vocab/codec/layout vs model dims
};

nlohmann::ordered_json bundle_to_json(const Bundle& b);
Bundle bundle_from_json(const nlohmann::json& j);

// Adam moment estimates, shaped exactly like the parameters.
template <class S>
struct AdamState {
  model::Parameters<S> m, v;
  int64_t t = 0;
};

// Position of a cycling data pool: which pass over the pool we are in and
// how far into that pass's permutation the reader has advanced.
struct PoolCursor {
  int64_t epoch = 0;
  int64_t offset = 0;
  bool operator==(const PoolCursor&) const = default;
};

struct TrainingState {
  int64_t step = 0;  // completed optimizer steps
  PoolCursor s2tt, t2st, parallel;
  double wall_time_s = 0;
  bool operator==(const TrainingState&) const = default;
};

// A checkpoint is a directory holding:
//   config.json         bundle + precision tag
//   weights.bin         named-tensor blob
//   optimizer.bin       Adam first/second moments (when training state kept)
//   training_state.json step counter, pool cursors, optimizer step count
template <class S>
void save_checkpoint(const std::string& dir, const Bundle& bundle,
                     const model::Parameters<S>& params,
                     const AdamState<S>* opt, const TrainingState* state);

Bundle load_bundle(const std::string& dir);

template <class S>
model::Parameters<S> load_params(const std::string& dir,
                                 const model::ModelConfig& cfg);

template <class S>
AdamState<S> load_adam(const std::string& dir,
                       const model::ModelConfig& cfg);

TrainingState load_state(const std::string& dir);

bool has_optimizer_state(const std::string& dir);

}  // namespace rosetta::checkpoint
