#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "rosetta/common.hpp"

namespace rosetta::model {

// All dense math is row-major so matrix memory matches the serialized
// layout byte-for-byte.
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Configuration

struct EncoderConfig {
  int n_layers = 2;
  int downsample_ratio = 2;  // mean-pool window over raw prompt frames
  bool freeze = false;       // skip encoder gradients/updates when set
};

struct ModelConfig {
  int d_model = 192;
  int n_layers = 4;
  int n_heads = 4;
  int ffn_mult = 4;
  int max_steps = 160;          // decoder position table size
  int max_prompt_frames = 512;  // raw speech prompt length cap (pre-pool)
  int text_vocab = 0;           // full text token space (specials + blocks)
  int speech_head_vocab = 0;    // per-head output space
  int speech_prompt_vocab = 0;  // raw codec token space for the encoder
  int group_size = 4;           // parallel speech slots per decoder step
  EncoderConfig encoder;
  double ln_eps = 1e-5;

  void validate() const;  // throws ConfigError
  int enc_positions() const;  // pooled position table size
  int head_dim() const { return d_model / n_heads; }
};

// ---------------------------------------------------------------------------
// Parameters

enum class ParamKind {
  weight,  // dense / embedding matrix: normal init, weight decay applies
  bias,    // zero init, no decay
  gain,    // layer-norm scale: ones init, no decay
};

template <class S>
struct ParamRef {
  std::string name;
  Mat<S>* mat;
  ParamKind kind;
  bool encoder;  // true for speech-prompt-encoder parameters
};

template <class S>
struct ConstParamRef {
  std::string name;
  const Mat<S>* mat;
  ParamKind kind;
  bool encoder;
};

template <class S>
struct BlockParams {
  Mat<S> ln1_g, ln1_b;
  Mat<S> wq, bq, wk, bk, wv, bv, wo, bo;
  Mat<S> ln2_g, ln2_b;
  Mat<S> w1, b1, w2, b2;
};

// Every tensor in the model, with a stable name/order used by the
// serializer, the optimizer, and the initializer alike.
template <class S>
struct Parameters {
  Mat<S> tok_text;                 // [text_vocab, d]
  std::vector<Mat<S>> tok_speech;  // G x [speech_head_vocab, d]
  Mat<S> pos;                      // [max_steps, d]
  std::vector<BlockParams<S>> blocks;
  Mat<S> ln_f_g, ln_f_b;

  Mat<S> enc_tok;  // [speech_prompt_vocab, d]
  Mat<S> enc_pos;  // [enc_positions, d]
  std::vector<BlockParams<S>> enc_blocks;
  Mat<S> enc_ln_f_g, enc_ln_f_b;

  Mat<S> head_text_w, head_text_b;
  std::vector<Mat<S>> head_speech_w, head_speech_b;

  static Parameters<S> allocate(const ModelConfig& cfg);  // zero-filled
  void init(const ModelConfig& cfg, uint64_t seed);
  void set_zero();
  size_t param_count() const;
  std::vector<ParamRef<S>> entries();
  std::vector<ConstParamRef<S>> entries() const;
};

// ---------------------------------------------------------------------------
// Batches

// One decoding step carries a text token, `group` speech slots, and
// optionally a pointer into the encoded speech prompt. Pad conventions:
// text id 0 and the per-head pad id contribute a zero vector to the step
// input, so purely positional steps are possible.
struct SequenceBatch {
  int batch = 0;
  int steps = 0;
  int group = 0;
  int text_pad = 0;        // text id treated as "no input"
  int speech_pad = 0;      // per-head id treated as "no input"
  Grid2<int32_t> text_in;  // [B,T]
  Grid3<int32_t> speech_in;  // [B,T,G]
  Grid2<int32_t> enc_slot;   // [B,T]; index into pooled prompt, -1 = none
  std::vector<std::vector<int32_t>> prompt_speech;  // [B] raw codec tokens
  std::vector<int32_t> seq_len;                     // [B] real steps

  void validate(const ModelConfig& cfg) const;  // throws InputError
};

template <class S>
struct StepLogits {
  Mat<S> text;                 // [B*T, text_vocab], row = b*T + t
  std::vector<Mat<S>> speech;  // G x [B*T, speech_head_vocab]
};

// ---------------------------------------------------------------------------
// Activation caches for the backward pass

namespace detail {

template <class S>
struct LnCache {
  Mat<S> xhat;                // normalized input
  std::vector<S> inv_std;     // per row
};

template <class S>
struct BlockCache {
  Mat<S> x_in;
  LnCache<S> ln1;
  Mat<S> ln1_out;
  Mat<S> q, k, v;
  std::vector<Mat<S>> probs;  // per head, [T,T]
  Mat<S> heads_out;           // concatenated head outputs, pre out-proj
  Mat<S> x_mid;               // after attention residual
  LnCache<S> ln2;
  Mat<S> ln2_out;
  Mat<S> h1;  // pre-activation
  Mat<S> a1;  // post-activation
};

template <class S>
struct SeqCache {
  Mat<S> x0;
  std::vector<BlockCache<S>> blocks;
  LnCache<S> lnf;
  Mat<S> y;  // final-norm output
};

}  // namespace detail

template <class S>
struct Workspace {
  std::vector<detail::SeqCache<S>> seqs;      // per batch item (decoder)
  std::vector<detail::SeqCache<S>> enc_seqs;  // per batch item (encoder)
  std::vector<Mat<S>> pooled;                 // encoder inputs after pooling
  std::vector<Mat<S>> enc_out;                // per item, [pooled_len, d]
};

// ---------------------------------------------------------------------------
// Model

template <class S>
struct Model {
  ModelConfig cfg;
  Parameters<S> params;

  static Model<S> create(const ModelConfig& cfg, uint64_t seed);

  // Runs the speech-prompt encoder for every item with a prompt. Caches go
  // into ws when given (needed later by backward).
  std::vector<Mat<S>> encode_prompts(const SequenceBatch& batch,
                                     Workspace<S>* ws) const;

  // Sum-composition of step inputs: text embedding + per-slot speech
  // embeddings + encoded prompt vector + learned position. [B*T, d].
  Mat<S> compose_inputs(const SequenceBatch& batch,
                        const std::vector<Mat<S>>& enc_out) const;

  // Full forward pass. ws may be null for inference-only calls.
  StepLogits<S> forward(const SequenceBatch& batch, Workspace<S>* ws) const;

  // Accumulates (+=) parameter gradients for the given logit gradients.
  // ws must come from a forward() call on the same batch.
  void backward(const SequenceBatch& batch, const Workspace<S>& ws,
                const StepLogits<S>& dlogits, Parameters<S>& grads) const;
};

using ModelF = Model<float>;
using ModelD = Model<double>;

}  // namespace rosetta::model
