#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "rosetta/checkpoint.hpp"
#include "rosetta/model.hpp"
#include "rosetta/pseudolabel.hpp"
#include "rosetta/tokenization.hpp"

namespace rosetta::training {

// ---------------------------------------------------------------------------
// Batch construction

// The two training branches plus parallel fine-tuning. Speech-in/text-out
// uses the first task tag; text-in/joint-out uses the second. Fine-tuning
// pairs keep the second tag but feed a speech prompt — exactly the
// configuration speech-to-speech inference exercises.
enum class Task { s2tt, t2st, parallel_ft };

const char* task_name(Task t);

struct TrainingBatch {
  Task task = Task::s2tt;
  model::SequenceBatch seq;
  Grid2<int32_t> text_tgt;     // [B,T]
  Grid3<int32_t> speech_tgt;   // [B,T,G] head-space ids
  Grid2<uint8_t> text_mask;    // [B,T]
  Grid2<uint8_t> speech_mask;  // [B,T]; applies to every head
  // Supervised-position counts used as loss denominators. When a batch is
  // evaluated in chunks these stay the whole-batch counts, which makes
  // chunked loss/gradient sums equal the unchunked ones.
  int64_t text_count = 0;
  int64_t speech_count = 0;
};

// Lays out prompts and teacher-forced targets for a set of triplets.
//   s2tt        from_source triplets: [tag][encoded speech][sep] -> text
//   t2st        from_target triplets: [tag][source text][sep] -> text, speech
//   parallel_ft parallel triplets:    [tag][encoded speech][sep] -> text, speech
// Output streams are segmented: the text stream runs first (words then its
// EOS), and the grouped speech stream starts on the following step, so every
// speech prediction sees the complete generated text. Speech prompts occupy
// ceil(len / downsample_ratio) encoder-slot positions, matching the prompt
// encoder's pooling.
// Throws ConfigError when a triplet kind does not fit the task.
TrainingBatch make_batch(const std::vector<pseudolabel::Triplet>& triplets,
                         const std::vector<int64_t>& indices, Task task,
                         const tokenization::TextVocab& vocab,
                         const tokenization::CodecSpec& codec,
                         const tokenization::SpeechLayoutSpec& layout,
                         int downsample_ratio);

// A row slice of a batch (items [first, first+count)), sharing the step
// count and the whole-batch loss denominators.
TrainingBatch slice_batch(const TrainingBatch& batch, int first, int count);

// ---------------------------------------------------------------------------
// Loss

struct LossParts {
  double s2tt = 0;
  double t2st_text = 0;
  double t2st_speech = 0;
  double total() const { return s2tt + t2st_text + t2st_speech; }
};

// Masked mean cross-entropy per stream:
//   text   = sum(CE at text_mask) / text_count
//   speech = mean over heads of sum(CE at speech_mask) / speech_count
// Accumulation is in double regardless of S. When dlogits is given it is
// resized and filled with d(loss)/d(logits) under the same scaling.
template <class S>
struct StreamLoss {
  double text = 0;
  double speech = 0;
};

template <class S>
StreamLoss<S> compute_loss(const model::StepLogits<S>& logits,
                           const TrainingBatch& batch,
                           model::StepLogits<S>* dlogits);

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerConfig {
  double lr_peak = 2e-3;
  int warmup_steps = 10000;
  int total_steps = 100000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double weight_decay = 0.01;

  void validate() const;
};

// Linear warmup from zero to lr_peak at warmup_steps, then linear decay to
// zero at total_steps. Steps are the 1-based update count; step 0 is the
// (unused) value before the first update. Outside [0, total_steps] throws.
double lr_at(int64_t step, const OptimizerConfig& cfg);

// One decoupled-weight-decay Adam update over every parameter entry.
// `lr` is the already-scheduled rate; update_encoder=false skips entries
// belonging to a frozen prompt encoder.
template <class S>
void adamw_step(model::Parameters<S>& params,
                const model::Parameters<S>& grads,
                checkpoint::AdamState<S>& state, const OptimizerConfig& cfg,
                double lr, bool update_encoder);

// ---------------------------------------------------------------------------
// Trainer

enum class TrainMode { joint, s2tt_then_t2st, t2st_then_s2tt, finetune_parallel };

const char* mode_name(TrainMode m);
TrainMode mode_from_name(const std::string& s);  // ConfigError when unknown

struct TrainerConfig {
  TrainMode mode = TrainMode::joint;
  int total_steps = 8000;
  int batch_size = 8;  // per task batch
  OptimizerConfig optim;
  uint64_t seed = 0;
  std::string metrics_path;     // CSV ("" = keep in memory only)
  std::string access_log_path;  // per-step triplet ids ("" = off)
  int log_every = 50;
  int threads = 0;  // 0 = worker_threads()

  void validate() const;
};

struct MetricsRow {
  int64_t step = 0;
  double lr = 0;
  LossParts loss;
  double wall_time_s = 0;
};

// Runs the two-branch training loop over pseudo-parallel triplets.
//
// Pool handling: from_source triplets feed the s2tt branch, from_target
// triplets feed the t2st branch, parallel pairs feed fine-tuning. Each pool
// is cycled with a per-pass permutation that is a pure function of
// (seed, pool name, pass index), so a run is reproducible from its cursors
// alone. Batches for joint mode draw from both pools every step; sequential
// modes run the first branch to completion over half the budget and then
// the second branch over the rest, each phase under its own full
// warmup/decay cycle with freshly zeroed optimizer moments.
template <class S>
class Trainer {
 public:
  Trainer(model::Model<S> model, checkpoint::Bundle bundle,
          std::vector<pseudolabel::Triplet> triplets, TrainerConfig cfg);
  // Pools hold pointers into the trainer's own state; pin the object.
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // Replaces weights, optimizer moments, and cursors from a directory.
  void load_checkpoint(const std::string& dir);
  // Drops optimizer moments and the step counter but keeps the weights:
  // fine-tuning starts its own schedule on top of trained weights.
  void reset_training_state();

  void train();  // runs steps state.step+1 .. cfg.total_steps
  void save_checkpoint(const std::string& dir) const;

  const model::Model<S>& model() const { return model_; }
  const checkpoint::TrainingState& state() const { return state_; }
  const std::vector<MetricsRow>& metrics() const { return metrics_; }

 private:
  struct Pool {
    std::string name;
    std::vector<int64_t> ids;  // indices into triplets_
    checkpoint::PoolCursor* cursor = nullptr;
    std::vector<int64_t> perm;  // permutation of [0, ids.size())
    int64_t cached_epoch = -1;
  };

  std::vector<int64_t> next_indices(Pool& pool, int count);
  double effective_lr(int64_t step) const;
  LossParts run_step(int64_t step);
  void accumulate_task(Task task, const std::vector<int64_t>& indices,
                       StreamLoss<S>& loss_out);

  model::Model<S> model_;
  checkpoint::Bundle bundle_;
  std::vector<pseudolabel::Triplet> triplets_;
  TrainerConfig cfg_;
  checkpoint::AdamState<S> opt_;
  checkpoint::TrainingState state_;
  Pool s2tt_pool_, t2st_pool_, parallel_pool_;
  model::Parameters<S> grads_;
  std::vector<model::Parameters<S>> chunk_grads_;
  std::vector<MetricsRow> metrics_;
  std::ofstream access_log_;
  double wall_accum_ = 0;
};

}  // namespace rosetta::training
