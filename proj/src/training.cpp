#include "rosetta/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace rosetta::training {

using pseudolabel::Triplet;
using pseudolabel::TripletKind;
using tokenization::CodecSpec;
using tokenization::SpeechLayoutSpec;
using tokenization::TextVocab;

const char* task_name(Task t) {
  switch (t) {
    case Task::s2tt: return "s2tt";
    case Task::t2st: return "t2st";
    case Task::parallel_ft: return "parallel_ft";
  }
  return "?";
}

const char* mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::joint: return "joint";
    case TrainMode::s2tt_then_t2st: return "s2tt_then_t2st";
    case TrainMode::t2st_then_s2tt: return "t2st_then_s2tt";
    case TrainMode::finetune_parallel: return "finetune_parallel";
  }
  return "?";
}

TrainMode mode_from_name(const std::string& s) {
  if (s == "joint") return TrainMode::joint;
  if (s == "s2tt_then_t2st") return TrainMode::s2tt_then_t2st;
  if (s == "t2st_then_s2tt") return TrainMode::t2st_then_s2tt;
  if (s == "finetune_parallel") return TrainMode::finetune_parallel;
  throw ConfigError("unknown training mode '" + s + "'");
}

// ---------------------------------------------------------------------------
// Batch construction

namespace {

TripletKind kind_for_task(Task task) {
  switch (task) {
    case Task::s2tt: return TripletKind::from_source;
    case Task::t2st: return TripletKind::from_target;
    case Task::parallel_ft: return TripletKind::parallel;
  }
  return TripletKind::from_source;
}

}  // namespace

TrainingBatch make_batch(const std::vector<Triplet>& triplets,
                         const std::vector<int64_t>& indices, Task task,
                         const tokenization::TextVocab& vocab,
                         const tokenization::CodecSpec& codec,
                         const tokenization::SpeechLayoutSpec& layout,
                         int downsample_ratio) {
  if (indices.empty()) throw ConfigError("cannot build an empty batch");
  if (downsample_ratio < 1)
    throw ConfigError("downsample_ratio must be at least 1");
  const int G = layout.group_size;
  const int32_t head_pad = layout.head_pad();
  const bool speech_prompt = task != Task::t2st;
  const bool speech_out = task != Task::s2tt;

  struct Plan {
    const Triplet* trip;
    tokenization::TokenSeq text_prompt;  // encoded input text tokens
    tokenization::TokenSeq text_out;     // encoded output text tokens
    Grid2<int32_t> speech_grid;          // [Q,G] output rows in head space
    int pooled = 0;
    int sep_pos = 0;
    int out_steps = 0;
    int total = 0;
  };
  std::vector<Plan> plans;
  plans.reserve(indices.size());

  for (int64_t id : indices) {
    if (id < 0 || id >= static_cast<int64_t>(triplets.size()))
      throw ConfigError("triplet index out of range");
    const Triplet& t = triplets[static_cast<size_t>(id)];
    if (t.kind != kind_for_task(task))
      throw ConfigError(std::string("task ") + task_name(task) +
                        " cannot train on a " +
                        pseudolabel::kind_name(t.kind) + " triplet");
    t.validate();
    Plan p;
    p.trip = &t;
    const int src_lang = vocab.language_index(t.src_language);
    const int tgt_lang = vocab.language_index(t.tgt_language);

    if (speech_prompt) {
      const int L = static_cast<int>(t.s_src->size());
      if (L == 0) throw ConfigError("speech prompt must be non-empty");
      p.pooled = (L + downsample_ratio - 1) / downsample_ratio;
    } else {
      for (int32_t w : t.t_src)
        p.text_prompt.push_back(vocab.word_token(src_lang, w));
    }
    for (int32_t w : t.t_tgt)
      p.text_out.push_back(vocab.word_token(tgt_lang, w));
    if (speech_out) {
      tokenization::TokenSeq with_eos = *t.s_tgt;
      with_eos.push_back(codec.eos());
      p.speech_grid = layout.to_step_grid(with_eos);
    }

    const int prompt_len =
        speech_prompt ? p.pooled : static_cast<int>(p.text_prompt.size());
    p.sep_pos = 1 + prompt_len;  // [task][prompt...][sep]
    const int text_steps = static_cast<int>(p.text_out.size()) + 1;  // + EOS
    const int speech_steps = speech_out ? p.speech_grid.n0 : 0;
    // The text segment runs to completion before the first speech group, so
    // the speech stream always has the whole generated translation in
    // context and never has to read the prompt to know a word it has not
    // produced yet. That ordering is what lets a text-prompted speech
    // continuation carry over to speech-prompted inputs.
    p.out_steps = text_steps + speech_steps;
    // Logits at the separator predict output step 0, so the sequence ends
    // at the position whose logits predict the final step.
    p.total = p.sep_pos + p.out_steps;
    plans.push_back(std::move(p));
  }

  const int B = static_cast<int>(plans.size());
  int T = 0;
  for (const auto& p : plans) T = std::max(T, p.total);

  TrainingBatch b;
  b.task = task;
  b.seq.batch = B;
  b.seq.steps = T;
  b.seq.group = G;
  b.seq.text_pad = tokenization::kPadText;
  b.seq.speech_pad = head_pad;
  b.seq.text_in = Grid2<int32_t>(B, T, tokenization::kPadText);
  b.seq.speech_in = Grid3<int32_t>(B, T, G, head_pad);
  b.seq.enc_slot = Grid2<int32_t>(B, T, -1);
  b.seq.prompt_speech.resize(static_cast<size_t>(B));
  b.seq.seq_len.resize(static_cast<size_t>(B));
  b.text_tgt = Grid2<int32_t>(B, T, tokenization::kPadText);
  b.speech_tgt = Grid3<int32_t>(B, T, G, head_pad);
  b.text_mask = Grid2<uint8_t>(B, T, 0);
  b.speech_mask = Grid2<uint8_t>(B, T, 0);

  for (int i = 0; i < B; ++i) {
    const Plan& p = plans[static_cast<size_t>(i)];
    b.seq.seq_len[static_cast<size_t>(i)] = p.total;
    // The tag names the prompt modality: speech-prompted layouts (s2tt and
    // parallel fine-tuning, which matches the speech-to-speech decode path)
    // share the s2tt tag; text-prompted layouts carry the t2st tag.
    b.seq.text_in(i, 0) =
        task == Task::t2st ? tokenization::kTaskT2st : tokenization::kTaskS2tt;
    if (speech_prompt) {
      b.seq.prompt_speech[static_cast<size_t>(i)] = *p.trip->s_src;
      for (int s = 0; s < p.pooled; ++s) b.seq.enc_slot(i, 1 + s) = s;
    } else {
      for (size_t s = 0; s < p.text_prompt.size(); ++s)
        b.seq.text_in(i, 1 + static_cast<int>(s)) = p.text_prompt[s];
    }
    b.seq.text_in(i, p.sep_pos) = tokenization::kSep;

    const int n_text = static_cast<int>(p.text_out.size());
    const int n_speech = p.speech_grid.n0;
    for (int k = 0; k < p.out_steps; ++k) {
      const int pos = p.sep_pos + k;  // position whose logits predict step k
      const int ks = k - (n_text + 1);  // speech-grid row once text is done
      // targets: words then EOS on the text stream, then the speech grid
      if (k <= n_text) {
        b.text_tgt(i, pos) =
            k < n_text ? p.text_out[static_cast<size_t>(k)]
                       : tokenization::kEosText;
        b.text_mask(i, pos) = 1;
        ++b.text_count;
      }
      if (ks >= 0 && ks < n_speech) {
        for (int g = 0; g < G; ++g)
          b.speech_tgt(i, pos, g) = p.speech_grid(ks, g);
        b.speech_mask(i, pos) = 1;
        ++b.speech_count;
      }
      // teacher-forced inputs at the next position repeat this step's target
      const int next = pos + 1;
      if (next < p.total) {
        if (k < n_text)
          b.seq.text_in(i, next) = p.text_out[static_cast<size_t>(k)];
        else if (k == n_text)
          b.seq.text_in(i, next) = tokenization::kEosText;
        if (ks >= 0 && ks < n_speech)
          for (int g = 0; g < G; ++g)
            b.seq.speech_in(i, next, g) = p.speech_grid(ks, g);
      }
    }
  }
  return b;
}

TrainingBatch slice_batch(const TrainingBatch& batch, int first, int count) {
  TrainingBatch out;
  out.task = batch.task;
  out.text_count = batch.text_count;
  out.speech_count = batch.speech_count;
  const int T = batch.seq.steps, G = batch.seq.group;
  out.seq.batch = count;
  out.seq.steps = T;
  out.seq.group = G;
  out.seq.text_pad = batch.seq.text_pad;
  out.seq.speech_pad = batch.seq.speech_pad;
  out.seq.text_in = Grid2<int32_t>(count, T);
  out.seq.speech_in = Grid3<int32_t>(count, T, G);
  out.seq.enc_slot = Grid2<int32_t>(count, T);
  out.text_tgt = Grid2<int32_t>(count, T);
  out.speech_tgt = Grid3<int32_t>(count, T, G);
  out.text_mask = Grid2<uint8_t>(count, T);
  out.speech_mask = Grid2<uint8_t>(count, T);
  for (int i = 0; i < count; ++i) {
    const int src = first + i;
    out.seq.prompt_speech.push_back(
        batch.seq.prompt_speech[static_cast<size_t>(src)]);
    out.seq.seq_len.push_back(batch.seq.seq_len[static_cast<size_t>(src)]);
    for (int t = 0; t < T; ++t) {
      out.seq.text_in(i, t) = batch.seq.text_in(src, t);
      out.seq.enc_slot(i, t) = batch.seq.enc_slot(src, t);
      out.text_tgt(i, t) = batch.text_tgt(src, t);
      out.text_mask(i, t) = batch.text_mask(src, t);
      out.speech_mask(i, t) = batch.speech_mask(src, t);
      for (int g = 0; g < G; ++g) {
        out.seq.speech_in(i, t, g) = batch.seq.speech_in(src, t, g);
        out.speech_tgt(i, t, g) = batch.speech_tgt(src, t, g);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss

namespace {

// Stable cross-entropy for one logits row, accumulated in double. When
// dmat is non-null, writes scaled (softmax - onehot) into its row r.
template <class S>
double row_cross_entropy(const model::Mat<S>& logits, Eigen::Index r,
                         int32_t target, double inv_count,
                         model::Mat<S>* dmat, std::vector<double>& scratch) {
  const Eigen::Index V = logits.cols();
  scratch.resize(static_cast<size_t>(V));
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < V; ++i)
    mx = std::max(mx, static_cast<double>(logits(r, i)));
  double sum = 0;
  for (Eigen::Index i = 0; i < V; ++i) {
    double e = std::exp(static_cast<double>(logits(r, i)) - mx);
    scratch[static_cast<size_t>(i)] = e;
    sum += e;
  }
  double ce = std::log(sum) - (static_cast<double>(logits(r, target)) - mx);
  if (dmat) {
    for (Eigen::Index i = 0; i < V; ++i) {
      double p = scratch[static_cast<size_t>(i)] / sum;
      if (i == target) p -= 1.0;
      (*dmat)(r, i) = static_cast<S>(p * inv_count);
    }
  }
  return ce;
}

}  // namespace

template <class S>
StreamLoss<S> compute_loss(const model::StepLogits<S>& logits,
                           const TrainingBatch& batch,
                           model::StepLogits<S>* dlogits) {
  const int B = batch.seq.batch, T = batch.seq.steps, G = batch.seq.group;
  if (dlogits) {
    dlogits->text =
        model::Mat<S>::Zero(logits.text.rows(), logits.text.cols());
    dlogits->speech.assign(static_cast<size_t>(G), model::Mat<S>());
    for (int g = 0; g < G; ++g)
      dlogits->speech[static_cast<size_t>(g)] = model::Mat<S>::Zero(
          logits.speech[static_cast<size_t>(g)].rows(),
          logits.speech[static_cast<size_t>(g)].cols());
  }

  std::vector<double> scratch;
  double text_sum = 0, speech_sum = 0;
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < T; ++t) {
      const Eigen::Index r = static_cast<Eigen::Index>(b) * T + t;
      if (batch.text_mask(b, t)) {
        if (batch.text_count <= 0)
          throw InputError("text positions masked in but text_count is 0");
        text_sum += row_cross_entropy(
            logits.text, r, batch.text_tgt(b, t),
            1.0 / static_cast<double>(batch.text_count),
            dlogits ? &dlogits->text : nullptr, scratch);
      }
      if (batch.speech_mask(b, t)) {
        if (batch.speech_count <= 0)
          throw InputError("speech positions masked in but speech_count is 0");
        const double inv = 1.0 / (static_cast<double>(G) *
                                  static_cast<double>(batch.speech_count));
        for (int g = 0; g < G; ++g)
          speech_sum += row_cross_entropy(
              logits.speech[static_cast<size_t>(g)], r,
              batch.speech_tgt(b, t, g), inv,
              dlogits ? &dlogits->speech[static_cast<size_t>(g)] : nullptr,
              scratch);
      }
    }

  StreamLoss<S> out;
  if (batch.text_count > 0)
    out.text = text_sum / static_cast<double>(batch.text_count);
  if (batch.speech_count > 0)
    out.speech = speech_sum / (static_cast<double>(G) *
                               static_cast<double>(batch.speech_count));
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

void OptimizerConfig::validate() const {
  if (!(lr_peak > 0)) throw ConfigError("lr_peak must be positive");
  if (warmup_steps < 1) throw ConfigError("warmup_steps must be at least 1");
  if (total_steps < warmup_steps)
    throw ConfigError("total_steps must cover the warmup");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw ConfigError("betas must lie in [0, 1)");
  if (!(eps > 0)) throw ConfigError("optimizer eps must be positive");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
}

double lr_at(int64_t step, const OptimizerConfig& cfg) {
  cfg.validate();
  if (step < 0 || step > cfg.total_steps)
    throw InputError("schedule step " + std::to_string(step) +
                     " outside [0, " + std::to_string(cfg.total_steps) + "]");
  if (step <= cfg.warmup_steps)
    return cfg.lr_peak * static_cast<double>(step) /
           static_cast<double>(cfg.warmup_steps);
  return cfg.lr_peak *
         static_cast<double>(cfg.total_steps - step) /
         static_cast<double>(cfg.total_steps - cfg.warmup_steps);
}

template <class S>
void adamw_step(model::Parameters<S>& params,
                const model::Parameters<S>& grads,
                checkpoint::AdamState<S>& state, const OptimizerConfig& cfg,
                double lr, bool update_encoder) {
  state.t += 1;
  const S b1 = static_cast<S>(cfg.beta1);
  const S b2 = static_cast<S>(cfg.beta2);
  const S bc1 =
      static_cast<S>(1.0 - std::pow(cfg.beta1, static_cast<double>(state.t)));
  const S bc2 =
      static_cast<S>(1.0 - std::pow(cfg.beta2, static_cast<double>(state.t)));
  const S eps = static_cast<S>(cfg.eps);
  const S wd = static_cast<S>(cfg.weight_decay);
  const S step_size = static_cast<S>(lr);

  auto pe = params.entries();
  auto ge = grads.entries();
  auto me = state.m.entries();
  auto ve = state.v.entries();
  for (size_t i = 0; i < pe.size(); ++i) {
    if (!update_encoder && pe[i].encoder) continue;
    model::Mat<S>& p = *pe[i].mat;
    const model::Mat<S>& g = *ge[i].mat;
    model::Mat<S>& m = *me[i].mat;
    model::Mat<S>& v = *ve[i].mat;
    m = b1 * m + (S(1) - b1) * g;
    v = b2 * v + (S(1) - b2) * g.cwiseProduct(g);
    model::Mat<S> update =
        (m / bc1).cwiseQuotient(((v / bc2).cwiseSqrt().array() + eps).matrix());
    if (pe[i].kind == model::ParamKind::weight) update += wd * p;
    p -= step_size * update;
  }
}

// ---------------------------------------------------------------------------
// Trainer

void TrainerConfig::validate() const {
  if (total_steps < 1) throw ConfigError("total_steps must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (log_every < 1) throw ConfigError("log_every must be at least 1");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  optim.validate();
  if (optim.total_steps < total_steps)
    throw ConfigError("the learning-rate schedule must cover the whole run");
}

namespace {
// Items per gradient chunk. Fixed (rather than derived from the worker
// count) so gradient summation order — and therefore every trained bit —
// is identical no matter how many threads execute the chunks.
constexpr int kChunkItems = 4;
}  // namespace

template <class S>
Trainer<S>::Trainer(model::Model<S> model, checkpoint::Bundle bundle,
                    std::vector<pseudolabel::Triplet> triplets,
                    TrainerConfig cfg)
    : model_(std::move(model)),
      bundle_(std::move(bundle)),
      triplets_(std::move(triplets)),
      cfg_(cfg) {
  cfg_.validate();
  bundle_.validate();
  if (bundle_.model.d_model != model_.cfg.d_model ||
      bundle_.model.text_vocab != model_.cfg.text_vocab)
    throw ConfigError("bundle and model configuration disagree");

  s2tt_pool_.name = "s2tt";
  t2st_pool_.name = "t2st";
  parallel_pool_.name = "parallel";
  s2tt_pool_.cursor = &state_.s2tt;
  t2st_pool_.cursor = &state_.t2st;
  parallel_pool_.cursor = &state_.parallel;
  for (int64_t i = 0; i < static_cast<int64_t>(triplets_.size()); ++i) {
    switch (triplets_[static_cast<size_t>(i)].kind) {
      case TripletKind::from_source: s2tt_pool_.ids.push_back(i); break;
      case TripletKind::from_target: t2st_pool_.ids.push_back(i); break;
      case TripletKind::parallel: parallel_pool_.ids.push_back(i); break;
    }
  }

  if (cfg_.mode == TrainMode::finetune_parallel) {
    if (parallel_pool_.ids.empty())
      throw ConfigError("fine-tuning needs parallel pairs");
    if (!s2tt_pool_.ids.empty() || !t2st_pool_.ids.empty())
      throw ConfigError(
          "fine-tuning takes only parallel pairs; remove other triplets");
  } else {
    if (!parallel_pool_.ids.empty())
      throw ConfigError(
          "parallel pairs are not allowed in zero-shot training modes");
    if (s2tt_pool_.ids.empty() || t2st_pool_.ids.empty())
      throw ConfigError("training needs both from_source and from_target "
                        "triplets");
  }

  grads_ = model::Parameters<S>::allocate(model_.cfg);
  opt_.m = model::Parameters<S>::allocate(model_.cfg);
  opt_.v = model::Parameters<S>::allocate(model_.cfg);
}

template <class S>
void Trainer<S>::load_checkpoint(const std::string& dir) {
  model_.params = checkpoint::load_params<S>(dir, model_.cfg);
  if (checkpoint::has_optimizer_state(dir)) {
    opt_ = checkpoint::load_adam<S>(dir, model_.cfg);
    state_ = checkpoint::load_state(dir);
    wall_accum_ = state_.wall_time_s;
  } else {
    reset_training_state();
  }
}

template <class S>
void Trainer<S>::reset_training_state() {
  opt_.m.set_zero();
  opt_.v.set_zero();
  opt_.t = 0;
  state_ = checkpoint::TrainingState{};
  state_.s2tt = {};
  state_.t2st = {};
  state_.parallel = {};
  wall_accum_ = 0;
}

template <class S>
void Trainer<S>::save_checkpoint(const std::string& dir) const {
  checkpoint::TrainingState st = state_;
  st.wall_time_s = wall_accum_;
  checkpoint::save_checkpoint<S>(dir, bundle_, model_.params, &opt_, &st);
}

template <class S>
std::vector<int64_t> Trainer<S>::next_indices(Pool& pool, int count) {
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(count));
  const int64_t n = static_cast<int64_t>(pool.ids.size());
  for (int k = 0; k < count; ++k) {
    if (pool.cursor->offset >= n) {
      pool.cursor->offset = 0;
      pool.cursor->epoch += 1;
    }
    if (pool.cached_epoch != pool.cursor->epoch) {
      pool.perm.resize(static_cast<size_t>(n));
      std::iota(pool.perm.begin(), pool.perm.end(), int64_t{0});
      Rng rng(derive_seed(mix_seed(cfg_.seed,
                                   static_cast<uint64_t>(pool.cursor->epoch)),
                          "pool-order-" + pool.name));
      rng.shuffle(pool.perm);
      pool.cached_epoch = pool.cursor->epoch;
    }
    out.push_back(
        pool.ids[static_cast<size_t>(pool.perm[static_cast<size_t>(
            pool.cursor->offset)])]);
    pool.cursor->offset += 1;
  }
  return out;
}

template <class S>
void Trainer<S>::accumulate_task(Task task, const std::vector<int64_t>& ids,
                                 StreamLoss<S>& loss_out) {
  TrainingBatch batch =
      make_batch(triplets_, ids, task, bundle_.vocab, bundle_.codec,
                 bundle_.layout, model_.cfg.encoder.downsample_ratio);
  const int B = batch.seq.batch;
  const int n_chunks = (B + kChunkItems - 1) / kChunkItems;
  while (static_cast<int>(chunk_grads_.size()) < n_chunks)
    chunk_grads_.push_back(model::Parameters<S>::allocate(model_.cfg));
  std::vector<StreamLoss<S>> chunk_loss(static_cast<size_t>(n_chunks));
  for (int c = 0; c < n_chunks; ++c)
    chunk_grads_[static_cast<size_t>(c)].set_zero();

  const int threads = cfg_.threads > 0 ? cfg_.threads : worker_threads();
  parallel_for_jobs(n_chunks, threads, [&](int job, int) {
    const int first = job * kChunkItems;
    const int count = std::min(kChunkItems, B - first);
    TrainingBatch chunk = slice_batch(batch, first, count);
    model::Workspace<S> ws;
    auto logits = model_.forward(chunk.seq, &ws);
    model::StepLogits<S> dlogits;
    chunk_loss[static_cast<size_t>(job)] =
        compute_loss<S>(logits, chunk, &dlogits);
    model_.backward(chunk.seq, ws, dlogits,
                    chunk_grads_[static_cast<size_t>(job)]);
  });

  // Ordered reduction: chunk order, never worker order.
  auto dst = grads_.entries();
  for (int c = 0; c < n_chunks; ++c) {
    auto src = chunk_grads_[static_cast<size_t>(c)].entries();
    for (size_t i = 0; i < dst.size(); ++i) *dst[i].mat += *src[i].mat;
    loss_out.text += chunk_loss[static_cast<size_t>(c)].text;
    loss_out.speech += chunk_loss[static_cast<size_t>(c)].speech;
  }
}

template <class S>
double Trainer<S>::effective_lr(int64_t step) const {
  const bool sequential = cfg_.mode == TrainMode::s2tt_then_t2st ||
                          cfg_.mode == TrainMode::t2st_then_s2tt;
  if (!sequential) return lr_at(step, cfg_.optim);
  // Each phase is a full training run of its own: it gets a complete
  // warmup/decay cycle (warmup scaled to the phase length) instead of
  // inheriting the tail of a shared schedule, so the second task trains at
  // full strength just like the first.
  const int64_t half = cfg_.total_steps / 2;
  OptimizerConfig phase = cfg_.optim;
  phase.total_steps = static_cast<int>(step <= half ? half
                                                    : cfg_.total_steps - half);
  phase.warmup_steps = static_cast<int>(
      static_cast<int64_t>(cfg_.optim.warmup_steps) * phase.total_steps /
      cfg_.optim.total_steps);
  return lr_at(step <= half ? step : step - half, phase);
}

template <class S>
LossParts Trainer<S>::run_step(int64_t step) {
  std::vector<Task> tasks;
  const int64_t half = cfg_.total_steps / 2;
  switch (cfg_.mode) {
    case TrainMode::joint:
      tasks = {Task::s2tt, Task::t2st};
      break;
    case TrainMode::s2tt_then_t2st:
      tasks = {step <= half ? Task::s2tt : Task::t2st};
      break;
    case TrainMode::t2st_then_s2tt:
      tasks = {step <= half ? Task::t2st : Task::s2tt};
      break;
    case TrainMode::finetune_parallel:
      tasks = {Task::parallel_ft};
      break;
  }
  if ((cfg_.mode == TrainMode::s2tt_then_t2st ||
       cfg_.mode == TrainMode::t2st_then_s2tt) &&
      step == half + 1) {
    // Phase switch: the second task starts with fresh optimizer moments,
    // exactly like fine-tuning from the phase-one weights. Keyed off the
    // step number so a resumed run replays it identically.
    opt_.m.set_zero();
    opt_.v.set_zero();
    opt_.t = 0;
  }

  grads_.set_zero();
  LossParts parts;
  for (Task task : tasks) {
    Pool& pool = task == Task::s2tt      ? s2tt_pool_
                 : task == Task::t2st    ? t2st_pool_
                                         : parallel_pool_;
    auto ids = next_indices(pool, cfg_.batch_size);
    if (access_log_.is_open()) {
      access_log_ << step << ',' << task_name(task) << ',';
      for (size_t i = 0; i < ids.size(); ++i)
        access_log_ << (i ? " " : "") << ids[i];
      access_log_ << '\n';
    }
    StreamLoss<S> sl;
    accumulate_task(task, ids, sl);
    if (task == Task::s2tt) {
      parts.s2tt = sl.text;
    } else {
      parts.t2st_text = sl.text;
      parts.t2st_speech = sl.speech;
    }
  }

  const double lr = effective_lr(step);
  adamw_step(model_.params, grads_, opt_, cfg_.optim, lr,
             !model_.cfg.encoder.freeze);
  return parts;
}

template <class S>
void Trainer<S>::train() {
  namespace fs = std::filesystem;
  std::ofstream metrics_file;
  if (!cfg_.metrics_path.empty()) {
    const bool fresh =
        !fs::exists(cfg_.metrics_path) || fs::file_size(cfg_.metrics_path) == 0;
    metrics_file.open(cfg_.metrics_path, std::ios::app);
    if (!metrics_file)
      throw IoError("cannot open metrics file '" + cfg_.metrics_path + "'");
    if (fresh)
      metrics_file
          << "step,lr,l_s2tt,l_t2st_text,l_t2st_speech,l_total,wall_time_s\n";
  }
  if (!cfg_.access_log_path.empty() && !access_log_.is_open()) {
    access_log_.open(cfg_.access_log_path, std::ios::app);
    if (!access_log_)
      throw IoError("cannot open access log '" + cfg_.access_log_path + "'");
  }

  for (int64_t step = state_.step + 1; step <= cfg_.total_steps; ++step) {
    auto t0 = std::chrono::steady_clock::now();
    LossParts parts = run_step(step);
    auto t1 = std::chrono::steady_clock::now();
    wall_accum_ += std::chrono::duration<double>(t1 - t0).count();
    state_.step = step;
    state_.wall_time_s = wall_accum_;
    if (step % cfg_.log_every == 0 || step == 1 || step == cfg_.total_steps) {
      MetricsRow row;
      row.step = step;
      row.lr = effective_lr(step);
      row.loss = parts;
      row.wall_time_s = wall_accum_;
      metrics_.push_back(row);
      if (metrics_file.is_open()) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.3f\n",
                      static_cast<long long>(row.step), row.lr, parts.s2tt,
                      parts.t2st_text, parts.t2st_speech, parts.total(),
                      row.wall_time_s);
        metrics_file << buf;
        metrics_file.flush();
      }
    }
  }
  if (access_log_.is_open()) access_log_.flush();
}

template struct StreamLoss<float>;
template struct StreamLoss<double>;
template StreamLoss<float> compute_loss<float>(const model::StepLogits<float>&,
                                               const TrainingBatch&,
                                               model::StepLogits<float>*);
template StreamLoss<double> compute_loss<double>(
    const model::StepLogits<double>&, const TrainingBatch&,
    model::StepLogits<double>*);
template void adamw_step<float>(model::Parameters<float>&,
                                const model::Parameters<float>&,
                                checkpoint::AdamState<float>&,
                                const OptimizerConfig&, double, bool);
template void adamw_step<double>(model::Parameters<double>&,
                                 const model::Parameters<double>&,
                                 checkpoint::AdamState<double>&,
                                 const OptimizerConfig&, double, bool);
template class Trainer<float>;
template class Trainer<double>;

}  // namespace rosetta::training
