#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "rosetta/checkpoint.hpp"
#include "rosetta/training.hpp"

using namespace rosetta;
using pseudolabel::Triplet;
using pseudolabel::TripletKind;
using tokenization::WordSeq;

namespace {

checkpoint::Bundle tiny_bundle() {
  checkpoint::Bundle b;
  b.vocab.words_per_language = 10;
  b.vocab.languages = {"src", "tgt"};
  b.codec.codebook_size = 24;
  b.codec.expansion = 2;
  b.codec.vocab_size = 10;
  b.codec.frame_rate = 25;
  b.codec.jitter_range = 2;
  b.codec.prefix_len = 1;
  b.codec.languages = {"src", "tgt"};
  b.layout = tokenization::SpeechLayoutSpec::grouped(2, b.codec);
  b.model.d_model = 32;
  b.model.n_layers = 2;
  b.model.n_heads = 2;
  b.model.ffn_mult = 4;
  b.model.max_steps = 48;
  b.model.max_prompt_frames = 64;
  b.model.text_vocab = b.vocab.total_size();
  b.model.speech_head_vocab = b.layout.head_vocab();
  b.model.speech_prompt_vocab = b.codec.total_size();
  b.model.group_size = 2;
  b.model.encoder.n_layers = 1;
  b.model.encoder.downsample_ratio = 2;
  b.model.encoder.freeze = false;
  b.validate();
  return b;
}

Triplet trip(TripletKind kind, WordSeq src, WordSeq tgt,
             const tokenization::CodecSpec& codec) {
  Triplet t;
  t.kind = kind;
  t.t_src = std::move(src);
  t.t_tgt = std::move(tgt);
  if (kind != TripletKind::from_target)
    t.s_src = tokenization::encode_speech(codec, t.t_src, "src", 0);
  if (kind != TripletKind::from_source)
    t.s_tgt = tokenization::encode_speech(codec, t.t_tgt, "tgt", 1);
  t.validate();
  return t;
}

// Cycles short word sentences out of a seeded stream.
std::vector<Triplet> toy_triplets(const checkpoint::Bundle& b, int per_kind,
                                  bool parallel, uint64_t seed) {
  Rng rng(seed);
  std::vector<Triplet> out;
  auto sentence = [&] {
    WordSeq w(2 + static_cast<size_t>(rng.uniform_int(3)));
    for (auto& x : w) x = static_cast<int32_t>(rng.uniform_int(10));
    return w;
  };
  for (int i = 0; i < per_kind; ++i) {
    if (parallel) {
      out.push_back(trip(TripletKind::parallel, sentence(), sentence(), b.codec));
    } else {
      out.push_back(
          trip(TripletKind::from_source, sentence(), sentence(), b.codec));
      out.push_back(
          trip(TripletKind::from_target, sentence(), sentence(), b.codec));
    }
  }
  return out;
}

template <class S>
bool same_bits(const model::Parameters<S>& a, const model::Parameters<S>& b) {
  auto ea = a.entries();
  auto eb = b.entries();
  if (ea.size() != eb.size()) return false;
  for (size_t i = 0; i < ea.size(); ++i) {
    const auto& ma = *ea[i].mat;
    const auto& mb = *eb[i].mat;
    if (ma.rows() != mb.rows() || ma.cols() != mb.cols()) return false;
    if (std::memcmp(ma.data(), mb.data(),
                    sizeof(S) * static_cast<size_t>(ma.size())) != 0)
      return false;
  }
  return true;
}

std::string temp_dir(const char* tag) {
  auto d = std::filesystem::temp_directory_path() /
           (std::string("rosetta_training_") + tag);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d.string();
}

}  // namespace

TEST_CASE("speech-to-text batches lay out prompt, separator, and text targets") {
  auto b = tiny_bundle();
  std::vector<Triplet> ts{
      trip(TripletKind::from_source, {1, 2, 3}, {4, 5}, b.codec)};
  // encoded prompt: 1 prefix + 2*3 body tokens = 7 frames -> 4 pooled slots
  auto batch = training::make_batch(ts, {0}, training::Task::s2tt, b.vocab,
                                    b.codec, b.layout, 2);
  REQUIRE(batch.seq.batch == 1);
  const int sep = 5;                      // [task][4 enc slots][sep]
  CHECK(batch.seq.steps == sep + 3);      // two words + EOS
  CHECK(batch.seq.seq_len[0] == sep + 3);
  CHECK(batch.seq.text_in(0, 0) == tokenization::kTaskS2tt);
  for (int s = 0; s < 4; ++s) CHECK(batch.seq.enc_slot(0, 1 + s) == s);
  CHECK(batch.seq.enc_slot(0, 0) == -1);
  CHECK(batch.seq.enc_slot(0, sep) == -1);
  CHECK(batch.seq.text_in(0, sep) == tokenization::kSep);
  CHECK(batch.seq.prompt_speech[0].size() == 7);

  const int32_t base = b.vocab.block_base(1);
  CHECK(batch.text_tgt(0, sep) == base + 4);
  CHECK(batch.text_tgt(0, sep + 1) == base + 5);
  CHECK(batch.text_tgt(0, sep + 2) == tokenization::kEosText);
  // teacher forcing: the input at each position is the previous target
  CHECK(batch.seq.text_in(0, sep + 1) == base + 4);
  CHECK(batch.seq.text_in(0, sep + 2) == base + 5);
  CHECK(batch.text_count == 3);
  CHECK(batch.speech_count == 0);
  for (int t = 0; t < batch.seq.steps; ++t) {
    CHECK(batch.speech_mask(0, t) == 0);
    CHECK(batch.text_mask(0, t) == (t >= sep ? 1 : 0));
    for (int g = 0; g < 2; ++g)
      CHECK(batch.seq.speech_in(0, t, g) == b.layout.head_pad());
  }
}

TEST_CASE("text-to-speech batches supervise both streams off one prompt") {
  // Worked example: 3 source words, 5 target words, 15 target codec tokens.
  tokenization::CodecSpec codec;
  codec.codebook_size = 16;
  codec.expansion = 3;
  codec.vocab_size = 5;
  codec.jitter_range = 1;
  codec.prefix_len = 0;
  codec.languages = {"src", "tgt"};
  auto layout = tokenization::SpeechLayoutSpec::grouped(4, codec);
  tokenization::TextVocab vocab;
  vocab.words_per_language = 5;
  vocab.languages = {"src", "tgt"};

  Triplet t;
  t.kind = TripletKind::from_target;
  t.t_src = {0, 1, 2};
  t.t_tgt = {3, 1, 4, 0, 2};
  t.s_tgt = tokenization::TokenSeq(15);
  for (int i = 0; i < 15; ++i) (*t.s_tgt)[static_cast<size_t>(i)] = i;
  std::vector<Triplet> ts{t};

  auto batch = training::make_batch(ts, {0}, training::Task::t2st, vocab,
                                    codec, layout, 2);
  const int sep = 4;  // [task][3 text tokens][sep]
  // 6 text steps (5 words + EOS) then 4 speech steps (16 tokens / group 4):
  // the speech segment starts only after the text stream has finished, so
  // every speech row conditions on the complete translation.
  CHECK(batch.seq.steps == sep + 6 + 4);
  CHECK(batch.seq.text_in(0, 0) == tokenization::kTaskT2st);
  const int32_t src_base = vocab.block_base(0);
  const int32_t tgt_base = vocab.block_base(1);
  CHECK(batch.seq.text_in(0, 1) == src_base + 0);
  CHECK(batch.seq.text_in(0, 3) == src_base + 2);
  CHECK(batch.seq.text_in(0, sep) == tokenization::kSep);
  for (int t2 = 0; t2 < batch.seq.steps; ++t2)
    CHECK(batch.seq.enc_slot(0, t2) == -1);
  CHECK(batch.seq.prompt_speech[0].empty());

  CHECK(batch.text_count == 6);
  CHECK(batch.speech_count == 4);
  for (int k = 0; k < 6; ++k) {
    CHECK(batch.text_mask(0, sep + k) == 1);
    CHECK(batch.speech_mask(0, sep + k) == 0);
  }
  for (int k = 6; k < 10; ++k) {
    CHECK(batch.text_mask(0, sep + k) == 0);
    CHECK(batch.speech_mask(0, sep + k) == 1);
  }

  // text targets: the five words then EOS
  const int32_t words[5] = {3, 1, 4, 0, 2};
  for (int k = 0; k < 5; ++k)
    CHECK(batch.text_tgt(0, sep + k) == tgt_base + words[k]);
  CHECK(batch.text_tgt(0, sep + 5) == tokenization::kEosText);

  // speech targets: rows of 4 consecutive codec tokens, then EOS closes
  // the final row (15 tokens + terminal EOS fill 4x4 exactly)
  for (int k = 0; k < 4; ++k)
    for (int g = 0; g < 4; ++g) {
      int32_t want = k * 4 + g == 15 ? layout.head_eos() : k * 4 + g;
      CHECK(batch.speech_tgt(0, sep + 6 + k, g) == want);
    }

  // teacher forcing: inputs at the next position repeat this step's targets
  for (int k = 0; k < 5; ++k)
    CHECK(batch.seq.text_in(0, sep + k + 1) == tgt_base + words[k]);
  CHECK(batch.seq.text_in(0, sep + 6) == tokenization::kEosText);
  for (int k = 0; k < 3; ++k)
    for (int g = 0; g < 4; ++g)
      CHECK(batch.seq.speech_in(0, sep + 7 + k, g) ==
            batch.speech_tgt(0, sep + 6 + k, g));
  // the text slot idles at PAD through the speech segment, and no speech
  // token is fed while the text segment is still running
  for (int k = 7; k < 10; ++k)
    CHECK(batch.seq.text_in(0, sep + k) == tokenization::kPadText);
  for (int k = 0; k < 7; ++k)
    for (int g = 0; g < 4; ++g)
      CHECK(batch.seq.speech_in(0, sep + k, g) == layout.head_pad());
}

TEST_CASE("fine-tuning batches pair a speech prompt with joint outputs") {
  auto b = tiny_bundle();
  std::vector<Triplet> ts{
      trip(TripletKind::parallel, {1, 2}, {3, 4, 5}, b.codec)};
  auto batch = training::make_batch(ts, {0}, training::Task::parallel_ft,
                                    b.vocab, b.codec, b.layout, 2);
  // prompt = 1 + 2*2 = 5 frames -> 3 slots; the tag follows the prompt
  // modality, so a speech prompt carries the same id as speech-to-text
  CHECK(batch.seq.text_in(0, 0) == tokenization::kTaskS2tt);
  for (int s = 0; s < 3; ++s) CHECK(batch.seq.enc_slot(0, 1 + s) == s);
  CHECK(batch.seq.text_in(0, 4) == tokenization::kSep);
  CHECK(batch.text_count == 4);   // three words + EOS
  CHECK(batch.speech_count == 4); // (1 + 2*3 + EOS) tokens / group 2
  CHECK(batch.seq.prompt_speech[0] == *ts[0].s_src);
}

TEST_CASE("batches are deterministic and reject mismatched kinds") {
  auto b = tiny_bundle();
  auto ts = toy_triplets(b, 4, false, 11);
  std::vector<int64_t> from_source_ids, from_target_ids;
  for (int64_t i = 0; i < static_cast<int64_t>(ts.size()); ++i)
    (ts[static_cast<size_t>(i)].kind == TripletKind::from_source
         ? from_source_ids
         : from_target_ids)
        .push_back(i);

  auto a1 = training::make_batch(ts, from_source_ids, training::Task::s2tt,
                                 b.vocab, b.codec, b.layout, 2);
  auto a2 = training::make_batch(ts, from_source_ids, training::Task::s2tt,
                                 b.vocab, b.codec, b.layout, 2);
  CHECK(a1.seq.text_in.data == a2.seq.text_in.data);
  CHECK(a1.seq.speech_in.data == a2.seq.speech_in.data);
  CHECK(a1.text_tgt.data == a2.text_tgt.data);
  CHECK(a1.text_count == a2.text_count);

  CHECK_THROWS_AS(training::make_batch(ts, from_target_ids,
                                       training::Task::s2tt, b.vocab, b.codec,
                                       b.layout, 2),
                  ConfigError);
  CHECK_THROWS_AS(training::make_batch(ts, from_source_ids,
                                       training::Task::t2st, b.vocab, b.codec,
                                       b.layout, 2),
                  ConfigError);
  CHECK_THROWS_AS(training::make_batch(ts, from_source_ids,
                                       training::Task::parallel_ft, b.vocab,
                                       b.codec, b.layout, 2),
                  ConfigError);
  CHECK_THROWS_AS(training::make_batch(ts, {}, training::Task::s2tt, b.vocab,
                                       b.codec, b.layout, 2),
                  ConfigError);
  CHECK_THROWS_AS(training::make_batch(ts, {999}, training::Task::s2tt,
                                       b.vocab, b.codec, b.layout, 2),
                  ConfigError);
}

TEST_CASE("masked cross-entropy matches closed forms") {
  auto b = tiny_bundle();
  std::vector<Triplet> ts{
      trip(TripletKind::from_target, {1, 2}, {3, 4}, b.codec)};
  auto batch = training::make_batch(ts, {0}, training::Task::t2st, b.vocab,
                                    b.codec, b.layout, 2);
  const int rows = batch.seq.batch * batch.seq.steps;
  const int Vt = b.model.text_vocab;
  const int Vh = b.model.speech_head_vocab;

  model::StepLogits<double> logits;
  logits.text = model::Mat<double>::Zero(rows, Vt);
  logits.speech.assign(2, model::Mat<double>::Zero(rows, Vh));

  SUBCASE("uniform logits give log-vocab loss on both streams") {
    auto loss = training::compute_loss<double>(logits, batch, nullptr);
    CHECK(loss.text == doctest::Approx(std::log(double(Vt))).epsilon(1e-9));
    CHECK(loss.speech == doctest::Approx(std::log(double(Vh))).epsilon(1e-9));
  }

  SUBCASE("a 30-logit margin on every target drives loss below 1e-9") {
    for (int t = 0; t < batch.seq.steps; ++t) {
      if (batch.text_mask(0, t)) logits.text(t, batch.text_tgt(0, t)) = 30.0;
      if (batch.speech_mask(0, t))
        for (int g = 0; g < 2; ++g)
          logits.speech[static_cast<size_t>(g)](t, batch.speech_tgt(0, t, g)) =
              30.0;
    }
    auto loss = training::compute_loss<double>(logits, batch, nullptr);
    CHECK(loss.text < 1e-9);
    CHECK(loss.speech < 1e-9);
    CHECK(loss.text > 0);
  }

  SUBCASE("gradients match finite differences through the loss") {
    Rng rng(3);
    for (int r = 0; r < rows; ++r) {
      for (int v = 0; v < Vt; ++v) logits.text(r, v) = rng.normal();
      for (int g = 0; g < 2; ++g)
        for (int v = 0; v < Vh; ++v)
          logits.speech[static_cast<size_t>(g)](r, v) = rng.normal();
    }
    model::StepLogits<double> dlogits;
    auto base = training::compute_loss<double>(logits, batch, &dlogits);
    (void)base;
    auto total = [&](const model::StepLogits<double>& lg) {
      auto l = training::compute_loss<double>(lg, batch, nullptr);
      return l.text + l.speech;
    };
    const double h = 1e-4;
    auto close = [](double an, double fd) {
      return std::abs(an - fd) < 1e-8 + 1e-5 * std::abs(an);
    };
    Rng pick(17);
    for (int trial = 0; trial < 12; ++trial) {
      int r = static_cast<int>(pick.uniform_int(static_cast<uint64_t>(rows)));
      int v = static_cast<int>(pick.uniform_int(static_cast<uint64_t>(Vt)));
      auto lg = logits;
      lg.text(r, v) += h;
      double up = total(lg);
      lg.text(r, v) -= 2 * h;
      double dn = total(lg);
      CHECK(close(dlogits.text(r, v), (up - dn) / (2 * h)));
    }
    for (int trial = 0; trial < 12; ++trial) {
      int g = static_cast<int>(pick.uniform_int(2));
      int r = static_cast<int>(pick.uniform_int(static_cast<uint64_t>(rows)));
      int v = static_cast<int>(pick.uniform_int(static_cast<uint64_t>(Vh)));
      auto lg = logits;
      lg.speech[static_cast<size_t>(g)](r, v) += h;
      double up = total(lg);
      lg.speech[static_cast<size_t>(g)](r, v) -= 2 * h;
      double dn = total(lg);
      CHECK(close(dlogits.speech[static_cast<size_t>(g)](r, v),
                  (up - dn) / (2 * h)));
    }
  }
}

TEST_CASE("chunked evaluation reproduces the whole-batch loss exactly") {
  auto b = tiny_bundle();
  auto ts = toy_triplets(b, 6, false, 5);
  std::vector<int64_t> ids;
  for (int64_t i = 0; i < static_cast<int64_t>(ts.size()); ++i)
    if (ts[static_cast<size_t>(i)].kind == TripletKind::from_target)
      ids.push_back(i);
  auto batch = training::make_batch(ts, ids, training::Task::t2st, b.vocab,
                                    b.codec, b.layout, 2);
  auto m = model::Model<double>::create(b.model, 21);

  auto full_logits = m.forward(batch.seq, nullptr);
  auto full = training::compute_loss<double>(full_logits, batch, nullptr);

  double text_sum = 0, speech_sum = 0;
  for (int first = 0; first < batch.seq.batch; first += 2) {
    const int count = std::min(2, batch.seq.batch - first);
    auto part = training::slice_batch(batch, first, count);
    CHECK(part.text_count == batch.text_count);
    CHECK(part.speech_count == batch.speech_count);
    auto lg = m.forward(part.seq, nullptr);
    auto l = training::compute_loss<double>(lg, part, nullptr);
    text_sum += l.text;
    speech_sum += l.speech;
  }
  CHECK(text_sum == doctest::Approx(full.text).epsilon(1e-12));
  CHECK(speech_sum == doctest::Approx(full.speech).epsilon(1e-12));
}

TEST_CASE("speech-to-text batches leave every speech head untouched") {
  auto b = tiny_bundle();
  std::vector<Triplet> ts{
      trip(TripletKind::from_source, {1, 2, 3}, {4, 5, 6}, b.codec),
      trip(TripletKind::from_source, {7, 8}, {9, 0}, b.codec)};
  auto batch = training::make_batch(ts, {0, 1}, training::Task::s2tt, b.vocab,
                                    b.codec, b.layout, 2);
  auto m = model::Model<double>::create(b.model, 9);
  model::Workspace<double> ws;
  auto logits = m.forward(batch.seq, &ws);
  model::StepLogits<double> dlogits;
  training::compute_loss<double>(logits, batch, &dlogits);
  auto grads = model::Parameters<double>::allocate(b.model);
  grads.set_zero();
  m.backward(batch.seq, ws, dlogits, grads);

  bool saw_speech_entry = false;
  for (const auto& e : grads.entries()) {
    const std::string& n = e.name;
    if (n.rfind("head_speech.", 0) == 0 || n.rfind("tok_speech.", 0) == 0) {
      saw_speech_entry = true;
      CHECK_MESSAGE(e.mat->cwiseAbs().maxCoeff() == 0.0, n);
    }
  }
  CHECK(saw_speech_entry);
  // the text head, by contrast, must receive signal
  bool text_nonzero = false;
  for (const auto& e : grads.entries())
    if (e.name == "head_text.weight" && e.mat->cwiseAbs().maxCoeff() > 0)
      text_nonzero = true;
  CHECK(text_nonzero);
}

TEST_CASE("learning-rate schedule hits its anchors") {
  training::OptimizerConfig cfg;  // peak 2e-3, warmup 10k, total 100k
  CHECK(training::lr_at(10000, cfg) == doctest::Approx(2e-3).epsilon(1e-12));
  CHECK(training::lr_at(5000, cfg) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(training::lr_at(55000, cfg) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(training::lr_at(100000, cfg) == 0.0);
  CHECK(training::lr_at(0, cfg) == 0.0);
  CHECK(training::lr_at(1, cfg) == doctest::Approx(2e-7).epsilon(1e-12));
  CHECK_THROWS_AS(training::lr_at(-1, cfg), InputError);
  CHECK_THROWS_AS(training::lr_at(100001, cfg), InputError);

  training::OptimizerConfig bad = cfg;
  bad.warmup_steps = 0;
  CHECK_THROWS_AS(training::lr_at(1, bad), ConfigError);
}

TEST_CASE("the first optimizer update matches the hand-computed value") {
  auto b = tiny_bundle();
  auto params = model::Parameters<double>::allocate(b.model);
  auto grads = model::Parameters<double>::allocate(b.model);
  for (auto& e : params.entries()) e.mat->setConstant(1.0);
  for (auto& e : grads.entries()) e.mat->setConstant(1.0);
  checkpoint::AdamState<double> st;
  st.m = model::Parameters<double>::allocate(b.model);
  st.v = model::Parameters<double>::allocate(b.model);
  st.m.set_zero();
  st.v.set_zero();

  training::OptimizerConfig cfg;  // beta 0.9/0.999, eps 1e-6, decay 0.01
  training::adamw_step<double>(params, grads, st, cfg, 0.1, true);
  CHECK(st.t == 1);

  // One step from theta=1, g=1: mhat = vhat = 1, so
  //   decayed:   1 - 0.1*(1/(1+1e-6) + 0.01) = 0.8990001...
  //   undecayed: 1 - 0.1*(1/(1+1e-6))        = 0.9000001...
  const double core = 1.0 / (1.0 + 1e-6);
  const double want_weight = 1.0 - 0.1 * (core + 0.01);
  const double want_plain = 1.0 - 0.1 * core;
  CHECK(want_weight == doctest::Approx(0.8990001).epsilon(1e-7));
  CHECK(want_plain == doctest::Approx(0.9000001).epsilon(1e-7));
  for (const auto& e : params.entries()) {
    const double got = (*e.mat)(0, 0);
    const double want =
        e.kind == model::ParamKind::weight ? want_weight : want_plain;
    CHECK_MESSAGE(got == doctest::Approx(want).epsilon(1e-14), e.name);
  }
}

TEST_CASE("a frozen encoder is skipped by the optimizer") {
  auto b = tiny_bundle();
  auto params = model::Parameters<double>::allocate(b.model);
  auto grads = model::Parameters<double>::allocate(b.model);
  for (auto& e : params.entries()) e.mat->setConstant(1.0);
  for (auto& e : grads.entries()) e.mat->setConstant(1.0);
  checkpoint::AdamState<double> st;
  st.m = model::Parameters<double>::allocate(b.model);
  st.v = model::Parameters<double>::allocate(b.model);
  st.m.set_zero();
  st.v.set_zero();
  training::OptimizerConfig cfg;
  training::adamw_step<double>(params, grads, st, cfg, 0.1, false);
  for (const auto& e : params.entries()) {
    if (e.encoder)
      CHECK_MESSAGE((*e.mat)(0, 0) == 1.0, e.name);
    else
      CHECK_MESSAGE((*e.mat)(0, 0) != 1.0, e.name);
  }
}

namespace {

training::TrainerConfig smoke_config(int steps, uint64_t seed) {
  training::TrainerConfig cfg;
  cfg.mode = training::TrainMode::joint;
  cfg.total_steps = steps;
  cfg.batch_size = 4;
  cfg.optim.lr_peak = 5e-3;
  cfg.optim.warmup_steps = 3;
  cfg.optim.total_steps = steps;
  cfg.seed = seed;
  cfg.log_every = 2;
  cfg.threads = 1;
  return cfg;
}

}  // namespace

TEST_CASE("joint training reduces the loss and logs metrics") {
  auto b = tiny_bundle();
  auto ts = toy_triplets(b, 12, false, 99);
  auto dir = temp_dir("smoke");
  auto cfg = smoke_config(12, 7);
  cfg.metrics_path = dir + "/metrics.csv";
  cfg.access_log_path = dir + "/access.csv";

  training::Trainer<float> tr(model::Model<float>::create(b.model, 7), b, ts,
                              cfg);
  tr.train();
  const auto& rows = tr.metrics();
  REQUIRE(rows.size() >= 2);
  CHECK(rows.front().step == 1);
  CHECK(rows.back().step == 12);
  CHECK(rows.back().loss.total() < rows.front().loss.total());
  for (const auto& r : rows) {
    CHECK(r.loss.s2tt > 0);
    CHECK(r.loss.t2st_text > 0);
    CHECK(r.loss.t2st_speech > 0);
    CHECK(r.wall_time_s > 0);
  }

  std::ifstream mf(cfg.metrics_path);
  REQUIRE(mf.good());
  std::string header;
  std::getline(mf, header);
  CHECK(header == "step,lr,l_s2tt,l_t2st_text,l_t2st_speech,l_total,wall_time_s");
  int data_lines = 0;
  for (std::string line; std::getline(mf, line);)
    if (!line.empty()) ++data_lines;
  CHECK(data_lines == static_cast<int>(rows.size()));

  std::ifstream af(cfg.access_log_path);
  REQUIRE(af.good());
  std::string first;
  std::getline(af, first);
  CHECK(first.rfind("1,s2tt,", 0) == 0);
  int access_lines = 1;
  for (std::string line; std::getline(af, line);)
    if (!line.empty()) ++access_lines;
  CHECK(access_lines == 24);  // two tasks per step
}

TEST_CASE("training is a pure function of the seed") {
  auto b = tiny_bundle();
  auto ts = toy_triplets(b, 8, false, 42);
  auto cfg = smoke_config(6, 13);
  training::Trainer<float> a(model::Model<float>::create(b.model, 13), b, ts,
                             cfg);
  training::Trainer<float> c(model::Model<float>::create(b.model, 13), b, ts,
                             cfg);
  a.train();
  c.train();
  CHECK(same_bits(a.model().params, c.model().params));

  // a different seed must actually change the trajectory
  auto cfg2 = smoke_config(6, 14);
  training::Trainer<float> d(model::Model<float>::create(b.model, 13), b, ts,
                             cfg2);
  d.train();
  CHECK(!same_bits(a.model().params, d.model().params));
}

TEST_CASE("the trained bits do not depend on the worker count") {
  auto b = tiny_bundle();
  auto ts = toy_triplets(b, 8, false, 43);
  auto cfg1 = smoke_config(5, 3);
  cfg1.threads = 1;
  auto cfg2 = smoke_config(5, 3);
  cfg2.threads = 3;
  training::Trainer<float> a(model::Model<float>::create(b.model, 3), b, ts,
                             cfg1);
  training::Trainer<float> c(model::Model<float>::create(b.model, 3), b, ts,
                             cfg2);
  a.train();
  c.train();
  CHECK(same_bits(a.model().params, c.model().params));
}

TEST_CASE("checkpoints restore weights, moments, and cursors bit for bit") {
  auto b = tiny_bundle();
  auto ts = toy_triplets(b, 8, false, 77);
  auto dir = temp_dir("ckpt");
  auto cfg = smoke_config(6, 5);
  training::Trainer<float> tr(model::Model<float>::create(b.model, 5), b, ts,
                              cfg);
  tr.train();
  tr.save_checkpoint(dir);

  auto bundle2 = checkpoint::load_bundle(dir);
  CHECK(bundle2.model.d_model == b.model.d_model);
  CHECK(bundle2.vocab.languages == b.vocab.languages);
  CHECK(bundle2.codec.codebook_size == b.codec.codebook_size);
  CHECK(bundle2.layout.group_size == b.layout.group_size);

  auto params2 = checkpoint::load_params<float>(dir, b.model);
  CHECK(same_bits(tr.model().params, params2));
  CHECK(checkpoint::has_optimizer_state(dir));
  auto adam2 = checkpoint::load_adam<float>(dir, b.model);
  CHECK(adam2.t == 6);
  auto state2 = checkpoint::load_state(dir);
  CHECK(state2.step == 6);
  CHECK(state2 == tr.state());

  SUBCASE("weights-only checkpoints carry no training state") {
    auto dir2 = temp_dir("ckpt_weights_only");
    checkpoint::save_checkpoint<float>(dir2, b, tr.model().params, nullptr,
                                       nullptr);
    CHECK(!checkpoint::has_optimizer_state(dir2));
    auto p = checkpoint::load_params<float>(dir2, b.model);
    CHECK(same_bits(tr.model().params, p));
  }

  SUBCASE("truncated weight blobs are rejected") {
    auto path = dir + "/weights.bin";
    auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 16);
    CHECK_THROWS_AS(checkpoint::load_params<float>(dir, b.model), IoError);
  }
}

TEST_CASE("resuming from a checkpoint reproduces the unbroken run") {
  auto b = tiny_bundle();
  auto ts = toy_triplets(b, 8, false, 55);
  auto dir = temp_dir("resume");

  auto cfg12 = smoke_config(12, 9);
  training::Trainer<float> whole(model::Model<float>::create(b.model, 9), b,
                                 ts, cfg12);
  whole.train();

  // stop half-way by training with a shrunken budget, then saving
  auto cfg_half = smoke_config(6, 9);
  cfg_half.optim.total_steps = 12;  // same schedule as the full run
  training::Trainer<float> part(model::Model<float>::create(b.model, 9), b, ts,
                                cfg_half);
  part.train();
  part.save_checkpoint(dir);

  training::Trainer<float> rest(model::Model<float>::create(b.model, 1234), b,
                                ts, cfg12);
  rest.load_checkpoint(dir);
  CHECK(rest.state().step == 6);
  rest.train();
  CHECK(rest.state().step == 12);
  CHECK(same_bits(whole.model().params, rest.model().params));
}

TEST_CASE("sequential modes spend half the budget on each branch") {
  auto b = tiny_bundle();
  auto ts = toy_triplets(b, 8, false, 31);
  auto cfg = smoke_config(4, 2);
  cfg.mode = training::TrainMode::s2tt_then_t2st;
  cfg.log_every = 1;
  training::Trainer<float> tr(model::Model<float>::create(b.model, 2), b, ts,
                              cfg);
  tr.train();
  const auto& rows = tr.metrics();
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].loss.s2tt > 0);
  CHECK(rows[0].loss.t2st_text == 0);
  CHECK(rows[1].loss.s2tt > 0);
  CHECK(rows[2].loss.s2tt == 0);
  CHECK(rows[2].loss.t2st_text > 0);
  CHECK(rows[2].loss.t2st_speech > 0);
  CHECK(rows[3].loss.s2tt == 0);

  auto cfg2 = smoke_config(4, 2);
  cfg2.mode = training::TrainMode::t2st_then_s2tt;
  cfg2.log_every = 1;
  training::Trainer<float> tr2(model::Model<float>::create(b.model, 2), b, ts,
                               cfg2);
  tr2.train();
  CHECK(tr2.metrics()[0].loss.t2st_text > 0);
  CHECK(tr2.metrics()[0].loss.s2tt == 0);
  CHECK(tr2.metrics()[3].loss.s2tt > 0);
}

TEST_CASE("fine-tuning keeps weights but restarts the optimizer") {
  auto b = tiny_bundle();
  auto pre = toy_triplets(b, 8, false, 61);
  auto cfg = smoke_config(4, 6);
  training::Trainer<float> tr(model::Model<float>::create(b.model, 6), b, pre,
                              cfg);
  tr.train();
  auto dir = temp_dir("ft");
  tr.save_checkpoint(dir);

  auto pairs = toy_triplets(b, 6, true, 62);
  auto ft_cfg = smoke_config(3, 8);
  ft_cfg.mode = training::TrainMode::finetune_parallel;
  training::Trainer<float> ft(model::Model<float>::create(b.model, 1), b,
                              pairs, ft_cfg);
  ft.load_checkpoint(dir);
  CHECK(ft.state().step == 4);
  ft.reset_training_state();
  CHECK(ft.state().step == 0);
  ft.train();
  CHECK(ft.state().step == 3);
  CHECK(ft.metrics().back().loss.t2st_text > 0);
}

TEST_CASE("trainer construction rejects inconsistent pools") {
  auto b = tiny_bundle();
  auto cfg = smoke_config(4, 1);

  auto only_s2tt = std::vector<Triplet>{
      trip(TripletKind::from_source, {1}, {2}, b.codec)};
  CHECK_THROWS_AS(training::Trainer<float>(
                      model::Model<float>::create(b.model, 1), b, only_s2tt,
                      cfg),
                  ConfigError);

  auto mixed = toy_triplets(b, 2, false, 4);
  mixed.push_back(trip(TripletKind::parallel, {1, 2}, {3}, b.codec));
  CHECK_THROWS_AS(training::Trainer<float>(
                      model::Model<float>::create(b.model, 1), b, mixed, cfg),
                  ConfigError);

  auto ft_cfg = cfg;
  ft_cfg.mode = training::TrainMode::finetune_parallel;
  CHECK_THROWS_AS(training::Trainer<float>(
                      model::Model<float>::create(b.model, 1), b, mixed,
                      ft_cfg),
                  ConfigError);

  auto bad_cfg = cfg;
  bad_cfg.optim.total_steps = 2;  // shorter than the run
  auto ok = toy_triplets(b, 2, false, 4);
  CHECK_THROWS_AS(training::Trainer<float>(
                      model::Model<float>::create(b.model, 1), b, ok, bad_cfg),
                  ConfigError);
}

TEST_CASE("mode names round-trip and reject garbage") {
  using training::TrainMode;
  for (auto m : {TrainMode::joint, TrainMode::s2tt_then_t2st,
                 TrainMode::t2st_then_s2tt, TrainMode::finetune_parallel})
    CHECK(training::mode_from_name(training::mode_name(m)) == m);
  CHECK_THROWS_AS(training::mode_from_name("sideways"), ConfigError);
}
