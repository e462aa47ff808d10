#include "rosetta/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

namespace rosetta::evaluation {

using pseudolabel::Triplet;
using pseudolabel::TripletKind;
using tokenization::TokenSeq;
using tokenization::WordSeq;

namespace {
constexpr int kMaxOrder = 4;
}

double corpus_bleu(const std::vector<WordSeq>& hypotheses,
                   const std::vector<WordSeq>& references, double eps) {
  if (hypotheses.size() != references.size())
    throw InputError("corpus BLEU needs one reference per hypothesis (" +
                     std::to_string(hypotheses.size()) + " vs " +
                     std::to_string(references.size()) + ")");
  if (hypotheses.empty()) throw InputError("corpus BLEU over an empty corpus");
  if (!(eps > 0)) throw ConfigError("BLEU smoothing eps must be positive");

  std::array<int64_t, kMaxOrder> match{}, total{};
  int64_t hyp_len = 0, ref_len = 0;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    const WordSeq& h = hypotheses[i];
    const WordSeq& r = references[i];
    hyp_len += static_cast<int64_t>(h.size());
    ref_len += static_cast<int64_t>(r.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      const int64_t hn = static_cast<int64_t>(h.size()) - n + 1;
      if (hn > 0) total[static_cast<size_t>(n - 1)] += hn;
      if (hn <= 0 || static_cast<int>(r.size()) < n) continue;
      std::map<WordSeq, int64_t> ref_counts;
      for (size_t j = 0; j + static_cast<size_t>(n) <= r.size(); ++j)
        ref_counts[WordSeq(r.begin() + static_cast<long>(j),
                           r.begin() + static_cast<long>(j) + n)] += 1;
      std::map<WordSeq, int64_t> hyp_counts;
      for (size_t j = 0; j + static_cast<size_t>(n) <= h.size(); ++j)
        hyp_counts[WordSeq(h.begin() + static_cast<long>(j),
                           h.begin() + static_cast<long>(j) + n)] += 1;
      for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end())
          match[static_cast<size_t>(n - 1)] += std::min(count, it->second);
      }
    }
  }

  if (hyp_len == 0) return 0.0;
  double log_sum = 0;
  for (int n = 0; n < kMaxOrder; ++n) {
    const double p =
        std::max(static_cast<double>(match[static_cast<size_t>(n)]), eps) /
        std::max(static_cast<double>(total[static_cast<size_t>(n)]), eps);
    log_sum += std::log(p) / kMaxOrder;
  }
  const double bp = hyp_len >= ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) /
                                             static_cast<double>(hyp_len));
  return 100.0 * bp * std::exp(log_sum);
}

double asr_bleu(const std::vector<TokenSeq>& speech_hypotheses,
                const std::vector<WordSeq>& text_references,
                const tokenization::CodecSpec& codec,
                const std::string& language, double eps) {
  std::vector<WordSeq> transcripts;
  transcripts.reserve(speech_hypotheses.size());
  for (const TokenSeq& s : speech_hypotheses)
    transcripts.push_back(tokenization::decode_speech(codec, s, language));
  return corpus_bleu(transcripts, text_references, eps);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw InputError("rank correlation needs equally long sequences");
  if (x.size() < 2)
    throw InputError("rank correlation needs at least two points");
  auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0)
    throw InputError("rank correlation undefined for a constant sequence");
  return sxy / std::sqrt(sxx * syy);
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["t2t_bleu"] = r.t2t_bleu;
  j["t2s_asr_bleu"] = r.t2s_asr_bleu;
  j["s2t_bleu"] = r.s2t_bleu;
  j["s2s_asr_bleu"] = r.s2s_asr_bleu;
  j["n_sentences"] = r.n_sentences;
  j["truncation_rate"] = r.truncation_rate;
  return j;
}

void write_report_csv(const std::string& path, const EvalReport& r) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "t2t_bleu,t2s_asr_bleu,s2t_bleu,s2s_asr_bleu,n_sentences,"
         "truncation_rate\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%d,%.6f\n", r.t2t_bleu,
                r.t2s_asr_bleu, r.s2t_bleu, r.s2s_asr_bleu, r.n_sentences,
                r.truncation_rate);
  out << buf;
}

template <class S>
EvalReport run_eval(const model::Model<S>& m, const checkpoint::Bundle& b,
                    const std::vector<Triplet>& test_set,
                    const inference::DecodingConfig& cfg, uint64_t seed,
                    int threads) {
  if (test_set.empty()) throw InputError("evaluation over an empty test set");
  for (const Triplet& t : test_set) {
    if (t.kind != TripletKind::parallel)
      throw InputError("evaluation records must be parallel triplets");
    t.validate();
  }

  const int n = static_cast<int>(test_set.size());
  std::vector<WordSeq> t2t(static_cast<size_t>(n)), s2t(static_cast<size_t>(n));
  std::vector<TokenSeq> t2s(static_cast<size_t>(n)), s2s(static_cast<size_t>(n));
  std::vector<int> truncated(static_cast<size_t>(n), 0);

  const int workers = threads > 0 ? threads : worker_threads();
  parallel_for_jobs(n, workers, [&](int i, int) {
    const Triplet& t = test_set[static_cast<size_t>(i)];
    const uint64_t rec = mix_seed(seed, static_cast<uint64_t>(i));
    auto from_speech_text = inference::translate_speech_to_text<S>(
        m, b, *t.s_src, t.tgt_language, cfg);
    auto from_text = inference::translate_text<S>(
        m, b, t.t_src, t.src_language, t.tgt_language, cfg,
        derive_seed(rec, "text-prompt"));
    auto from_speech = inference::translate_speech<S>(
        m, b, *t.s_src, t.tgt_language, cfg, derive_seed(rec, "speech-prompt"));
    s2t[static_cast<size_t>(i)] = std::move(from_speech_text.text);
    t2t[static_cast<size_t>(i)] = std::move(from_text.text);
    t2s[static_cast<size_t>(i)] = std::move(from_text.speech);
    s2s[static_cast<size_t>(i)] = std::move(from_speech.speech);
    truncated[static_cast<size_t>(i)] =
        static_cast<int>(from_speech_text.text_truncated) +
        static_cast<int>(from_text.text_truncated) +
        static_cast<int>(from_text.speech_truncated) +
        static_cast<int>(from_speech.speech_truncated);
  });

  std::vector<WordSeq> refs;
  refs.reserve(static_cast<size_t>(n));
  std::string tgt_language = test_set.front().tgt_language;
  for (const Triplet& t : test_set) refs.push_back(t.t_tgt);

  EvalReport rep;
  rep.n_sentences = n;
  rep.t2t_bleu = corpus_bleu(t2t, refs);
  rep.s2t_bleu = corpus_bleu(s2t, refs);
  rep.t2s_asr_bleu = asr_bleu(t2s, refs, b.codec, tgt_language);
  rep.s2s_asr_bleu = asr_bleu(s2s, refs, b.codec, tgt_language);
  int64_t trunc = 0;
  for (int c : truncated) trunc += c;
  rep.truncation_rate =
      static_cast<double>(trunc) / (4.0 * static_cast<double>(n));
  return rep;
}

std::vector<Triplet> subsample_triplets(const std::vector<Triplet>& triplets,
                                        double fraction, uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("subsample fraction must lie in (0, 1]");
  if (fraction == 1.0) return triplets;

  std::vector<Triplet> out;
  for (TripletKind kind : {TripletKind::from_source, TripletKind::from_target,
                           TripletKind::parallel}) {
    std::vector<int64_t> ids;
    for (int64_t i = 0; i < static_cast<int64_t>(triplets.size()); ++i)
      if (triplets[static_cast<size_t>(i)].kind == kind) ids.push_back(i);
    if (ids.empty()) continue;
    const auto keep = static_cast<size_t>(
        fraction * static_cast<double>(ids.size()));
    if (keep == 0)
      throw ConfigError("subsample fraction leaves an empty " +
                        std::string(pseudolabel::kind_name(kind)) + " pool");
    Rng rng(derive_seed(seed, std::string("subsample-") +
                                  pseudolabel::kind_name(kind)));
    rng.shuffle(ids);
    ids.resize(keep);
    std::sort(ids.begin(), ids.end());  // keep the original relative order
    for (int64_t id : ids) out.push_back(triplets[static_cast<size_t>(id)]);
  }
  return out;
}

template <class S>
std::vector<ScalingRow> scaling_experiment(
    const std::vector<double>& fractions, const checkpoint::Bundle& bundle,
    const std::vector<Triplet>& train_triplets,
    const training::TrainerConfig& trainer_cfg,
    const std::vector<Triplet>& test_set,
    const inference::DecodingConfig& decode_cfg, uint64_t eval_seed) {
  if (fractions.empty()) throw ConfigError("no fractions to scale over");
  for (size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0.0 && fractions[i] <= 1.0))
      throw ConfigError("scaling fractions must lie in (0, 1]");
    if (i > 0 && fractions[i] <= fractions[i - 1])
      throw ConfigError("scaling fractions must be strictly ascending");
  }

  const uint64_t sub_seed = derive_seed(trainer_cfg.seed, "scaling-subsample");
  std::vector<ScalingRow> rows;
  for (double f : fractions) {
    auto sub = subsample_triplets(train_triplets, f, sub_seed);
    auto cfg = trainer_cfg;
    cfg.metrics_path.clear();
    cfg.access_log_path.clear();
    training::Trainer<S> tr(model::Model<S>::create(bundle.model, cfg.seed),
                            bundle, std::move(sub), cfg);
    tr.train();
    auto rep = run_eval<S>(tr.model(), bundle, test_set, decode_cfg, eval_seed);
    rows.push_back({f, rep.s2t_bleu, rep.s2s_asr_bleu});
  }
  return rows;
}

template <class S>
std::vector<StepRow> step_curve(const std::vector<std::string>& checkpoint_dirs,
                                const std::vector<Triplet>& test_set,
                                const inference::DecodingConfig& decode_cfg,
                                uint64_t seed) {
  if (checkpoint_dirs.empty()) throw ConfigError("no checkpoints to evaluate");
  std::vector<StepRow> rows;
  for (const std::string& dir : checkpoint_dirs) {
    auto bundle = checkpoint::load_bundle(dir);
    model::Model<S> m{bundle.model,
                      checkpoint::load_params<S>(dir, bundle.model)};
    StepRow row;
    row.step = checkpoint::load_state(dir).step;
    row.report = run_eval<S>(m, bundle, test_set, decode_cfg, seed);
    rows.push_back(std::move(row));
  }
  for (size_t i = 1; i < rows.size(); ++i)
    if (rows[i].step <= rows[i - 1].step)
      throw ConfigError("checkpoints must be listed in ascending step order");
  return rows;
}

void write_scaling_csv(const std::string& path,
                       const std::vector<ScalingRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "fraction,s2t_bleu,s2s_asr_bleu\n";
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f\n", r.fraction, r.s2t_bleu,
                  r.s2s_asr_bleu);
    out << buf;
  }
}

void write_steps_csv(const std::string& path, const std::vector<StepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "step,t2t_bleu,t2s_asr_bleu,s2t_bleu,s2s_asr_bleu,truncation_rate\n";
  for (const auto& r : rows) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%lld,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  static_cast<long long>(r.step), r.report.t2t_bleu,
                  r.report.t2s_asr_bleu, r.report.s2t_bleu,
                  r.report.s2s_asr_bleu, r.report.truncation_rate);
    out << buf;
  }
}

template EvalReport run_eval<float>(const model::Model<float>&,
                                    const checkpoint::Bundle&,
                                    const std::vector<Triplet>&,
                                    const inference::DecodingConfig&, uint64_t,
                                    int);
template EvalReport run_eval<double>(const model::Model<double>&,
                                     const checkpoint::Bundle&,
                                     const std::vector<Triplet>&,
                                     const inference::DecodingConfig&,
                                     uint64_t, int);
template std::vector<ScalingRow> scaling_experiment<float>(
    const std::vector<double>&, const checkpoint::Bundle&,
    const std::vector<Triplet>&, const training::TrainerConfig&,
    const std::vector<Triplet>&, const inference::DecodingConfig&, uint64_t);
template std::vector<ScalingRow> scaling_experiment<double>(
    const std::vector<double>&, const checkpoint::Bundle&,
    const std::vector<Triplet>&, const training::TrainerConfig&,
    const std::vector<Triplet>&, const inference::DecodingConfig&, uint64_t);
template std::vector<StepRow> step_curve<float>(
    const std::vector<std::string>&, const std::vector<Triplet>&,
    const inference::DecodingConfig&, uint64_t);
template std::vector<StepRow> step_curve<double>(
    const std::vector<std::string>&, const std::vector<Triplet>&,
    const inference::DecodingConfig&, uint64_t);

}  // namespace rosetta::evaluation
