#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rosetta/checkpoint.hpp"
#include "rosetta/inference.hpp"
#include "rosetta/pseudolabel.hpp"
#include "rosetta/training.hpp"

namespace rosetta::evaluation {

// 4-gram corpus BLEU over integer word sequences, scaled to [0, 100].
// The metric is pinned here so scores stay reproducible:
//   p_n  = max(clipped matches_n, eps) / max(hypothesis n-grams_n, eps)
//   BP   = 1 when the hypothesis corpus is at least as long as the
//          reference corpus, else exp(1 - ref_len/hyp_len)
//   BLEU = 100 * BP * exp(mean over n=1..4 of log p_n)
// An all-empty hypothesis corpus scores exactly 0.
double corpus_bleu(const std::vector<tokenization::WordSeq>& hypotheses,
                   const std::vector<tokenization::WordSeq>& references,
                   double eps = 1e-9);

// BLEU of speech streams against text references, with the codec's exact
// decoder playing the transcriber. Corrupted blocks decode to UNK and are
// scored as the mistakes they are.
double asr_bleu(const std::vector<tokenization::TokenSeq>& speech_hypotheses,
                const std::vector<tokenization::WordSeq>& text_references,
                const tokenization::CodecSpec& codec,
                const std::string& language, double eps = 1e-9);

// Spearman rank correlation; ties get averaged ranks. Throws InputError
// for length mismatch, fewer than two points, or a constant sequence.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// The four task scores of one model over one held-out parallel set.
struct EvalReport {
  double t2t_bleu = 0;
  double t2s_asr_bleu = 0;
  double s2t_bleu = 0;
  double s2s_asr_bleu = 0;
  int n_sentences = 0;
  // truncated streams / (4 * n_sentences): each record contributes its
  // S->T text, T->T text, T->S speech, and S->S speech stream.
  double truncation_rate = 0;
};

nlohmann::ordered_json report_to_json(const EvalReport& r);
void write_report_csv(const std::string& path, const EvalReport& r);

// Decodes every record four ways and scores the table:
//   T->T, T->S from translate_text; S->T from the trained speech-to-text
//   task; S->S from the speech-prompted text-to-speech configuration.
// Records must be `parallel` triplets. Deterministic in (weights, test
// set, cfg, seed) regardless of the worker count.
template <class S>
EvalReport run_eval(const model::Model<S>& m, const checkpoint::Bundle& b,
                    const std::vector<pseudolabel::Triplet>& test_set,
                    const inference::DecodingConfig& cfg, uint64_t seed,
                    int threads = 0);

// Seeded subsample of floor(fraction * n) records per triplet kind. Subsets
// are nested: a larger fraction always contains a smaller one's records.
// fraction == 1 returns the input untouched.
std::vector<pseudolabel::Triplet> subsample_triplets(
    const std::vector<pseudolabel::Triplet>& triplets, double fraction,
    uint64_t seed);

struct ScalingRow {
  double fraction = 0;
  double s2t_bleu = 0;
  double s2s_asr_bleu = 0;
};

// Trains one model per fraction on a nested subsample of the triplet pool
// (fresh weights each time, shared seeds) and evaluates each. Metrics and
// access-log paths in trainer_cfg are ignored; fractions must be ascending
// in (0, 1].
template <class S>
std::vector<ScalingRow> scaling_experiment(
    const std::vector<double>& fractions, const checkpoint::Bundle& bundle,
    const std::vector<pseudolabel::Triplet>& train_triplets,
    const training::TrainerConfig& trainer_cfg,
    const std::vector<pseudolabel::Triplet>& test_set,
    const inference::DecodingConfig& decode_cfg, uint64_t eval_seed);

struct StepRow {
  int64_t step = 0;
  EvalReport report;
};

// Evaluates a list of checkpoint directories (ascending training step).
template <class S>
std::vector<StepRow> step_curve(
    const std::vector<std::string>& checkpoint_dirs,
    const std::vector<pseudolabel::Triplet>& test_set,
    const inference::DecodingConfig& decode_cfg, uint64_t seed);

void write_scaling_csv(const std::string& path,
                       const std::vector<ScalingRow>& rows);
void write_steps_csv(const std::string& path,
                     const std::vector<StepRow>& rows);

}  // namespace rosetta::evaluation
