#include "rosetta/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rosetta/config.hpp"
#include "rosetta/evaluation.hpp"
#include "rosetta/svg.hpp"

namespace rosetta::cli {

namespace {

namespace fs = std::filesystem;

training::TrainMode parse_mode_flag(const std::string& s) {
  // short aliases for the flag; the canonical names also work
  if (s == "seq-st") return training::TrainMode::s2tt_then_t2st;
  if (s == "seq-ts") return training::TrainMode::t2st_then_s2tt;
  if (s == "finetune") return training::TrainMode::finetune_parallel;
  return training::mode_from_name(s);
}

std::vector<pseudolabel::Triplet> read_all_triplets(
    const std::vector<std::string>& paths) {
  std::vector<pseudolabel::Triplet> all;
  for (const auto& p : paths) {
    auto part = pseudolabel::read_triplets(p);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

void print_report(const evaluation::EvalReport& rep) {
  std::printf("text  -> text   BLEU     %8.3f\n", rep.t2t_bleu);
  std::printf("text  -> speech ASR-BLEU %8.3f\n", rep.t2s_asr_bleu);
  std::printf("speech-> text   BLEU     %8.3f\n", rep.s2t_bleu);
  std::printf("speech-> speech ASR-BLEU %8.3f\n", rep.s2s_asr_bleu);
  std::printf("sentences %d, truncation rate %.4f\n", rep.n_sentences,
              rep.truncation_rate);
}

struct GenCorpusArgs {
  std::string config_path;
  std::string out_dir;
  uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_gen_corpus(const GenCorpusArgs& a) {
  auto cfg = config::load_config(a.config_path);
  if (a.seed_set) cfg.seed = a.seed;
  fs::create_directories(a.out_dir);

  const auto pair = cfg.language_pair();
  const auto codec = cfg.codec_spec();
  const auto& src = cfg.languages[0];
  const auto& tgt = cfg.languages[1];
  const std::pair<int, int> lens{cfg.corpus.len_min, cfg.corpus.len_max};

  auto src_mono = corpus::gen_monolingual_corpus(
      pair, codec, corpus::Side::source, cfg.corpus.n_from_source, lens,
      cfg.stage_seed("corpus-" + src));
  auto src_path = (fs::path(a.out_dir) / ("mono_" + src + ".jsonl")).string();
  corpus::write_manifest(src_mono, src_path, &codec);
  std::printf("wrote %s (%zu utterances, language %s)\n", src_path.c_str(),
              src_mono.size(), src.c_str());

  auto tgt_mono = corpus::gen_monolingual_corpus(
      pair, codec, corpus::Side::target, cfg.corpus.n_from_target, lens,
      cfg.stage_seed("corpus-" + tgt));
  auto tgt_path = (fs::path(a.out_dir) / ("mono_" + tgt + ".jsonl")).string();
  corpus::write_manifest(tgt_mono, tgt_path, &codec);
  std::printf("wrote %s (%zu utterances, language %s)\n", tgt_path.c_str(),
              tgt_mono.size(), tgt.c_str());

  // held-out parallel sentences for evaluation / fine-tuning, generated
  // from a disjoint seed stream so they never collide with training data
  auto test_mono = corpus::gen_monolingual_corpus(
      pair, codec, corpus::Side::source, cfg.corpus.n_test, lens,
      cfg.stage_seed("corpus-test"));
  auto test_set = pseudolabel::build_parallel_pairs(
      test_mono, pair, codec, cfg.stage_seed("test-pairs"));
  auto test_path = (fs::path(a.out_dir) / "test_parallel.jsonl").string();
  pseudolabel::write_triplets(test_set, test_path);
  std::printf("wrote %s (%zu parallel sentences)\n", test_path.c_str(),
              test_set.size());
  return 0;
}

struct PseudoLabelArgs {
  std::string config_path;
  std::string in_path;
  std::string kind;
  std::string out_path;
  double threshold = -1;  // <0 = keep config value
  double p_err = -1;
  uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_pseudo_label(const PseudoLabelArgs& a) {
  auto cfg = config::load_config(a.config_path);
  if (a.seed_set) cfg.seed = a.seed;
  const double threshold =
      a.threshold >= 0 ? a.threshold : cfg.pseudolabel.threshold;
  const double p_err = a.p_err >= 0 ? a.p_err : cfg.pseudolabel.p_err;
  if (threshold > 1.0) throw ConfigError("threshold must be in [0, 1]");
  if (p_err > 1.0) throw ConfigError("p-err must be in [0, 1]");

  const auto pair = cfg.language_pair();
  const auto mono = corpus::read_manifest(a.in_path);
  const auto kind = pseudolabel::kind_from_name(a.kind);

  std::vector<pseudolabel::Triplet> triplets;
  if (kind == pseudolabel::TripletKind::parallel) {
    triplets = pseudolabel::build_parallel_pairs(
        mono, pair, cfg.codec_spec(), cfg.stage_seed("parallel-pairs"));
  } else {
    const auto dir = kind == pseudolabel::TripletKind::from_source
                         ? pseudolabel::Direction::src_to_tgt
                         : pseudolabel::Direction::tgt_to_src;
    pseudolabel::OracleTranslator translator(pair, dir, p_err,
                                             cfg.stage_seed("pseudolabel"));
    pseudolabel::OracleScorer scorer(pair, dir);
    triplets =
        pseudolabel::build_triplets(mono, translator, scorer, threshold, kind);
  }
  pseudolabel::write_triplets(triplets, a.out_path);
  std::printf("wrote %s (%zu of %zu records kept, kind %s)\n",
              a.out_path.c_str(), triplets.size(), mono.size(),
              a.kind.c_str());
  return 0;
}

struct TrainArgs {
  std::string config_path;
  std::vector<std::string> data;
  std::string out_dir;
  std::string mode;
  std::string init_ckpt;
  int steps = -1;
  int threads = -1;
  uint64_t seed = 0;
  bool seed_set = false;
  bool access_log = false;
};

int cmd_train(const TrainArgs& a) {
  auto cfg = config::load_config(a.config_path);
  if (a.seed_set) cfg.seed = a.seed;
  if (!a.mode.empty()) cfg.training.mode = parse_mode_flag(a.mode);
  if (a.steps >= 0) cfg.training.total_steps = a.steps;
  if (a.threads >= 0) cfg.training.threads = a.threads;
  if (cfg.training.mode == training::TrainMode::finetune_parallel &&
      a.init_ckpt.empty())
    throw ConfigError("mode finetune_parallel needs --init-ckpt <dir> "
                      "holding the jointly trained weights");

  auto triplets = read_all_triplets(a.data);
  const auto bundle = cfg.bundle();
  auto tc = cfg.trainer_config();
  fs::create_directories(a.out_dir);
  tc.metrics_path = (fs::path(a.out_dir) / "metrics.csv").string();
  if (a.access_log)
    tc.access_log_path = (fs::path(a.out_dir) / "access.csv").string();

  training::Trainer<float> trainer(
      model::Model<float>::create(bundle.model, cfg.stage_seed("model-init")),
      bundle, std::move(triplets), tc);
  if (!a.init_ckpt.empty()) {
    trainer.load_checkpoint(a.init_ckpt);
    if (cfg.training.mode == training::TrainMode::finetune_parallel)
      trainer.reset_training_state();  // new schedule on top of the weights
  }
  trainer.train();
  trainer.save_checkpoint(a.out_dir);
  const auto& rows = trainer.metrics();
  if (!rows.empty())
    std::printf("step %lld  loss %.5f  (%.1fs)\n",
                static_cast<long long>(rows.back().step),
                rows.back().loss.total(), rows.back().wall_time_s);
  std::printf("checkpoint saved to %s\n", a.out_dir.c_str());
  return 0;
}

struct TranslateArgs {
  std::string ckpt;
  std::string in_path;
  std::string out_path;
  std::string modality;
  std::string target;
  std::string config_path;
  uint64_t seed = 0;
};

int cmd_translate(const TranslateArgs& a) {
  if (a.modality != "speech" && a.modality != "text")
    throw ConfigError("--modality must be speech or text");
  const auto bundle = checkpoint::load_bundle(a.ckpt);
  model::Model<float> m{bundle.model,
                        checkpoint::load_params<float>(a.ckpt, bundle.model)};
  inference::DecodingConfig dec;
  if (!a.config_path.empty()) dec = config::load_config(a.config_path).decoding;
  const std::string target =
      a.target.empty() ? bundle.vocab.languages.back() : a.target;

  const auto utts = corpus::read_manifest(a.in_path);
  if (utts.empty()) throw InputError("input manifest " + a.in_path +
                                     " holds no utterances");
  std::ofstream out(a.out_path);
  if (!out) throw IoError("cannot open " + a.out_path + " for writing");
  int truncated_streams = 0;
  for (size_t i = 0; i < utts.size(); ++i) {
    const auto& u = utts[i];
    const uint64_t rec_seed = mix_seed(a.seed, i);
    inference::Translation tr;
    if (a.modality == "speech") {
      tr = inference::translate_speech<float>(m, bundle, u.speech, target,
                                              dec, rec_seed);
    } else {
      tr = inference::translate_text<float>(m, bundle, u.text, u.language,
                                            target, dec, rec_seed);
    }
    const bool truncated = tr.text_truncated || tr.speech_truncated;
    truncated_streams += truncated ? 1 : 0;
    nlohmann::ordered_json rec;
    rec["id"] = u.id;
    rec["language"] = u.language;
    rec["text"] = u.text;
    rec["speech"] = u.speech;
    rec["speaker"] = u.speaker;
    rec["t_tgt"] = tr.text;
    rec["s_tgt"] = tr.speech;
    rec["truncated"] = truncated;
    out << rec.dump() << "\n";
  }
  if (!out) throw IoError("failed writing " + a.out_path);
  std::printf("wrote %s (%zu records, %d truncated)\n", a.out_path.c_str(),
              utts.size(), truncated_streams);
  return 0;
}

struct EvaluateArgs {
  std::string ckpt;
  std::string test_path;
  std::string out_dir;
  std::string config_path;
  uint64_t seed = 0;
  int threads = 0;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const auto bundle = checkpoint::load_bundle(a.ckpt);
  model::Model<float> m{bundle.model,
                        checkpoint::load_params<float>(a.ckpt, bundle.model)};
  inference::DecodingConfig dec;
  if (!a.config_path.empty()) dec = config::load_config(a.config_path).decoding;
  const auto test_set = pseudolabel::read_triplets(a.test_path);
  const auto rep =
      evaluation::run_eval<float>(m, bundle, test_set, dec, a.seed, a.threads);

  fs::create_directories(a.out_dir);
  const auto json_path = (fs::path(a.out_dir) / "report.json").string();
  std::ofstream jf(json_path);
  if (!jf) throw IoError("cannot open " + json_path + " for writing");
  jf << evaluation::report_to_json(rep).dump(2) << "\n";
  evaluation::write_report_csv(
      (fs::path(a.out_dir) / "report.csv").string(), rep);
  print_report(rep);
  std::printf("report written to %s\n", a.out_dir.c_str());
  return 0;
}

struct AblateArgs {
  std::string config_path;
  std::string suite;
  std::vector<std::string> data;
  std::string test_path;
  std::string out_dir;
  uint64_t seed = 0;
  bool seed_set = false;
  int threads = -1;
};

int cmd_ablate(const AblateArgs& a) {
  auto cfg = config::load_config(a.config_path);
  if (a.seed_set) cfg.seed = a.seed;
  if (a.threads >= 0) cfg.training.threads = a.threads;
  auto triplets = read_all_triplets(a.data);
  const auto test_set = pseudolabel::read_triplets(a.test_path);
  const auto bundle = cfg.bundle();
  fs::create_directories(a.out_dir);
  const uint64_t eval_seed = cfg.stage_seed("eval");

  if (a.suite == "table3") {
    // joint training against the two sequential orders, same budget each
    const training::TrainMode modes[] = {
        training::TrainMode::joint, training::TrainMode::s2tt_then_t2st,
        training::TrainMode::t2st_then_s2tt};
    const auto csv_path = (fs::path(a.out_dir) / "table3.csv").string();
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot open " + csv_path + " for writing");
    csv << "mode,t2t_bleu,t2s_asr_bleu,s2t_bleu,s2s_asr_bleu,"
           "truncation_rate\n";
    for (auto mode : modes) {
      auto tc = cfg.trainer_config();
      tc.mode = mode;
      training::Trainer<float> trainer(
          model::Model<float>::create(bundle.model,
                                      cfg.stage_seed("model-init")),
          bundle, triplets, tc);
      trainer.train();
      auto rep = evaluation::run_eval<float>(trainer.model(), bundle, test_set,
                                             cfg.decoding, eval_seed,
                                             cfg.training.threads);
      char line[256];
      std::snprintf(line, sizeof line, "%s,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                    training::mode_name(mode), rep.t2t_bleu, rep.t2s_asr_bleu,
                    rep.s2t_bleu, rep.s2s_asr_bleu, rep.truncation_rate);
      csv << line;
      std::printf("-- mode %s --\n", training::mode_name(mode));
      print_report(rep);
    }
    if (!csv) throw IoError("failed writing " + csv_path);
    std::printf("wrote %s\n", csv_path.c_str());
    return 0;
  }

  if (a.suite == "scaling") {
    const std::vector<double> fractions{0.125, 0.25, 0.5, 1.0};
    auto rows = evaluation::scaling_experiment<float>(
        fractions, bundle, triplets, cfg.trainer_config(), test_set,
        cfg.decoding, eval_seed);
    const auto csv_path = (fs::path(a.out_dir) / "scaling.csv").string();
    evaluation::write_scaling_csv(csv_path, rows);
    for (const auto& r : rows)
      std::printf("fraction %.3f  s2t %.3f  s2s %.3f\n", r.fraction,
                  r.s2t_bleu, r.s2s_asr_bleu);
    std::printf("wrote %s\n", csv_path.c_str());
    return 0;
  }

  if (a.suite == "steps") {
    // checkpoints at quarters of the budget, trained as resumed segments
    // (resuming is bit-identical to training straight through)
    const int total = cfg.training.total_steps;
    std::vector<int> marks;
    for (int q = 1; q <= 4; ++q) {
      const int s = total * q / 4;
      if (s > 0 && (marks.empty() || s != marks.back())) marks.push_back(s);
    }
    std::vector<std::string> dirs;
    std::string prev;
    for (int s : marks) {
      auto tc = cfg.trainer_config();
      tc.total_steps = s;
      training::Trainer<float> trainer(
          model::Model<float>::create(bundle.model,
                                      cfg.stage_seed("model-init")),
          bundle, triplets, tc);
      if (!prev.empty()) trainer.load_checkpoint(prev);
      trainer.train();
      auto dir = (fs::path(a.out_dir) / ("ckpt_" + std::to_string(s))).string();
      trainer.save_checkpoint(dir);
      std::printf("checkpoint at step %d saved to %s\n", s, dir.c_str());
      dirs.push_back(dir);
      prev = dir;
    }
    auto rows = evaluation::step_curve<float>(dirs, test_set, cfg.decoding,
                                              eval_seed);
    const auto csv_path = (fs::path(a.out_dir) / "steps.csv").string();
    evaluation::write_steps_csv(csv_path, rows);
    for (const auto& r : rows)
      std::printf("step %lld  s2t %.3f  s2s %.3f\n",
                  static_cast<long long>(r.step), r.report.s2t_bleu,
                  r.report.s2s_asr_bleu);
    std::printf("wrote %s\n", csv_path.c_str());
    return 0;
  }

  throw ConfigError("unknown ablation suite '" + a.suite +
                    "' (expected table3, scaling or steps)");
}

struct PlotArgs {
  std::string in_path;
  std::string out_path;
  std::string title;
  std::string x_label;
  std::string y_label = "score";
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

int cmd_plot(const PlotArgs& a) {
  std::ifstream in(a.in_path);
  if (!in) throw IoError("cannot open " + a.in_path);
  std::string line;
  if (!std::getline(in, line) || line.empty())
    throw InputError("csv file " + a.in_path + " has no header line");
  const auto header = split_csv_line(line);
  if (header.size() < 2)
    throw InputError("csv file " + a.in_path +
                     " needs an x column and at least one series");

  std::vector<double> x;
  std::vector<svg::Series> series(header.size() - 1);
  for (size_t c = 1; c < header.size(); ++c) series[c - 1].name = header[c];
  size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw InputError(a.in_path + " row " + std::to_string(row_no) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(header.size()));
    for (size_t c = 0; c < cells.size(); ++c) {
      char* end = nullptr;
      const double v = std::strtod(cells[c].c_str(), &end);
      if (end == cells[c].c_str() || *end != '\0')
        throw InputError(a.in_path + " row " + std::to_string(row_no) +
                         " column " + header[c] + " is not numeric: '" +
                         cells[c] + "'");
      if (c == 0)
        x.push_back(v);
      else
        series[c - 1].y.push_back(v);
    }
  }
  if (x.empty()) throw InputError("csv file " + a.in_path + " has no rows");

  const std::string title =
      a.title.empty() ? fs::path(a.in_path).stem().string() : a.title;
  const std::string x_label = a.x_label.empty() ? header[0] : a.x_label;
  svg::write_line_chart(a.out_path, title, x_label, a.y_label, x, series);
  std::printf("wrote %s (%zu series, %zu points)\n", a.out_path.c_str(),
              series.size(), x.size());
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{
      "zero-shot speech-to-speech translation on synthetic token corpora"};
  app.require_subcommand(1);

  GenCorpusArgs gen;
  auto* gen_cmd = app.add_subcommand(
      "gen-corpus", "synthesize monolingual corpora and a parallel test set");
  gen_cmd->add_option("--config", gen.config_path, "run config (JSON)")
      ->required();
  gen_cmd->add_option("--out-dir", gen.out_dir, "output directory")
      ->required();
  auto* gen_seed = gen_cmd->add_option("--seed", gen.seed, "override seed");

  PseudoLabelArgs pl;
  auto* pl_cmd = app.add_subcommand(
      "pseudo-label", "translate, score and filter a monolingual manifest");
  pl_cmd->add_option("--config", pl.config_path, "run config (JSON)")
      ->required();
  pl_cmd->add_option("--in", pl.in_path, "monolingual manifest")->required();
  pl_cmd->add_option("--kind", pl.kind,
                     "from_source | from_target | parallel")
      ->required();
  pl_cmd->add_option("--out", pl.out_path, "triplet manifest")->required();
  pl_cmd->add_option("--threshold", pl.threshold, "quality filter override");
  pl_cmd->add_option("--p-err", pl.p_err, "translator corruption override");
  auto* pl_seed = pl_cmd->add_option("--seed", pl.seed, "override seed");

  TrainArgs tr;
  auto* tr_cmd =
      app.add_subcommand("train", "train a model over triplet manifests");
  tr_cmd->add_option("--config", tr.config_path, "run config (JSON)")
      ->required();
  tr_cmd->add_option("--data", tr.data, "triplet manifest (repeatable)")
      ->required();
  tr_cmd->add_option("--out", tr.out_dir, "checkpoint directory")->required();
  tr_cmd->add_option("--mode", tr.mode,
                     "joint | seq-st | seq-ts | finetune (overrides config)");
  tr_cmd->add_option("--steps", tr.steps, "step budget override");
  tr_cmd->add_option("--threads", tr.threads, "worker thread override");
  tr_cmd->add_option("--init-ckpt", tr.init_ckpt,
                     "checkpoint to resume or fine-tune from");
  tr_cmd->add_flag("--access-log", tr.access_log,
                   "record per-step triplet ids next to the checkpoint");
  auto* tr_seed = tr_cmd->add_option("--seed", tr.seed, "override seed");

  TranslateArgs ts;
  auto* ts_cmd = app.add_subcommand(
      "translate", "run a checkpoint over a monolingual manifest");
  ts_cmd->add_option("--ckpt", ts.ckpt, "checkpoint directory")->required();
  ts_cmd->add_option("--in", ts.in_path, "input manifest")->required();
  ts_cmd->add_option("--modality", ts.modality, "speech | text")->required();
  ts_cmd->add_option("--out", ts.out_path, "output manifest")->required();
  ts_cmd->add_option("--target", ts.target,
                     "target language (default: last in the bundle)");
  ts_cmd->add_option("--config", ts.config_path,
                     "run config for decoding parameters");
  ts_cmd->add_option("--seed", ts.seed, "decoding seed");

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand(
      "evaluate", "score a checkpoint on a parallel test manifest");
  ev_cmd->add_option("--ckpt", ev.ckpt, "checkpoint directory")->required();
  ev_cmd->add_option("--test", ev.test_path, "parallel triplet manifest")
      ->required();
  ev_cmd->add_option("--out", ev.out_dir, "report directory")->required();
  ev_cmd->add_option("--config", ev.config_path,
                     "run config for decoding parameters");
  ev_cmd->add_option("--seed", ev.seed, "decoding seed");
  ev_cmd->add_option("--threads", ev.threads, "worker threads (0 = auto)");

  AblateArgs ab;
  auto* ab_cmd = app.add_subcommand("ablate", "run an ablation suite");
  ab_cmd->add_option("--config", ab.config_path, "run config (JSON)")
      ->required();
  ab_cmd->add_option("--suite", ab.suite, "table3 | scaling | steps")
      ->required();
  ab_cmd->add_option("--data", ab.data, "triplet manifest (repeatable)")
      ->required();
  ab_cmd->add_option("--test", ab.test_path, "parallel triplet manifest")
      ->required();
  ab_cmd->add_option("--out", ab.out_dir, "output directory")->required();
  ab_cmd->add_option("--threads", ab.threads, "worker thread override");
  auto* ab_seed = ab_cmd->add_option("--seed", ab.seed, "override seed");

  PlotArgs pt;
  auto* pt_cmd =
      app.add_subcommand("plot", "render a CSV produced by this tool as SVG");
  pt_cmd->add_option("--in", pt.in_path, "csv file")->required();
  pt_cmd->add_option("--out", pt.out_path, "svg file")->required();
  pt_cmd->add_option("--title", pt.title, "chart title");
  pt_cmd->add_option("--x-label", pt.x_label, "x axis label");
  pt_cmd->add_option("--y-label", pt.y_label, "y axis label");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints usage, exits 0
  } catch (const CLI::ParseError& e) {
    std::cerr << "rosetta: error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand(gen_cmd)) {
      gen.seed_set = gen_seed->count() > 0;
      return cmd_gen_corpus(gen);
    }
    if (app.got_subcommand(pl_cmd)) {
      pl.seed_set = pl_seed->count() > 0;
      return cmd_pseudo_label(pl);
    }
    if (app.got_subcommand(tr_cmd)) {
      tr.seed_set = tr_seed->count() > 0;
      return cmd_train(tr);
    }
    if (app.got_subcommand(ts_cmd)) return cmd_translate(ts);
    if (app.got_subcommand(ev_cmd)) return cmd_evaluate(ev);
    if (app.got_subcommand(ab_cmd)) {
      ab.seed_set = ab_seed->count() > 0;
      return cmd_ablate(ab);
    }
    if (app.got_subcommand(pt_cmd)) return cmd_plot(pt);
    std::cerr << "rosetta: error: usage: no subcommand given\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "rosetta: error: config: " << e.what() << "\n";
    return 3;
  } catch (const InputError& e) {
    std::cerr << "rosetta: error: input: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    std::cerr << "rosetta: error: io: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "rosetta: error: internal: " << e.what() << "\n";
    return 70;
  }
}

}  // namespace rosetta::cli
