#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "rosetta/cli.hpp"
#include "rosetta/config.hpp"

using namespace rosetta;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"rosetta"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

// captures the single-line error reports the entry point writes to stderr
struct CerrCapture {
  std::stringstream ss;
  std::streambuf* old;
  CerrCapture() : old(std::cerr.rdbuf(ss.rdbuf())) {}
  ~CerrCapture() { std::cerr.rdbuf(old); }
  std::string text() const { return ss.str(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// drops the final column from every CSV line (wall-clock timings are the
// one legitimately nondeterministic output)
std::string strip_last_column(const std::string& csv) {
  std::string out;
  std::istringstream lines(csv);
  for (std::string line; std::getline(lines, line);) {
    auto cut = line.rfind(',');
    out += (cut == std::string::npos ? line : line.substr(0, cut)) + "\n";
  }
  return out;
}

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const char* kTinyConfig = R"({
  "seed": 7,
  "corpus": { "vocab_size": 12, "n_from_source": 40, "n_from_target": 40,
              "n_test": 6, "len_min": 2, "len_max": 4 },
  "codec": { "codebook_size": 48, "jitter_range": 2 },
  "layout": { "group_size": 2 },
  "model": { "d_model": 32, "n_layers": 2, "n_heads": 2, "max_steps": 48,
             "max_prompt_frames": 64, "encoder": { "n_layers": 1 } },
  "optimizer": { "warmup_steps": 4, "total_steps": 20, "lr_peak": 0.004 },
  "training": { "total_steps": 12, "batch_size": 4, "log_every": 4,
                "threads": 1 }
})";

fs::path write_tiny_config(const fs::path& dir) {
  auto p = dir / "cfg.json";
  std::ofstream(p) << kTinyConfig;
  return p;
}

// the whole pipeline: corpus -> triplets -> training -> report
void run_pipeline(const fs::path& dir, const std::string& extra_seed = "") {
  auto cfg = write_tiny_config(dir).string();
  auto at = [&](const char* n) { return (dir / n).string(); };
  std::vector<std::string> gen{"gen-corpus", "--config", cfg, "--out-dir",
                               dir.string()};
  if (!extra_seed.empty()) {
    gen.push_back("--seed");
    gen.push_back(extra_seed);
  }
  REQUIRE(run_cli(gen) == 0);
  REQUIRE(run_cli({"pseudo-label", "--config", cfg, "--in",
                   at("mono_src.jsonl"), "--kind", "from_source", "--out",
                   at("fs.jsonl")}) == 0);
  REQUIRE(run_cli({"pseudo-label", "--config", cfg, "--in",
                   at("mono_tgt.jsonl"), "--kind", "from_target", "--out",
                   at("ft.jsonl")}) == 0);
  REQUIRE(run_cli({"train", "--config", cfg, "--data", at("fs.jsonl"),
                   "--data", at("ft.jsonl"), "--out", at("ckpt")}) == 0);
  REQUIRE(run_cli({"evaluate", "--ckpt", at("ckpt"), "--test",
                   at("test_parallel.jsonl"), "--out", at("report"), "--seed",
                   "11", "--threads", "1"}) == 0);
}

}  // namespace

TEST_CASE("config schema is strict and round-trips") {
  config::RunConfig def;
  def.validate();

  auto j = config::config_to_json(def);
  auto back = config::config_from_json(j);
  CHECK(back.seed == def.seed);
  CHECK(back.corpus.vocab_size == def.corpus.vocab_size);
  CHECK(back.optimizer.lr_peak == def.optimizer.lr_peak);
  CHECK(back.training.total_steps == def.training.total_steps);
  CHECK(back.decoding.top_p == def.decoding.top_p);

  SUBCASE("unknown keys are named with their full path") {
    auto bad = j;
    bad["vocab"] = 50;
    CHECK_THROWS_WITH_AS(config::config_from_json(bad),
                         doctest::Contains("vocab"), ConfigError);
    auto nested = j;
    nested["training"]["batch_sizee"] = 4;
    CHECK_THROWS_WITH_AS(config::config_from_json(nested),
                         doctest::Contains("training.batch_sizee"),
                         ConfigError);
    auto deep = j;
    deep["model"]["encoder"]["frozen"] = true;
    CHECK_THROWS_WITH_AS(config::config_from_json(deep),
                         doctest::Contains("model.encoder.frozen"),
                         ConfigError);
  }

  SUBCASE("type errors are named") {
    auto bad = j;
    bad["corpus"]["vocab_size"] = "big";
    CHECK_THROWS_WITH_AS(config::config_from_json(bad),
                         doctest::Contains("corpus.vocab_size"), ConfigError);
  }

  SUBCASE("validation names the offending key") {
    auto bad = j;
    bad["pseudolabel"]["threshold"] = -0.25;
    auto cfg = config::config_from_json(bad);
    CHECK_THROWS_WITH_AS(cfg.validate(),
                         doctest::Contains("pseudolabel.threshold"),
                         ConfigError);
    auto bad2 = j;
    bad2["corpus"]["vocab_size"] = 4;
    CHECK_THROWS_WITH_AS(config::config_from_json(bad2).validate(),
                         doctest::Contains("corpus.vocab_size"), ConfigError);
    auto bad3 = j;
    bad3["languages"] = {"only"};
    CHECK_THROWS_AS(config::config_from_json(bad3).validate(), ConfigError);
    auto bad4 = j;
    bad4["training"]["mode"] = "both-at-once";
    CHECK_THROWS_WITH_AS(config::config_from_json(bad4),
                         doctest::Contains("training.mode"), ConfigError);
  }

  SUBCASE("derived token spaces follow the corpus and codec sections") {
    auto b = def.bundle();
    CHECK(b.vocab.words_per_language == def.corpus.vocab_size);
    CHECK(b.codec.vocab_size == def.corpus.vocab_size);
    CHECK(b.codec.expansion == def.corpus.expansion_factor);
    CHECK(b.model.text_vocab == b.vocab.total_size());
    CHECK(b.model.speech_head_vocab == b.layout.head_vocab());
    CHECK(b.model.group_size == def.layout.group_size);
  }

  SUBCASE("stage seeds differ per stage but are stable") {
    CHECK(def.stage_seed("train") == def.stage_seed("train"));
    CHECK(def.stage_seed("train") != def.stage_seed("eval"));
  }
}

TEST_CASE("usage surface: help and flag errors") {
  CHECK(run_cli({"--help"}) == 0);

  CerrCapture cap;
  CHECK(run_cli({"train", "--bogus-flag"}) == 2);
  CHECK(run_cli({}) == 2);
  CHECK(run_cli({"evaluate"}) == 2);  // missing required flags
  auto text = cap.text();
  CHECK(text.find("rosetta: error: usage:") != std::string::npos);
}

TEST_CASE("failures map to stable categories and exit codes") {
  auto dir = fresh_dir("rosetta_cli_errors");
  auto cfg = write_tiny_config(dir).string();

  CerrCapture cap;
  // io: missing files
  CHECK(run_cli({"gen-corpus", "--config", (dir / "nope.json").string(),
                 "--out-dir", dir.string()}) == 5);
  CHECK(run_cli({"plot", "--in", (dir / "nope.csv").string(), "--out",
                 (dir / "o.svg").string()}) == 5);

  // config: bad values
  auto badcfg = dir / "bad.json";
  std::ofstream(badcfg) << R"({"pseudolabel": {"threshold": -1.0}})";
  CHECK(run_cli({"gen-corpus", "--config", badcfg.string(), "--out-dir",
                 dir.string()}) == 3);
  CHECK(cap.text().find("pseudolabel.threshold") != std::string::npos);
  CHECK(run_cli({"train", "--config", cfg, "--data", "x.jsonl", "--out",
                 (dir / "ck").string(), "--mode", "finetune"}) == 3);
  CHECK(run_cli({"translate", "--ckpt", "none", "--in", "x", "--modality",
                 "telepathy", "--out", "y"}) == 3);

  // input: malformed data handed to a command
  auto badcsv = dir / "table.csv";
  std::ofstream(badcsv) << "mode,score\njoint,1.5\n";
  CHECK(run_cli({"plot", "--in", badcsv.string(), "--out",
                 (dir / "t.svg").string()}) == 4);

  auto lines = cap.text();
  CHECK(lines.find("rosetta: error: io:") != std::string::npos);
  CHECK(lines.find("rosetta: error: config:") != std::string::npos);
  CHECK(lines.find("rosetta: error: input:") != std::string::npos);
}

TEST_CASE("the full pipeline is reproducible from its seed") {
  auto a = fresh_dir("rosetta_cli_run_a");
  auto b = fresh_dir("rosetta_cli_run_b");
  run_pipeline(a);
  run_pipeline(b);

  const auto report_a = slurp(a / "report" / "report.json");
  CHECK(report_a == slurp(b / "report" / "report.json"));
  CHECK(slurp(a / "report" / "report.csv") == slurp(b / "report" / "report.csv"));
  // the intermediate artifacts agree byte for byte as well
  CHECK(slurp(a / "mono_src.jsonl") == slurp(b / "mono_src.jsonl"));
  CHECK(slurp(a / "fs.jsonl") == slurp(b / "fs.jsonl"));
  CHECK(strip_last_column(slurp(a / "ckpt" / "metrics.csv")) ==
        strip_last_column(slurp(b / "ckpt" / "metrics.csv")));

  // a different seed changes the generated corpus
  auto c = fresh_dir("rosetta_cli_run_c");
  run_pipeline(c, "8");
  CHECK(slurp(c / "mono_src.jsonl") != slurp(a / "mono_src.jsonl"));

  SUBCASE("translate emits the augmented manifest deterministically") {
    auto out1 = (a / "tr1.jsonl").string();
    auto out2 = (a / "tr2.jsonl").string();
    for (const auto& out : {out1, out2})
      REQUIRE(run_cli({"translate", "--ckpt", (a / "ckpt").string(), "--in",
                       (a / "mono_src.jsonl").string(), "--modality", "speech",
                       "--seed", "5", "--out", out}) == 0);
    const auto body = slurp(out1);
    CHECK(body == slurp(out2));
    std::istringstream lines(body);
    std::string first;
    std::getline(lines, first);
    auto rec = nlohmann::json::parse(first);
    CHECK(rec.contains("t_tgt"));
    CHECK(rec.contains("s_tgt"));
    CHECK(rec.contains("truncated"));
  }

  SUBCASE("evaluation reports match an independent re-run") {
    auto again = (a / "report2").string();
    REQUIRE(run_cli({"evaluate", "--ckpt", (a / "ckpt").string(), "--test",
                     (a / "test_parallel.jsonl").string(), "--out", again,
                     "--seed", "11", "--threads", "1"}) == 0);
    CHECK(slurp(fs::path(again) / "report.json") == report_a);
  }
}

TEST_CASE("ablation suites write their tables and plots render them") {
  auto dir = fresh_dir("rosetta_cli_ablate");
  run_pipeline(dir);
  auto cfg = (dir / "cfg.json").string();
  auto at = [&](const char* n) { return (dir / n).string(); };

  // shrink the budget further for the two extra training runs
  REQUIRE(run_cli({"ablate", "--config", cfg, "--suite", "steps", "--data",
                   at("fs.jsonl"), "--data", at("ft.jsonl"), "--test",
                   at("test_parallel.jsonl"), "--out", at("abl")}) == 0);
  auto steps_csv = slurp(dir / "abl" / "steps.csv");
  CHECK(steps_csv.rfind("step,", 0) == 0);
  CHECK(std::count(steps_csv.begin(), steps_csv.end(), '\n') == 5);

  REQUIRE(run_cli({"plot", "--in", at("abl/steps.csv"), "--out",
                   at("steps.svg")}) == 0);
  auto svg = slurp(dir / "steps.svg");
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);

  CerrCapture cap;
  CHECK(run_cli({"ablate", "--config", cfg, "--suite", "table9", "--data",
                 at("fs.jsonl"), "--test", at("test_parallel.jsonl"), "--out",
                 at("abl")}) == 3);
}
