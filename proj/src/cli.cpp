#include "fss/cli.hpp"

#include "fss/config.hpp"
#include "fss/corpus.hpp"
#include "fss/evalkit.hpp"
#include "fss/io.hpp"
#include "fss/nn/gradcheck.hpp"
#include "fss/search.hpp"
#include "fss/systems.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

namespace fss::cli {

namespace {

bool log_enabled() {
  const char* v = std::getenv("FSS_LOG");
  return v != nullptr && std::string(v) != "" && std::string(v) != "0";
}

void log_line(const std::string& msg) {
  if (log_enabled()) std::cerr << "[fss] " << msg << "\n";
}

RunConfig load_config(const std::string& config_path, const std::vector<std::string>& sets,
                      std::optional<uint64_t> seed) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
  cfg.apply_overrides(sets);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

void write_manifest(const std::filesystem::path& out, const std::string& command,
                    const RunConfig& cfg,
                    const std::vector<std::pair<std::string, std::string>>& extra) {
  io::Manifest m;
  m.add("tool_version", kToolVersion);
  m.add("command", command);
  m.add("seed", std::to_string(cfg.seed));
  for (const auto& [k, v] : extra) m.add(k, v);
  m.add("config_hash", io::hex64(io::fnv1a64(cfg.echo())));
  std::istringstream echo(cfg.echo());
  std::string line;
  while (std::getline(echo, line)) m.add("config." + line.substr(0, line.find(' ')),
                                         line.substr(line.find("= ") + 2));
  m.write(out.string() + ".manifest");
}

void require_corpus_matches_config(const synth::Corpus& corpus, const RunConfig& cfg) {
  if (corpus.config.feature_dim != cfg.corpus_feature_dim) {
    throw std::runtime_error("config/corpus dimension mismatch: config expects feature_dim " +
                             std::to_string(cfg.corpus_feature_dim) + ", corpus file has " +
                             std::to_string(corpus.config.feature_dim));
  }
}

int cmd_gen_corpus(const std::string& config_path, const std::vector<std::string>& sets,
                   std::optional<uint64_t> seed, const std::string& out) {
  const RunConfig cfg = load_config(config_path, sets, seed);
  const auto corpus_cfg = synth::corpus_config_from(cfg);
  log_line("generating corpus (seed " + std::to_string(corpus_cfg.seed) + ")");
  const synth::Corpus corpus = synth::generate(corpus_cfg);
  synth::save(corpus, out);
  write_manifest(out, "gen-corpus", cfg, {{"corpus_hash", io::hash_file(out)}});
  std::cout << "corpus: " << out << " (" << corpus.train.size() << " train, "
            << corpus.dev.size() << " dev, " << corpus.test.size() << " test clips)\n";
  return 0;
}

int cmd_train(const std::string& system, const std::string& config_path,
              const std::vector<std::string>& sets, std::optional<uint64_t> seed,
              const std::string& corpus_path, const std::string& out) {
  const RunConfig cfg = load_config(config_path, sets, seed);
  const synth::Corpus corpus = synth::load(corpus_path);
  require_corpus_matches_config(corpus, cfg);
  auto sys = systems::make_system(system, cfg);
  Rng rng(cfg.seed);
  log_line("training " + system + " for " + std::to_string(cfg.train_epochs) + " epochs");
  const systems::TrainResult result = sys->train(corpus, rng);
  sys->checkpoint().save(out);

  std::string log_text;
  for (const auto& e : result.log) {
    log_text += "epoch\t" + std::to_string(e.epoch) + "\tloss\t" + io::format_score(e.train_loss) +
                "\tdev_map\t" + io::format_score(e.dev_map) + "\tlr\t" +
                io::format_score(e.learning_rate) + "\n";
    log_line("epoch " + std::to_string(e.epoch) + " loss " + io::format_score(e.train_loss) +
             " dev_map " + io::format_score(e.dev_map));
  }
  io::write_file(out + ".log", log_text);
  write_manifest(out, "train", cfg,
                 {{"system", system},
                  {"corpus_hash", io::hash_file(corpus_path)},
                  {"checkpoint_hash", io::hash_file(out)}});
  std::cout << "checkpoint: " << out << "\n";
  return 0;
}

int cmd_search(const std::string& checkpoint_path, const std::string& corpus_path,
               const std::string& split, const std::string& direction,
               const std::string& score_matrix_path, const std::string& out) {
  const synth::Corpus corpus = synth::load(corpus_path);
  const auto ckpt = nn::Checkpoint::load(checkpoint_path);
  auto sys = systems::load_system(ckpt, corpus);
  const auto& clips = corpus.split(split);
  if (clips.empty()) throw std::runtime_error("split '" + split + "' has no clips");
  const auto vocab = systems::split_vocabulary(clips);
  if (vocab.empty()) throw std::runtime_error("split '" + split + "' has no ground-truth words");

  const std::string cache_path =
      score_matrix_path.empty() ? out + ".scores" : score_matrix_path;
  std::optional<search::ScoreMatrix> matrix;
  if (std::filesystem::exists(cache_path)) {
    log_line("reusing cached score matrix " + cache_path);
    matrix = search::ScoreMatrix::load(cache_path);
    if (matrix->words() != vocab || matrix->clip_ids().size() != clips.size()) {
      throw std::runtime_error("cached score matrix " + cache_path +
                               " does not match the requested split/vocabulary");
    }
  } else {
    log_line("scoring " + std::to_string(clips.size()) + " clips x " +
             std::to_string(vocab.size()) + " words");
    matrix = sys->score(clips, vocab);
    matrix->save(cache_path);
  }

  const auto rankings = search::all_rankings(*matrix, direction);
  rankings.save(out);
  write_manifest(out, "search", sys->config(),
                 {{"system", sys->name()},
                  {"direction", direction},
                  {"split", split},
                  {"corpus_hash", io::hash_file(corpus_path)},
                  {"checkpoint_hash", io::hash_file(checkpoint_path)},
                  {"score_matrix_hash", io::hash_file(cache_path)}});
  std::cout << "ranked lists: " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& corpus_path, const std::string& split,
             const std::string& ranked_path, const std::string& proposals_path,
             const std::string& metrics_csv, const std::string& system_label,
             const std::string& out) {
  if (ranked_path.empty() && proposals_path.empty()) {
    throw std::invalid_argument("eval needs --ranked and/or --proposals");
  }
  const synth::Corpus corpus = synth::load(corpus_path);
  const auto& clips = corpus.split(split);

  std::set<std::string> selected;
  if (!metrics_csv.empty()) {
    for (const auto& m : io::split(metrics_csv, ',')) {
      if (m != "map" && m != "mf1" && m != "prn" && m != "ap_iou") {
        throw std::invalid_argument("unknown metric '" + m + "' (map|mf1|prn|ap_iou)");
      }
      selected.insert(m);
    }
  }

  evalkit::MetricReport report;
  report.system = system_label.empty() ? "unknown" : system_label;
  if (!ranked_path.empty()) {
    const auto ranked = search::RankedListFile::load(ranked_path);
    const auto judgments =
        evalkit::build_judgments(clips, evalkit::direction_from_string(ranked.direction));
    report = evalkit::evaluate_rankings(ranked.lists, judgments, report.system);
  }
  if (!proposals_path.empty()) {
    const auto table = detect::load_proposals(proposals_path);
    std::vector<evalkit::SegmentPrediction> preds;
    for (const auto& [clip_id, props] : table) {
      for (const auto& p : props) preds.push_back({clip_id, p.segment, p.p_det});
    }
    evalkit::add_localization(report, preds, evalkit::ground_truth_segments(clips));
    if (ranked_path.empty()) report.direction = "none";
  }

  std::string text = report.render();
  if (!selected.empty()) {
    // keep only the requested metric lines
    std::istringstream in(text);
    std::string line, filtered;
    auto want = [&](const std::string& name) {
      if (name.rfind("AP@", 0) == 0) return selected.count("ap_iou") > 0;
      if (name == "mAP") return selected.count("map") > 0;
      if (name == "mF1") return selected.count("mf1") > 0;
      return selected.count("prn") > 0;
    };
    while (std::getline(in, line)) {
      if (line.rfind("metric\t", 0) == 0) {
        const auto fields = io::split(line, '\t');
        if (!want(fields[1])) continue;
      }
      filtered += line + "\n";
    }
    text = filtered;
  }
  io::write_file(out, text);
  std::cout << text;

  RunConfig cfg;  // eval has no tunables of its own; manifest records inputs
  std::vector<std::pair<std::string, std::string>> extra = {
      {"corpus_hash", io::hash_file(corpus_path)}, {"split", split}};
  if (!ranked_path.empty()) extra.emplace_back("ranked_hash", io::hash_file(ranked_path));
  if (!proposals_path.empty()) extra.emplace_back("proposals_hash", io::hash_file(proposals_path));
  write_manifest(out, "eval", cfg, extra);
  return 0;
}

int cmd_gradcheck() {
  const auto results = nn::gradcheck_suite(1, 20);
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "PASS" : "FAIL") << "\t" << r.op << "\tmax_rel_err\t"
              << io::format_score(r.max_err) << "\n";
    all_pass = all_pass && r.pass;
  }
  std::cout << (all_pass ? "gradcheck: all ops pass" : "gradcheck: FAILURES present") << "\n";
  return all_pass ? 0 : 1;
}

int classify_error(const std::exception& e) {
  if (dynamic_cast<const io::ParseError*>(&e)) return 3;
  const std::string what = e.what();
  if (what.find("mismatch") != std::string::npos) return 4;
  if (what.find("cannot open") != std::string::npos ||
      what.find("cannot write") != std::string::npos) {
    return 2;
  }
  if (dynamic_cast<const std::invalid_argument*>(&e)) return 1;
  return 5;
}

const char* error_kind(int code) {
  switch (code) {
    case 1: return "usage";
    case 2: return "io";
    case 3: return "parse";
    case 4: return "mismatch";
    default: return "internal";
  }
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"fingerspelling search pipeline"};
  app.require_subcommand(1);

  std::string config_path, corpus_path, checkpoint_path, out_path, system, split = "test";
  std::string direction, ranked_path, proposals_path, metrics_csv, score_matrix_path;
  std::vector<std::string> sets;
  std::optional<uint64_t> seed;

  auto add_common = [&](CLI::App* cmd, bool with_config) {
    if (with_config) {
      cmd->add_option("--config", config_path, "run configuration file");
      cmd->add_option("--set", sets, "override config entries (key=value)");
      cmd->add_option("--seed", seed, "root random seed (overrides config)");
    }
    cmd->add_option("--out", out_path, "output path")->required();
  };

  CLI::App* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
  add_common(gen, true);

  CLI::App* train = app.add_subcommand("train", "train a search system");
  add_common(train, true);
  train->add_option("--system", system, "fssnet|recognizer|wholeclip|attnkws|extdet")->required();
  train->add_option("--corpus", corpus_path, "corpus file")->required();

  CLI::App* search_cmd = app.add_subcommand("search", "rank words or clips with a checkpoint");
  add_common(search_cmd, false);
  search_cmd->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  search_cmd->add_option("--corpus", corpus_path, "corpus file")->required();
  search_cmd->add_option("--split", split, "train|dev|test (default test)");
  search_cmd->add_option("--direction", direction, "fws|fvs")->required();
  search_cmd->add_option("--score-matrix", score_matrix_path,
                         "score matrix cache path (reused when present)");

  CLI::App* eval_cmd = app.add_subcommand("eval", "compute metrics from ranked lists/proposals");
  add_common(eval_cmd, false);
  eval_cmd->add_option("--corpus", corpus_path, "corpus file")->required();
  eval_cmd->add_option("--split", split, "train|dev|test (default test)");
  eval_cmd->add_option("--ranked", ranked_path, "ranked list file");
  eval_cmd->add_option("--proposals", proposals_path, "proposal records for AP@IoU");
  eval_cmd->add_option("--metrics", metrics_csv, "subset of map,mf1,prn,ap_iou");
  eval_cmd->add_option("--system", system, "system label for the report");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every op");

  std::vector<const char*> argv;
  argv.push_back("fss");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      return app.exit(e);
    }
    std::cerr << "error: usage: " << e.what() << "\n";
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_corpus(config_path, sets, seed, out_path);
    if (train->parsed()) {
      return cmd_train(system, config_path, sets, seed, corpus_path, out_path);
    }
    if (search_cmd->parsed()) {
      return cmd_search(checkpoint_path, corpus_path, split, direction, score_matrix_path,
                        out_path);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(corpus_path, split, ranked_path, proposals_path, metrics_csv, system,
                      out_path);
    }
    if (gradcheck->parsed()) return cmd_gradcheck();
  } catch (const std::exception& e) {
    const int code = classify_error(e);
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n' || c == '\t') c = ' ';
    }
    std::cerr << "error: " << error_kind(code) << ": " << msg << "\n";
    return code;
  }
  std::cerr << "error: usage: no subcommand\n";
  return 1;
}

}  // namespace fss::cli
