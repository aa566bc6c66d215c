#include "fss/io.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

namespace {

namespace fs = std::filesystem;
using fss::io::read_file;
using fss::io::write_file;

const fs::path kWork = fs::temp_directory_path() / "fss_cli_tests";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FSS_CLI_PATH) + " " + args + " >" +
                          (kWork / "stdout.txt").string() + " 2>" +
                          (kWork / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string out_text() { return read_file(kWork / "stdout.txt"); }
std::string err_text() { return read_file(kWork / "stderr.txt"); }

struct Workspace {
  Workspace() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    write_file(kWork / "tiny.cfg",
               "seed = 3\n"
               "corpus.feature_dim = 12\n"
               "corpus.clip_len = 60\n"
               "corpus.overlap = 10\n"
               "corpus.n_train_clips = 8\n"
               "corpus.n_dev_clips = 2\n"
               "corpus.n_test_clips = 6\n"
               "corpus.lexicon_size = 12\n"
               "corpus.noise_sigma = 0.05\n"
               "corpus.n_distractor_prototypes = 6\n"
               "corpus.word_len_max = 4\n"
               "model.trunk_hidden = 6\n"
               "model.fs_hidden = 6\n"
               "model.text_hidden = 6\n"
               "model.char_embed_dim = 5\n"
               "model.embedding_dim = 8\n"
               "model.conv1_channels = 8\n"
               "model.conv2_channels = 6\n"
               "model.conv3_channels = 6\n"
               "model.anchor_scales = 2,4,8,16,24\n"
               "train.epochs = 1\n"
               "train.batch_size = 4\n"
               "train.beam_width = 4\n");
  }
};

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("cli: full pipeline, determinism, caching and error reporting") {
  Workspace ws;
  const auto cfg = kWork / "tiny.cfg";
  const auto corpus = kWork / "corpus.fsc";
  const auto ckpt = kWork / "model.fssckpt";
  const auto ranked = kWork / "ranked.fssranked";
  const auto report = kWork / "report.txt";

  SUBCASE("gen-corpus, train, search, eval run end to end") {
    REQUIRE(run_cli("gen-corpus --config " + q(cfg) + " --out " + q(corpus)) == 0);
    CHECK(fs::exists(corpus));
    CHECK(fs::exists(kWork / "corpus.fsc.manifest"));
    const std::string manifest = read_file(kWork / "corpus.fsc.manifest");
    CHECK(manifest.find("tool_version = 1.0.0") != std::string::npos);
    CHECK(manifest.find("corpus_hash = ") != std::string::npos);
    CHECK(manifest.find("config.seed = 3") != std::string::npos);

    REQUIRE(run_cli("train --system fssnet --config " + q(cfg) + " --corpus " + q(corpus) +
                    " --out " + q(ckpt)) == 0);
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(kWork / "model.fssckpt.log"));
    CHECK(read_file(kWork / "model.fssckpt.log").find("epoch\t0") != std::string::npos);

    REQUIRE(run_cli("search --checkpoint " + q(ckpt) + " --corpus " + q(corpus) +
                    " --split test --direction fws --out " + q(ranked)) == 0);
    CHECK(fs::exists(ranked));
    CHECK(fs::exists(kWork / "ranked.fssranked.scores"));

    REQUIRE(run_cli("eval --corpus " + q(corpus) + " --split test --ranked " + q(ranked) +
                    " --system fssnet --out " + q(report)) == 0);
    const std::string text = read_file(report);
    CHECK(text.find("FSSREPORT v1") != std::string::npos);
    CHECK(text.find("metric\tmAP\t") != std::string::npos);
    CHECK(text.find("metric\tR@10\t") != std::string::npos);

    SUBCASE("search reuses a cached score matrix for the other direction") {
      const auto ranked_fvs = kWork / "ranked_fvs.fssranked";
      REQUIRE(run_cli("search --checkpoint " + q(ckpt) + " --corpus " + q(corpus) +
                      " --split test --direction fvs --score-matrix " +
                      q(kWork / "ranked.fssranked.scores") + " --out " + q(ranked_fvs)) == 0);
      const std::string fvs_manifest = read_file(kWork / "ranked_fvs.fssranked.manifest");
      CHECK(fvs_manifest.find("direction = fvs") != std::string::npos);
      REQUIRE(run_cli("eval --corpus " + q(corpus) + " --split test --ranked " + q(ranked_fvs) +
                      " --metrics map,mf1 --out " + q(report)) == 0);
      const std::string fvs_text = read_file(report);
      CHECK(fvs_text.find("metric\tmAP\t") != std::string::npos);
      CHECK(fvs_text.find("metric\tP@1\t") == std::string::npos);  // filtered out
    }
  }

  SUBCASE("identical config and seed give byte-identical outputs") {
    const auto corpus2 = kWork / "corpus2.fsc";
    REQUIRE(run_cli("gen-corpus --config " + q(cfg) + " --out " + q(corpus)) == 0);
    REQUIRE(run_cli("gen-corpus --config " + q(cfg) + " --out " + q(corpus2)) == 0);
    CHECK(read_file(corpus) == read_file(corpus2));

    REQUIRE(run_cli("train --system wholeclip --config " + q(cfg) + " --corpus " + q(corpus) +
                    " --out " + q(ckpt)) == 0);
    const auto ckpt2 = kWork / "model2.fssckpt";
    REQUIRE(run_cli("train --system wholeclip --config " + q(cfg) + " --corpus " + q(corpus) +
                    " --out " + q(ckpt2)) == 0);
    CHECK(read_file(ckpt) == read_file(ckpt2));

    for (const char* dir : {"fws", "fvs"}) {
      const auto r1 = kWork / ("det_a_" + std::string(dir));
      const auto r2 = kWork / ("det_b_" + std::string(dir));
      REQUIRE(run_cli("search --checkpoint " + q(ckpt) + " --corpus " + q(corpus) +
                      " --split test --direction " + dir + " --out " + q(r1)) == 0);
      REQUIRE(run_cli("search --checkpoint " + q(ckpt2) + " --corpus " + q(corpus) +
                      " --split test --direction " + dir + " --out " + q(r2)) == 0);
      CHECK(read_file(r1) == read_file(r2));
      const auto rep1 = kWork / ("rep_a_" + std::string(dir));
      const auto rep2 = kWork / ("rep_b_" + std::string(dir));
      REQUIRE(run_cli("eval --corpus " + q(corpus) + " --split test --ranked " + q(r1) +
                      " --out " + q(rep1)) == 0);
      REQUIRE(run_cli("eval --corpus " + q(corpus) + " --split test --ranked " + q(r2) +
                      " --out " + q(rep2)) == 0);
      CHECK(read_file(rep1) == read_file(rep2));
    }
  }

  SUBCASE("--set overrides reach the corpus") {
    REQUIRE(run_cli("gen-corpus --config " + q(cfg) +
                    " --set corpus.n_test_clips=3 --seed 11 --out " + q(corpus)) == 0);
    CHECK(out_text().find("3 test clips") != std::string::npos);
    const std::string manifest = read_file(kWork / "corpus.fsc.manifest");
    CHECK(manifest.find("seed = 11") != std::string::npos);
  }

  SUBCASE("distinct error classes and exit codes") {
    // missing file
    CHECK(run_cli("train --system fssnet --config " + q(cfg) + " --corpus " +
                  q(kWork / "nope.fsc") + " --out " + q(ckpt)) == 2);
    CHECK(err_text().find("error: io:") != std::string::npos);

    // config validation failure
    REQUIRE(run_cli("gen-corpus --config " + q(cfg) + " --out " + q(corpus)) == 0);
    CHECK(run_cli("train --system fssnet --config " + q(cfg) +
                  " --set corpus.overlap=70000 --corpus " + q(corpus) + " --out " + q(ckpt)) == 1);
    CHECK(err_text().find("error: usage:") != std::string::npos);

    // unknown system
    CHECK(run_cli("train --system bert --config " + q(cfg) + " --corpus " + q(corpus) +
                  " --out " + q(ckpt)) == 1);

    // corpus/config dimension mismatch
    CHECK(run_cli("train --system fssnet --config " + q(cfg) +
                  " --set corpus.feature_dim=24 --corpus " + q(corpus) + " --out " + q(ckpt)) ==
          4);
    CHECK(err_text().find("error: mismatch:") != std::string::npos);

    // malformed corpus file
    write_file(kWork / "broken.fsc", "FSSCORPUS v1\nclip\tbad\nend\n");
    CHECK(run_cli("train --system fssnet --config " + q(cfg) + " --corpus " +
                  q(kWork / "broken.fsc") + " --out " + q(ckpt)) == 3);
    CHECK(err_text().find("error: parse:") != std::string::npos);

    // eval without inputs
    CHECK(run_cli("eval --corpus " + q(corpus) + " --out " + q(report)) == 1);
  }
}

TEST_CASE("cli: gradcheck subcommand passes") {
  Workspace ws;
  CHECK(run_cli("gradcheck") == 0);
  const std::string text = out_text();
  CHECK(text.find("PASS\tmatmul_transpose") != std::string::npos);
  CHECK(text.find("ctc_loss") != std::string::npos);
  CHECK(text.find("all ops pass") != std::string::npos);
  CHECK(text.find("FAIL") == std::string::npos);
}
