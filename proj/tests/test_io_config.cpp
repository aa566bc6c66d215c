#include "fss/config.hpp"
#include "fss/io.hpp"
#include "fss/rng.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>

using namespace fss;

namespace {
std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fss_test_" + name);
}
}  // namespace

TEST_CASE("base64 round-trips doubles bit exactly") {
  Rng rng(3);
  std::vector<double> values;
  for (int i = 0; i < 257; ++i) values.push_back(rng.normal() * 1e3);
  values.push_back(0.0);
  values.push_back(-0.0);
  const std::string enc = io::encode_doubles(values.data(), values.size());
  const auto back = io::decode_doubles(enc);
  REQUIRE(back.size() == values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    CHECK(std::memcmp(&back[i], &values[i], sizeof(double)) == 0);
  }
  CHECK_THROWS_AS(io::base64_decode("abc"), std::invalid_argument);
  CHECK_THROWS_AS(io::base64_decode("ab!="), std::invalid_argument);
}

TEST_CASE("format_exact round-trips") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform_int(-8, 8));
    double back = 0.0;
    std::sscanf(io::format_exact(v).c_str(), "%lf", &back);
    CHECK(back == v);
  }
  CHECK(io::format_exact(0.45) == "0.45");
}

TEST_CASE("config defaults mirror the reference settings") {
  RunConfig cfg;
  CHECK(cfg.corpus_clip_len == 300);
  CHECK(cfg.corpus_overlap == 75);
  CHECK(cfg.corpus_fs_segments_per_clip_mean == doctest::Approx(1.9));
  CHECK(cfg.model_anchor_scales.size() == 20);
  CHECK(cfg.model_anchor_scales.front() == 1);
  CHECK(cfg.model_anchor_scales.back() == 75);
  CHECK(cfg.detector_iou_positive == doctest::Approx(0.6));
  CHECK(cfg.detector_iou_negative == doctest::Approx(0.3));
  CHECK(cfg.detector_nms_iou == doctest::Approx(0.7));
  CHECK(cfg.detector_max_proposals == 50);
  CHECK(cfg.match_margin == doctest::Approx(0.45));
  CHECK(cfg.match_neg_cap_visual == 5);
  CHECK(cfg.match_neg_cap_word == 5);
  CHECK(cfg.match_lambda_det == doctest::Approx(0.1));
  CHECK(cfg.search_beta == doctest::Approx(1.0));
  CHECK(cfg.train_epochs == 25);
  CHECK(cfg.train_learning_rate == doctest::Approx(0.001));
  CHECK(cfg.train_optimizer == "adam");
  CHECK(cfg.train_plateau_patience == 3);
  CHECK(cfg.model_pool_kernel == 8);
  CHECK(cfg.model_pool_stride == 4);
}

TEST_CASE("config parse, echo, overrides and unknown keys") {
  const auto path = temp_file("cfg.cfg");
  io::write_file(path, "# comment\nseed = 7\ncorpus.clip_len = 120\n\ntrain.epochs = 3\n");
  const RunConfig cfg = RunConfig::load(path, {"match.margin=0.3"});
  CHECK(cfg.seed == 7);
  CHECK(cfg.corpus_clip_len == 120);
  CHECK(cfg.train_epochs == 3);
  CHECK(cfg.match_margin == doctest::Approx(0.3));

  // echo is canonical and reparses to the same config
  const RunConfig back = RunConfig::parse(cfg.echo(), "echo");
  CHECK(back.echo() == cfg.echo());

  RunConfig bad;
  CHECK_THROWS_WITH_AS(bad.set("nope.key", "1"), doctest::Contains("unknown config key"),
                       std::invalid_argument);
  io::write_file(path, "corpus.clip_len = fifty\n");
  CHECK_THROWS_AS(RunConfig::load(path), io::ParseError);
  io::write_file(path, "corpus.overlap = 400\n");
  CHECK_THROWS_WITH_AS(RunConfig::load(path), doctest::Contains("clip_len > overlap"),
                       std::invalid_argument);
}

TEST_CASE("rng streams are deterministic and fork is order independent") {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng c(99);
  (void)c.uniform();
  (void)c.uniform();
  CHECK(c.fork(5).next() == Rng(99).fork(5).next());
  // distribution sanity
  Rng r(1);
  double sum = 0, sum2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sum2 += x * x;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sum2 / n - 1.0) < 0.05);
  int counts[4] = {0, 0, 0, 0};
  for (int i = 0; i < 8000; ++i) ++counts[r.uniform_int(0, 3)];
  for (int k = 0; k < 4; ++k) CHECK(std::abs(counts[k] - 2000) < 200);
  // poisson mean
  double psum = 0;
  for (int i = 0; i < 20000; ++i) psum += r.poisson(1.9);
  CHECK(psum / 20000 == doctest::Approx(1.9).epsilon(0.05));
}

TEST_CASE("manifest rendering is deterministic") {
  io::Manifest m;
  m.add("tool_version", "1.0.0");
  m.add("seed", "1");
  CHECK(m.render() == "tool_version = 1.0.0\nseed = 1\n");
}
