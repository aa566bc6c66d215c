#include "fss/io.hpp"
#include "fss/rng.hpp"
#include "fss/search.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace fss;
using namespace fss::search;

namespace {
std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fss_test_" + name);
}
}  // namespace

TEST_CASE("score_word arithmetic") {
  CHECK(score_word(1.0, 0.0, 1.0) == doctest::Approx(1.0));
  CHECK(score_word(0.5, 0.2, 1.0) == doctest::Approx(0.4));
  // beta = 0 ignores detection entirely
  CHECK(score_word(0.01, 0.2, 0.0) == doctest::Approx(0.8));
  // anti-aligned embeddings clamp at zero instead of going negative
  CHECK(score_word(0.9, 1.7, 1.0) == doctest::Approx(0.0));
  // beta sharpens the detection factor
  CHECK(score_word(0.5, 0.0, 2.0) == doctest::Approx(0.25));
}

TEST_CASE("score_clip is the max over proposals, zero when empty") {
  CHECK(score_clip({}) == doctest::Approx(0.0));
  CHECK(score_clip({0.3}) == doctest::Approx(0.3));
  const std::vector<double> three = {0.25, 0.75, 0.4};
  double best = 0.0;
  for (double s : three) best = std::max(best, s);  // exhaustive oracle
  CHECK(score_clip(three) == doctest::Approx(best));
  // adding a lower-scoring proposal never changes the result
  CHECK(score_clip({0.25, 0.75, 0.4, 0.1}) == doctest::Approx(score_clip(three)));
}

TEST_CASE("ranked lists sort by score then id") {
  VecX scores(4);
  scores << 0.5, 0.9, 0.5, 0.1;
  const RankedList r = rank({"b", "d", "a", "c"}, scores);
  REQUIRE(r.size() == 4);
  CHECK(r[0].id == "d");
  CHECK(r[1].id == "a");  // tie with "b" broken by id
  CHECK(r[2].id == "b");
  CHECK(r[3].id == "c");
}

TEST_CASE("score matrix: both directions from one matrix, duplicate rejection") {
  CHECK_THROWS_WITH_AS(ScoreMatrix({}, {"c"}), doctest::Contains("empty vocabulary"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(ScoreMatrix({"w"}, {}), doctest::Contains("empty clip set"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(ScoreMatrix({"w", "w"}, {"c"}), doctest::Contains("duplicate"),
                       std::invalid_argument);

  ScoreMatrix m({"ALPHA", "BETA"}, {"c1", "c2", "c3"});
  Rng rng(3);
  for (int w = 0; w < 2; ++w) {
    for (int c = 0; c < 3; ++c) m.set(w, c, rng.uniform());
  }
  // single-word vocabulary ranks that word first trivially
  ScoreMatrix single({"ONLY"}, {"c1"});
  single.set(0, 0, 0.4);
  CHECK(single.fws("c1")[0].id == "ONLY");

  // fws/fvs agree with the matrix cells
  const RankedList fws1 = m.fws("c1");
  for (const auto& item : fws1) {
    CHECK(m.at(m.word_index(item.id), m.clip_index("c1")) == doctest::Approx(item.score));
  }
  const RankedList fvs0 = m.fvs("ALPHA");
  for (const auto& item : fvs0) {
    CHECK(m.at(0, m.clip_index(item.id)) == doctest::Approx(item.score));
  }
}

TEST_CASE("a cached score matrix yields consistent FWS and FVS rankings") {
  Rng rng(9);
  std::vector<std::string> words = {"AA", "BB", "CC", "DD"};
  std::vector<std::string> clips = {"x", "y", "z"};
  ScoreMatrix m(words, clips);
  for (int w = 0; w < 4; ++w) {
    for (int c = 0; c < 3; ++c) m.set(w, c, rng.uniform());
  }
  // sc(clip, word) read through fws equals sc read through fvs
  for (const auto& w : words) {
    for (const auto& item : m.fvs(w)) {
      for (const auto& witem : m.fws(item.id)) {
        if (witem.id == w) CHECK(witem.score == doctest::Approx(item.score));
      }
    }
  }
}

TEST_CASE("rankings are invariant under strictly monotone score transforms") {
  Rng rng(11);
  std::vector<std::string> ids;
  VecX scores(12);
  for (int i = 0; i < 12; ++i) {
    ids.push_back("item" + std::to_string(i));
    scores(i) = rng.uniform();
  }
  const RankedList base = rank(ids, scores);
  VecX cubed = scores.array().pow(3.0).matrix();
  const RankedList transformed = rank(ids, cubed);
  REQUIRE(base.size() == transformed.size());
  for (size_t i = 0; i < base.size(); ++i) CHECK(base[i].id == transformed[i].id);
}

TEST_CASE("score matrix file round trip is exact") {
  ScoreMatrix m({"W ONE", "W'TWO"}, {"c1", "c2"});
  m.set(0, 0, 1.0 / 3.0);
  m.set(0, 1, 0.2);
  m.set(1, 0, 0.875);
  m.set(1, 1, 1e-17);
  const auto path = temp_file("scores.fssscores");
  m.save(path);
  const ScoreMatrix back = ScoreMatrix::load(path);
  CHECK(back.words() == m.words());
  CHECK(back.clip_ids() == m.clip_ids());
  CHECK((back.matrix().array() == m.matrix().array()).all());  // bit exact
  io::write_file(path, "FSSSCORES v1\nscore\tw\tc\n");
  CHECK_THROWS_AS(ScoreMatrix::load(path), io::ParseError);
}

TEST_CASE("ranked list files round trip") {
  RankedListFile f;
  f.direction = "fws";
  f.lists = {{"clip1", {{"AA", 0.9}, {"BB", 0.1}}}, {"clip2", {{"BB", 0.7}, {"AA", 0.2}}}};
  const auto path = temp_file("ranked.fssranked");
  f.save(path);
  const auto back = RankedListFile::load(path);
  CHECK(back.direction == "fws");
  REQUIRE(back.lists.size() == 2);
  CHECK(back.lists[0].first == "clip1");
  CHECK(back.lists[0].second[0].id == "AA");
  CHECK(back.lists[0].second[0].score == doctest::Approx(0.9));
  CHECK(back.lists[1].second.size() == 2);
}

TEST_CASE("all_rankings covers every query of the direction") {
  ScoreMatrix m({"AA", "BB"}, {"c1", "c2", "c3"});
  const auto fws = all_rankings(m, "fws");
  CHECK(fws.lists.size() == 3);
  const auto fvs = all_rankings(m, "fvs");
  CHECK(fvs.lists.size() == 2);
  CHECK_THROWS_AS(all_rankings(m, "sideways"), std::invalid_argument);
}
