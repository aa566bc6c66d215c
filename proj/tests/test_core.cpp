#include "fss/core.hpp"
#include "fss/rng.hpp"

#include <doctest.h>

#include <set>
#include <string>

using namespace fss;

namespace {

// frame-set oracle: interval measures via explicit member enumeration
std::set<int> frames_of(const Segment& s) {
  std::set<int> out;
  for (int f = s.s; f < s.t; ++f) out.insert(f);
  return out;
}

int oracle_intersection(const Segment& a, const Segment& b) {
  const auto fa = frames_of(a), fb = frames_of(b);
  int n = 0;
  for (int f : fa) n += fb.count(f);
  return n;
}

double oracle_iou(const Segment& a, const Segment& b) {
  const auto fa = frames_of(a), fb = frames_of(b);
  std::set<int> uni = fa;
  uni.insert(fb.begin(), fb.end());
  return static_cast<double>(oracle_intersection(a, b)) / static_cast<double>(uni.size());
}

// plain full-matrix recurrence, independent of the two-row implementation
int oracle_levenshtein(const std::string& a, const std::string& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
  }
  return d[n][m];
}

Segment random_segment(Rng& rng, int max_t) {
  const int s = rng.uniform_int(0, max_t - 2);
  const int t = rng.uniform_int(s + 1, max_t);
  return Segment(s, t);
}

std::string random_text(Rng& rng, int max_len) {
  const auto& ab = Alphabet::instance();
  std::string out;
  const int len = rng.uniform_int(0, max_len);
  for (int i = 0; i < len; ++i) out.push_back(ab.char_at(rng.uniform_int(0, ab.size() - 1)));
  return out;
}

}  // namespace

TEST_CASE("alphabet indices are dense, stable and bijective") {
  const auto& ab = Alphabet::instance();
  CHECK(ab.size() == 31);  // 26 letters + <space> ' & . @
  CHECK(ab.total_symbols() == 33);
  CHECK(ab.x_index() == 31);
  CHECK(ab.blank_index() == 32);
  CHECK(ab.x_index() != ab.blank_index());
  std::set<int> seen;
  for (int i = 0; i < ab.size(); ++i) {
    const char c = ab.char_at(i);
    CHECK(ab.index_of(c) == i);
    seen.insert(i);
  }
  CHECK(static_cast<int>(seen.size()) == ab.size());
  CHECK(ab.index_of('a') == ab.index_of('A'));
  CHECK(ab.index_of(' ') == 26);
  CHECK_THROWS_AS(ab.index_of('#'), std::invalid_argument);
  CHECK(ab.canonicalize("asl") == "ASL");
  CHECK_THROWS_AS(ab.canonicalize("A?B"), std::invalid_argument);
}

TEST_CASE("segment invariants") {
  CHECK(Segment(0, 1).length() == 1);
  CHECK(Segment(3, 10).length() == 7);
  CHECK_THROWS_AS(Segment(-1, 3), std::invalid_argument);
  CHECK_THROWS_AS(Segment(5, 5), std::invalid_argument);
  CHECK_THROWS_AS(Segment(7, 2), std::invalid_argument);
}

TEST_CASE("intersection examples") {
  CHECK(intersection(Segment(0, 10), Segment(5, 15)) == 5);
  CHECK(intersection(Segment(0, 10), Segment(0, 10)) == 10);
  CHECK(intersection(Segment(0, 5), Segment(5, 10)) == 0);  // half-open: touching is disjoint
}

TEST_CASE("iou examples") {
  CHECK(iou(Segment(0, 10), Segment(5, 15)) == doctest::Approx(1.0 / 3.0));
  CHECK(iou(Segment(2, 9), Segment(2, 9)) == doctest::Approx(1.0));
  CHECK(iou(Segment(0, 3), Segment(7, 9)) == doctest::Approx(0.0));
}

TEST_CASE("is_ratio examples and asymmetry") {
  CHECK(is_ratio(Segment(0, 10), Segment(5, 15)) == doctest::Approx(0.5));
  // y inside x: full coverage of y
  CHECK(is_ratio(Segment(0, 20), Segment(5, 10)) == doctest::Approx(1.0));
  CHECK(is_ratio(Segment(0, 3), Segment(7, 9)) == doctest::Approx(0.0));
  // asymmetric when lengths differ
  CHECK(is_ratio(Segment(0, 10), Segment(5, 8)) == doctest::Approx(1.0));
  CHECK(is_ratio(Segment(5, 8), Segment(0, 10)) == doctest::Approx(0.3));
}

TEST_CASE("interval ops match the frame-set oracle on random segments") {
  Rng rng(42);
  for (int i = 0; i < 500; ++i) {
    const Segment a = random_segment(rng, 60);
    const Segment b = random_segment(rng, 60);
    CHECK(intersection(a, b) == oracle_intersection(a, b));
    CHECK(iou(a, b) == doctest::Approx(oracle_iou(a, b)));
    CHECK(is_ratio(a, b) ==
          doctest::Approx(static_cast<double>(oracle_intersection(a, b)) / b.length()));
    // symmetry
    CHECK(intersection(a, b) == intersection(b, a));
    CHECK(iou(a, b) == doctest::Approx(iou(b, a)));
    CHECK(iou(a, b) >= 0.0);
    CHECK(iou(a, b) <= 1.0);
  }
}

TEST_CASE("levenshtein examples") {
  CHECK(ler("ASL", "ASL") == doctest::Approx(0.0));
  CHECK(ler("ALL", "ASL") == doctest::Approx(1.0 / 3.0));
  CHECK(ler("", "ASL") == doctest::Approx(1.0));
  CHECK_THROWS_AS(ler("ASL", ""), std::invalid_argument);
  CHECK(clamped_ler("ABCDEFGH", "X") == doctest::Approx(1.0));
}

TEST_CASE("levenshtein matches full-matrix oracle, identity and triangle inequality") {
  Rng rng(7);
  for (int i = 0; i < 300; ++i) {
    const std::string a = random_text(rng, 10);
    const std::string b = random_text(rng, 10);
    const std::string c = random_text(rng, 10);
    CHECK(levenshtein(a, b) == oracle_levenshtein(a, b));
    CHECK(levenshtein(a, a) == 0);
    CHECK(levenshtein(a, b) == levenshtein(b, a));
    CHECK(levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c));
  }
}

TEST_CASE("clip validation") {
  Clip clip;
  clip.id = "c";
  clip.frames = MatX::Zero(20, 4);
  clip.ground_truth = {{Segment(0, 5), "AB"}, {Segment(5, 9), "CD"}};
  CHECK_NOTHROW(validate_clip(clip));
  clip.ground_truth.push_back({Segment(15, 25), "EF"});
  CHECK_THROWS_WITH_AS(validate_clip(clip), doctest::Contains("exceeds clip length"),
                       std::invalid_argument);
  clip.ground_truth.pop_back();
  clip.ground_truth.push_back({Segment(4, 8), "GH"});
  CHECK_THROWS_WITH_AS(validate_clip(clip), doctest::Contains("overlapping"),
                       std::invalid_argument);
}

TEST_CASE("query rejects empty and invalid text") {
  const Query q = make_query("a'b");
  CHECK(q.text == "A'B");
  CHECK(q.chars.size() == 3);
  CHECK_THROWS_AS(make_query(""), std::invalid_argument);
  CHECK_THROWS_AS(make_query("A#B"), std::invalid_argument);
}
