#include "fss/baselines.hpp"
#include "fss/nn/gradcheck.hpp"
#include "fss/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <map>

using namespace fss;
using namespace fss::baselines;

namespace {

MatX random_logits(Rng& rng, int K, int T) {
  MatX m(K, T);
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < K; ++k) m(k, t) = rng.normal();
  }
  return m;
}

MatX softmax_cols_value(const MatX& logits) {
  MatX out = logits;
  for (int c = 0; c < out.cols(); ++c) {
    const double mx = out.col(c).maxCoeff();
    out.col(c) = (out.col(c).array() - mx).exp();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

std::vector<int> collapse(const std::vector<int>& path, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int s : path) {
    if (s != prev && s != blank) out.push_back(s);
    prev = s;
  }
  return out;
}

/// Exhaustive path-sum oracle: probability of all label paths collapsing to
/// the target.
double oracle_ctc_nll(const MatX& logits, const std::vector<int>& target, int blank) {
  const int K = static_cast<int>(logits.rows());
  const int T = static_cast<int>(logits.cols());
  const MatX probs = softmax_cols_value(logits);
  double total = 0.0;
  std::vector<int> path(static_cast<size_t>(T), 0);
  long n_paths = 1;
  for (int t = 0; t < T; ++t) n_paths *= K;
  for (long code = 0; code < n_paths; ++code) {
    long rem = code;
    double p = 1.0;
    for (int t = 0; t < T; ++t) {
      path[static_cast<size_t>(t)] = static_cast<int>(rem % K);
      rem /= K;
      p *= probs(path[static_cast<size_t>(t)], t);
    }
    if (collapse(path, blank) == target) total += p;
  }
  return -std::log(total);
}

/// Exhaustive decoding oracle: posterior of every collapsed label sequence.
std::vector<int> oracle_best_sequence(const MatX& logits, int blank) {
  const int K = static_cast<int>(logits.rows());
  const int T = static_cast<int>(logits.cols());
  const MatX probs = softmax_cols_value(logits);
  std::map<std::vector<int>, double> mass;
  std::vector<int> path(static_cast<size_t>(T), 0);
  long n_paths = 1;
  for (int t = 0; t < T; ++t) n_paths *= K;
  for (long code = 0; code < n_paths; ++code) {
    long rem = code;
    double p = 1.0;
    for (int t = 0; t < T; ++t) {
      path[static_cast<size_t>(t)] = static_cast<int>(rem % K);
      rem /= K;
      p *= probs(path[static_cast<size_t>(t)], t);
    }
    mass[collapse(path, blank)] += p;
  }
  std::vector<int> best;
  double best_p = -1.0;
  for (const auto& [seq, p] : mass) {
    if (p > best_p) {
      best_p = p;
      best = seq;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("ctc minimum frame count accounts for repeats") {
  CHECK(ctc_min_frames({}) == 0);
  CHECK(ctc_min_frames({1, 2, 3}) == 3);
  CHECK(ctc_min_frames({1, 1}) == 3);
  CHECK(ctc_min_frames({1, 1, 1, 2}) == 6);
}

TEST_CASE("ctc loss: single-frame target is the per-frame posterior") {
  Rng rng(3);
  const MatX logits = random_logits(rng, 4, 1);
  const MatX probs = softmax_cols_value(logits);
  CHECK(ctc_loss_value(logits, {2}, 3, nullptr) == doctest::Approx(-std::log(probs(2, 0))));
}

TEST_CASE("ctc loss matches exhaustive path enumeration") {
  Rng rng(5);
  SUBCASE("three frames, target AB") {
    const MatX logits = random_logits(rng, 4, 3);
    const std::vector<int> target = {0, 1};
    CHECK(ctc_loss_value(logits, target, 3, nullptr) ==
          doctest::Approx(oracle_ctc_nll(logits, target, 3)).epsilon(1e-10));
  }
  SUBCASE("randomized instances up to T=6, K=4") {
    for (int trial = 0; trial < 40; ++trial) {
      const int K = rng.uniform_int(2, 4);
      const int T = rng.uniform_int(1, 6);
      const MatX logits = random_logits(rng, K, T);
      std::vector<int> target;
      const int L = rng.uniform_int(0, 3);
      for (int i = 0; i < L; ++i) target.push_back(rng.uniform_int(0, K - 2));
      if (ctc_min_frames(target) > T) {
        CHECK_THROWS_AS(ctc_loss_value(logits, target, K - 1, nullptr), std::invalid_argument);
        continue;
      }
      const double loss = ctc_loss_value(logits, target, K - 1, nullptr);
      const double oracle = oracle_ctc_nll(logits, target, K - 1);
      CHECK(std::abs(loss - oracle) < 1e-10);
    }
  }
}

TEST_CASE("ctc loss rejects bad targets") {
  Rng rng(7);
  const MatX logits = random_logits(rng, 4, 3);
  CHECK_THROWS_WITH_AS(ctc_loss_value(logits, {0, 0, 1}, 3, nullptr), doctest::Contains("frames"),
                       std::invalid_argument);
  CHECK_THROWS_AS(ctc_loss_value(logits, {3}, 3, nullptr), std::invalid_argument);  // blank
  CHECK_THROWS_AS(ctc_loss_value(logits, {7}, 3, nullptr), std::invalid_argument);  // range
}

TEST_CASE("ctc gradient matches finite differences") {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    nn::Parameter logits("logits", 5, 6);
    logits.value = random_logits(rng, 5, 6);
    const std::vector<int> target = {0, 2, 2};
    const double err = nn::max_grad_error({&logits}, [&](nn::Graph& g) {
      return ctc_loss(g, g.param(logits), target, 4);
    });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("prefix beam search") {
  Rng rng(11);
  SUBCASE("width 1 equals greedy best-path decode on peaked distributions") {
    // sequence blank, A, A, blank, B with near-one-hot frames
    MatX logits = MatX::Constant(3, 5, -8.0);
    logits(2, 0) = 8.0;  // blank
    logits(0, 1) = 8.0;
    logits(0, 2) = 8.0;
    logits(2, 3) = 8.0;
    logits(1, 4) = 8.0;
    const auto hyps = prefix_beam_search(logits, 1, 2);
    REQUIRE(hyps.size() == 1);
    CHECK(hyps[0].labels == std::vector<int>{0, 1});  // A B, repeat collapsed
  }
  SUBCASE("top hypothesis matches the exhaustive posterior argmax (T=4, K=3)") {
    for (int trial = 0; trial < 30; ++trial) {
      const MatX logits = random_logits(rng, 3, 4);
      const auto hyps = prefix_beam_search(logits, 16, 2);
      REQUIRE(!hyps.empty());
      CHECK(hyps[0].labels == oracle_best_sequence(logits, 2));
      // scores are monotone non-increasing down the list
      for (size_t i = 1; i < hyps.size(); ++i) {
        CHECK(hyps[i - 1].log_prob >= hyps[i].log_prob);
      }
    }
  }
  SUBCASE("deterministic given logits") {
    const MatX logits = random_logits(rng, 4, 6);
    const auto a = prefix_beam_search(logits, 8, 3);
    const auto b = prefix_beam_search(logits, 8, 3);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].labels == b[i].labels);
      CHECK(a[i].log_prob == b[i].log_prob);
    }
  }
  SUBCASE("blank-separated repeats survive collapsing") {
    MatX logits = MatX::Constant(2, 3, -8.0);
    logits(0, 0) = 8.0;
    logits(1, 1) = 8.0;  // blank
    logits(0, 2) = 8.0;
    const auto hyps = prefix_beam_search(logits, 4, 1);
    CHECK(hyps[0].labels == std::vector<int>{0, 0});
  }
}

TEST_CASE("ctc transcripts join words with <x> and honor clip edges") {
  const auto& ab = Alphabet::instance();
  const int X = ab.x_index();
  Clip clip;
  clip.id = "c";
  clip.frames = MatX::Zero(30, 2);

  SUBCASE("interior segments get leading and trailing <x>") {
    clip.ground_truth = {{Segment(5, 10), "AB"}, {Segment(15, 20), "C"}};
    const auto tr = ctc_transcript(clip);
    CHECK(tr == std::vector<int>{X, 0, 1, X, 2, X});
  }
  SUBCASE("segment at clip start has no leading <x>") {
    clip.ground_truth = {{Segment(0, 10), "AB"}};
    const auto tr = ctc_transcript(clip);
    CHECK(tr == std::vector<int>{0, 1, X});
  }
  SUBCASE("segment at clip end has no trailing <x>") {
    clip.ground_truth = {{Segment(20, 30), "AB"}};
    const auto tr = ctc_transcript(clip);
    CHECK(tr == std::vector<int>{X, 0, 1});
  }
  SUBCASE("adjacent segments with no gap have no separator") {
    clip.ground_truth = {{Segment(5, 10), "A"}, {Segment(10, 20), "B"}};
    const auto tr = ctc_transcript(clip);
    CHECK(tr == std::vector<int>{X, 0, 1, X});
  }
  SUBCASE("clip without fingerspelling is a single <x>") {
    const auto tr = ctc_transcript(clip);
    CHECK(tr == std::vector<int>{X});
  }
  SUBCASE("ground truth out of temporal order is sorted first") {
    clip.ground_truth = {{Segment(15, 20), "C"}, {Segment(5, 10), "AB"}};
    CHECK(ctc_transcript(clip) == std::vector<int>{X, 0, 1, X, 2, X});
  }
}

TEST_CASE("recognizer scoring") {
  const auto& ab = Alphabet::instance();
  auto hyp = [&](const std::string& words_with_x) {
    Hypothesis h;
    for (char c : words_with_x) {
      h.labels.push_back(c == '|' ? ab.x_index() : ab.index_of(c));
    }
    return h;
  };
  const Query asl = make_query("ASL");

  SUBCASE("exact hit scores 1") {
    CHECK(recognizer_score({hyp("QQ|ASL|B")}, asl) == doctest::Approx(1.0));
  }
  SUBCASE("near miss ALL vs ASL gives 1 - 1/3") {
    CHECK(recognizer_score({hyp("ALL")}, asl) == doctest::Approx(1.0 - 1.0 / 3.0));
  }
  SUBCASE("empty decode scores 0") {
    CHECK(recognizer_score({}, asl) == doctest::Approx(0.0));
  }
  SUBCASE("hypothesis with no words contributes error 1") {
    CHECK(recognizer_score({hyp("|")}, asl) == doctest::Approx(0.0));
    CHECK(recognizer_score({hyp("|"), hyp("ASL")}, asl) == doctest::Approx(1.0));
  }
  SUBCASE("score is min over hypotheses and words, clamped into [0,1]") {
    // long garbage word would have LER > 1 against short ref; clamp holds
    CHECK(recognizer_score({hyp("QQQQQQQQQQ")}, make_query("Z")) == doctest::Approx(0.0));
    const double s = recognizer_score({hyp("QQQQ|AZL"), hyp("ASK")}, asl);
    CHECK(s == doctest::Approx(1.0 - 1.0 / 3.0));
  }
  SUBCASE("scores always lie in [0,1] and hit 1 only on exact matches") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Hypothesis> hyps;
      bool exact = false;
      for (int h = 0; h < 3; ++h) {
        Hypothesis hy;
        const int len = rng.uniform_int(1, 6);
        for (int i = 0; i < len; ++i) {
          const int r = rng.uniform_int(0, 5);
          hy.labels.push_back(r == 5 ? ab.x_index() : r);
        }
        hyps.push_back(hy);
      }
      const Query q = make_query(std::string(1, ab.char_at(rng.uniform_int(0, 4))));
      for (const auto& hy : hyps) {
        std::string cur;
        for (int l : hy.labels) {
          if (l == ab.x_index()) {
            if (cur == q.text) exact = true;
            cur.clear();
          } else {
            cur.push_back(ab.char_at(l));
          }
        }
        if (cur == q.text) exact = true;
      }
      const double s = recognizer_score(hyps, q);
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
      CHECK((s == 1.0) == exact);
    }
  }
}

TEST_CASE("attention to segments") {
  SUBCASE("single rectangular bump becomes one segment") {
    VecX a = VecX::Zero(20);
    a.segment(5, 6).setConstant(0.15);
    const auto segs = attention_to_segments(a, 0.5);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].segment == Segment(5, 11));
    CHECK(segs[0].p_det == doctest::Approx(0.15));
  }
  SUBCASE("uniform attention spans the whole clip") {
    const VecX a = VecX::Constant(12, 1.0 / 12.0);
    const auto segs = attention_to_segments(a, 0.5);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].segment == Segment(0, 12));
  }
  SUBCASE("two bumps separated by a sub-threshold gap give two segments") {
    VecX a = VecX::Constant(20, 0.01);
    a.segment(2, 4).setConstant(0.2);
    a.segment(12, 5).setConstant(0.18);
    const auto segs = attention_to_segments(a, 0.5);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].segment == Segment(2, 6));
    CHECK(segs[1].segment == Segment(12, 17));
    CHECK(segs[0].p_det == doctest::Approx(0.2));
    CHECK(segs[1].p_det == doctest::Approx(0.18));
  }
}

TEST_CASE("wholeclip score is clamped cosine similarity") {
  VecX a(2), b(2), c(2);
  a << 1, 0;
  b << 1, 0;
  c << -1, 0;
  CHECK(wholeclip_score(a, b) == doctest::Approx(1.0));
  CHECK(wholeclip_score(a, c) == doctest::Approx(0.0));  // clamped, not -1
  VecX d(2);
  d << 0, 1;
  CHECK(wholeclip_score(a, d) == doctest::Approx(0.0));
}

TEST_CASE("attention scoring head") {
  nn::Graph g;
  auto scal = [&](double v) { return g.constant(MatX::Constant(1, 1, v)); };

  SUBCASE("uniform frame scores give attention 1/T") {
    // identical frames => identical cos => softmax is uniform
    MatX frames(2, 5);
    for (int t = 0; t < 5; ++t) frames.col(t) << 0.6, 0.8;
    MatX text(2, 1);
    text << 1, 0;
    MatX w = MatX::Zero(1, 2);
    const auto fwd = attn_kws_forward(g, g.constant(frames), g.constant(text), scal(1.0),
                                      scal(0.0), g.constant(w), scal(0.0));
    for (int t = 0; t < 5; ++t) CHECK(fwd.attention.value()(t, 0) == doctest::Approx(0.2));
  }
  SUBCASE("attention weights are non-negative and sum to 1") {
    Rng rng(19);
    MatX frames(3, 7);
    for (int t = 0; t < 7; ++t) {
      for (int i = 0; i < 3; ++i) frames(i, t) = rng.normal();
    }
    MatX text(3, 1);
    text << 0.2, -0.5, 1.0;
    MatX w(1, 3);
    w << 1, 2, 3;
    const auto fwd = attn_kws_forward(g, g.constant(frames), g.constant(text), scal(1.3),
                                      scal(-0.2), g.constant(w), scal(0.1));
    double sum = 0.0;
    for (int t = 0; t < 7; ++t) {
      CHECK(fwd.attention.value()(t, 0) >= 0.0);
      sum += fwd.attention.value()(t, 0);
    }
    CHECK(sum == doctest::Approx(1.0));
  }
  SUBCASE("scripted two-frame case matches the hand computation") {
    // orthonormal frames, text aligned with frame 1:
    //   s = (1, 0), a = softmax(s), pooled = a, logit = 2a1 - a2 + 0.5
    MatX frames = MatX::Identity(2, 2);
    MatX text(2, 1);
    text << 1, 0;
    MatX w(1, 2);
    w << 2, -1;
    const auto fwd = attn_kws_forward(g, g.constant(frames), g.constant(text), scal(1.0),
                                      scal(0.0), g.constant(w), scal(0.5));
    const double a1 = std::exp(1.0) / (std::exp(1.0) + 1.0);
    const double a2 = 1.0 / (std::exp(1.0) + 1.0);
    CHECK(fwd.attention.value()(0, 0) == doctest::Approx(a1));
    CHECK(fwd.attention.value()(1, 0) == doctest::Approx(a2));
    const double logit = 2.0 * a1 - a2 + 0.5;
    CHECK(fwd.logit.scalar() == doctest::Approx(logit));
    const double prob = 1.0 / (1.0 + std::exp(-logit));
    CHECK(1.0 / (1.0 + std::exp(-fwd.logit.scalar())) == doctest::Approx(prob));
  }
}
