#include "fss/io.hpp"
#include "fss/nn/checkpoint.hpp"
#include "fss/nn/gradcheck.hpp"
#include "fss/nn/graph.hpp"
#include "fss/nn/layers.hpp"
#include "fss/nn/optim.hpp"
#include "fss/rng.hpp"

#include <doctest.h>

#include <filesystem>

using namespace fss;
using namespace fss::nn;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fss_test_" + name);
}

MatX randm(Rng& rng, int r, int c) {
  MatX m(r, c);
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < r; ++i) m(i, j) = rng.normal();
  }
  return m;
}

/// Index-tracing oracle: walk the layer list explicitly, tracking the set
/// of real input frames feeding each position (zero padding contributes
/// nothing, so edge windows are truncated).
struct TracedChain {
  std::vector<std::pair<int, int>> ranges;  // per current position

  explicit TracedChain(int T) {
    for (int i = 0; i < T; ++i) ranges.push_back({i, i});
  }
  void conv_same(int k) {
    const int pl = (k - 1) / 2;
    const int pr = k - 1 - pl;
    const int n = static_cast<int>(ranges.size());
    std::vector<std::pair<int, int>> next(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      int lo = 1 << 30, hi = -(1 << 30);
      for (int u = std::max(0, i - pl); u <= std::min(n - 1, i + pr); ++u) {
        lo = std::min(lo, ranges[static_cast<size_t>(u)].first);
        hi = std::max(hi, ranges[static_cast<size_t>(u)].second);
      }
      next[static_cast<size_t>(i)] = {lo, hi};
    }
    ranges = next;
  }
  void pool(int k, int stride) {
    std::vector<std::pair<int, int>> next;
    for (size_t j = 0; j + k <= ranges.size(); j += stride) {
      int lo = 1 << 30, hi = -(1 << 30);
      for (int u = 0; u < k; ++u) {
        lo = std::min(lo, ranges[j + u].first);
        hi = std::max(hi, ranges[j + u].second);
      }
      next.push_back({lo, hi});
    }
    ranges = next;
  }
};

}  // namespace

TEST_CASE("every differentiable op passes randomized finite-difference checks") {
  const auto results = gradcheck_suite(1, 20);
  CHECK(results.size() >= 20);
  for (const auto& r : results) {
    INFO(r.op, " max_err=", r.max_err);
    CHECK(r.pass);
  }
}

TEST_CASE("simple analytic gradient: d/dx(x*x) at 3 is 6") {
  Parameter x("x", 1, 1);
  x.value(0, 0) = 3.0;
  Graph g;
  Var loss = cmul(g.param(x), g.param(x));
  g.backward(loss);
  CHECK(x.grad(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("cosine distance values and tight finite-difference bound") {
  Graph g;
  auto vec = [&](double a, double b) {
    MatX m(2, 1);
    m << a, b;
    return g.constant(m);
  };
  CHECK(cosine_distance(vec(1, 0), vec(1, 0)).scalar() == doctest::Approx(0.0));
  CHECK(cosine_distance(vec(1, 0), vec(-1, 0)).scalar() == doctest::Approx(2.0));
  CHECK(cosine_distance(vec(1, 0), vec(0, 1)).scalar() == doctest::Approx(1.0));
  VecX z = VecX::Zero(2), o = VecX::Ones(2);
  CHECK_THROWS_AS(cosine_distance(z, o), std::invalid_argument);

  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    Parameter a("a", 8, 1), b("b", 8, 1);
    a.value = randm(rng, 8, 1);
    b.value = randm(rng, 8, 1);
    const double err = max_grad_error({&a, &b}, [&](Graph& gg) {
      return cosine_distance(gg.param(a), gg.param(b));
    });
    CHECK(err < 1e-5);
  }
}

TEST_CASE("shape mismatches name the op and both shapes") {
  Graph g;
  Var a = g.constant(MatX::Zero(3, 4));
  Var b = g.constant(MatX::Zero(5, 2));
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("(3x4)"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("(5x2)"), std::invalid_argument);
}

TEST_CASE("non-finite values trip a checked error") {
  Graph g;
  MatX bad(1, 1);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(g.constant(bad), doctest::Contains("non-finite"), std::runtime_error);
  MatX big(1, 1);
  big(0, 0) = 1e308;
  Var v = g.constant(big);
  CHECK_THROWS_AS(cmul(v, v), std::runtime_error);  // overflow to inf
}

TEST_CASE("normalize_cols rejects zero columns") {
  Graph g;
  CHECK_THROWS_AS(normalize_cols(g.constant(MatX::Zero(3, 1))), std::invalid_argument);
}

TEST_CASE("conv/pool stack length formula and frame-index mapping") {
  ConvPoolStack::Spec spec;  // reference chain: conv k8, pool 8/4, conv k3, conv k3
  spec.in_channels = 4;
  ConvPoolStack stack("s", spec);

  SUBCASE("reference chain gives 74 positions for 300 frames") {
    CHECK(stack.output_length(300) == 74);
    CHECK(stack.stride() == 4);
  }
  SUBCASE("mapping matches the index-tracing oracle") {
    for (int T : {8, 37, 100, 300}) {
      TracedChain oracle(T);
      oracle.conv_same(spec.conv1_kernel);
      oracle.pool(spec.pool_kernel, spec.pool_stride);
      oracle.conv_same(spec.conv2_kernel);
      oracle.conv_same(spec.conv3_kernel);
      REQUIRE(static_cast<int>(oracle.ranges.size()) == stack.output_length(T));
      int interior_checked = 0;
      for (int j = 0; j < stack.output_length(T); ++j) {
        const auto rf = stack.receptive_field(j);
        if (rf.first >= 0 && rf.second < T) {
          // away from the padded edges the closed form must equal the trace
          const auto [lo, hi] = oracle.ranges[static_cast<size_t>(j)];
          CHECK(rf.first == lo);
          CHECK(rf.second == hi);
          CHECK(stack.frame_center(j) == doctest::Approx(0.5 * (lo + hi)));
          ++interior_checked;
        }
        if (j > 0) {
          // anchors advance by exactly the stride everywhere
          CHECK(stack.frame_center(j) - stack.frame_center(j - 1) ==
                doctest::Approx(stack.stride()));
        }
      }
      if (T >= 100) CHECK(interior_checked > 10);
    }
  }
  SUBCASE("too-short input is an error") {
    CHECK_THROWS_WITH_AS(stack.output_length(7), doctest::Contains("shorter"),
                         std::invalid_argument);
  }
  SUBCASE("identity chain preserves length") {
    ConvPoolStack::Spec id;
    id.in_channels = 3;
    id.conv1_channels = 3;
    id.conv1_kernel = 1;
    id.pool_kernel = 1;
    id.pool_stride = 1;
    id.conv2_channels = 3;
    id.conv2_kernel = 1;
    id.conv3_channels = 3;
    id.conv3_kernel = 1;
    ConvPoolStack ident("id", id);
    CHECK(ident.output_length(17) == 17);
    CHECK(ident.frame_center(5) == doctest::Approx(5.0));
  }
}

TEST_CASE("max pooling of an all-equal input is all-equal") {
  Graph g;
  Var x = g.constant(MatX::Constant(3, 20, 4.25));
  Var y = max_pool_time(x, 8, 4);
  CHECK(y.cols() == 4);
  CHECK((y.value().array() == 4.25).all());
}

TEST_CASE("recurrent encoder shape and determinism") {
  Rng rng(21);
  BiRecurrentEncoder enc("enc", 5, 6, 2);
  enc.init(rng);
  const MatX x = randm(rng, 5, 9);
  Graph g1;
  const MatX out1 = enc.encode_sequence(g1, g1.constant(x)).value();
  Graph g2;
  const MatX out2 = enc.encode_sequence(g2, g2.constant(x)).value();
  CHECK(out1.rows() == 12);  // 2 * hidden
  CHECK(out1.cols() == 9);   // output length equals input length
  CHECK((out1.array() == out2.array()).all());
  Graph g3;
  const MatX fin = enc.encode_final(g3, g3.constant(x)).value();
  CHECK(fin.rows() == 12);
  CHECK(fin.cols() == 1);
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  Parameter p("p", 2, 2);
  p.value << 1, 2, 3, 4;
  const MatX before = p.value;
  Optimizer opt(Optimizer::Kind::Adam, {&p}, 0.1);
  p.zero_grad();
  opt.step();
  opt.step();
  CHECK((p.value.array() == before.array()).all());
}

TEST_CASE("sgd step is value -= lr * grad") {
  Parameter p("p", 1, 2);
  p.value << 1.0, -1.0;
  p.grad << 0.5, 2.0;
  Optimizer opt(Optimizer::Kind::Sgd, {&p}, 0.1);
  opt.step();
  CHECK(p.value(0, 0) == doctest::Approx(0.95));
  CHECK(p.value(0, 1) == doctest::Approx(-1.2));
}

TEST_CASE("adam reduces a quadratic") {
  Parameter p("p", 4, 1);
  p.value << 5, -3, 2, 9;
  Optimizer opt(Optimizer::Kind::Adam, {&p}, 0.05);
  for (int step = 0; step < 400; ++step) {
    opt.zero_grad();
    Graph g;
    Var loss = dot(g.param(p), g.param(p));
    g.backward(loss);
    opt.step();
  }
  // constant-rate updates oscillate near the optimum; the pull from the
  // start at norm ~10.7 is what matters
  CHECK(p.value.norm() < 0.3);
}

TEST_CASE("plateau schedule halves after patience stale epochs") {
  Parameter p("p", 1, 1);
  Optimizer opt(Optimizer::Kind::Sgd, {&p}, 1.0);
  PlateauSchedule sched(3);
  CHECK_FALSE(sched.observe(0.5, opt));  // best
  CHECK_FALSE(sched.observe(0.5, opt));  // stale 1
  CHECK_FALSE(sched.observe(0.4, opt));  // stale 2
  CHECK(sched.observe(0.45, opt));       // stale 3 -> halve
  CHECK(opt.learning_rate() == doctest::Approx(0.5));
  CHECK_FALSE(sched.observe(0.6, opt));  // new best resets
  CHECK(opt.learning_rate() == doctest::Approx(0.5));
}

TEST_CASE("checkpoint round trip is bit exact and validates shapes") {
  Rng rng(31);
  Parameter a("layer.W", 3, 4), b("layer.b", 3, 1);
  a.value = randm(rng, 3, 4);
  b.value = randm(rng, 3, 1);
  auto ckpt = Checkpoint::from_params({&a, &b});
  ckpt.meta["system"] = "unit";
  const auto path = temp_file("ckpt.fssckpt");
  ckpt.save(path);

  const auto loaded = Checkpoint::load(path);
  CHECK(loaded.meta.at("system") == "unit");
  Parameter a2("layer.W", 3, 4), b2("layer.b", 3, 1);
  loaded.restore({&a2, &b2});
  CHECK((a2.value.array() == a.value.array()).all());
  CHECK((b2.value.array() == b.value.array()).all());

  Parameter wrong("layer.W", 2, 4);
  CHECK_THROWS_WITH_AS(loaded.restore({&wrong}), doctest::Contains("layer.W"),
                       std::runtime_error);
  Parameter missing("other.W", 3, 4);
  CHECK_THROWS_WITH_AS(loaded.restore({&missing}), doctest::Contains("missing"),
                       std::runtime_error);

  // truncated file reports its line
  auto text = io::read_file(path);
  io::write_file(path, text.substr(0, text.size() - 5));
  CHECK_THROWS_AS(Checkpoint::load(path), io::ParseError);
}

TEST_CASE("graph reports parameter gradients through reused parameters") {
  // the same parameter used twice accumulates both paths
  Parameter w("w", 1, 1);
  w.value(0, 0) = 2.0;
  Graph g;
  Var a = g.param(w);
  Var b = g.param(w);
  Var loss = cmul(a, b);  // w^2 -> d/dw = 2w = 4
  g.backward(loss);
  CHECK(w.grad(0, 0) == doctest::Approx(4.0));
}
