#include "fss/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace fss::nn {

namespace {

void xavier_init(MatX& m, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (int j = 0; j < m.cols(); ++j) {
    for (int i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-limit, limit);
  }
}

}  // namespace

Linear::Linear(std::string name, int in_dim, int out_dim)
    : W_(name + ".W", out_dim, in_dim), b_(name + ".b", out_dim, 1) {}

void Linear::init(Rng& rng) { xavier_init(W_.value, in_dim(), out_dim(), rng); }

Var Linear::apply(Graph& g, Var x) const {
  return add_colwise(matmul(g.param(W_), x), g.param(b_));
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&W_);
  out.push_back(&b_);
}

GruCell::GruCell(const std::string& name, int in_dim_, int hidden_)
    : in_dim(in_dim_),
      hidden(hidden_),
      W(name + ".W", 3 * hidden_, in_dim_),
      U_zr(name + ".Uzr", 2 * hidden_, hidden_),
      U_c(name + ".Uc", hidden_, hidden_),
      b(name + ".b", 3 * hidden_, 1) {}

void GruCell::init(Rng& rng) {
  xavier_init(W.value, in_dim, hidden, rng);
  const double r = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (int j = 0; j < hidden; ++j) {
    for (int i = 0; i < 2 * hidden; ++i) U_zr.value(i, j) = rng.uniform(-r, r);
    for (int i = 0; i < hidden; ++i) U_c.value(i, j) = rng.uniform(-r, r);
  }
}

void GruCell::collect(std::vector<Parameter*>& out) {
  out.push_back(&W);
  out.push_back(&U_zr);
  out.push_back(&U_c);
  out.push_back(&b);
}

Var GruCell::run(Graph& g, Var x, bool reversed) const {
  const int T = x.cols();
  const int h = hidden;
  // all input contributions at once
  Var pre = add_colwise(matmul(g.param(W), x), g.param(b));
  Var uzr = g.param(U_zr);
  Var uc = g.param(U_c);
  Var state = g.constant(MatX::Zero(h, 1));
  std::vector<Var> outputs(T);
  for (int step = 0; step < T; ++step) {
    const int t = reversed ? T - 1 - step : step;
    Var pre_t = block(pre, 0, t, 3 * h, 1);
    Var gates = sigmoid(add(block(pre_t, 0, 0, 2 * h, 1), matmul(uzr, state)));
    Var z = block(gates, 0, 0, h, 1);
    Var r = block(gates, h, 0, h, 1);
    Var cand = nn::tanh(add(block(pre_t, 2 * h, 0, h, 1), matmul(uc, cmul(r, state))));
    state = add(state, cmul(z, sub(cand, state)));
    outputs[t] = state;
  }
  return hcat(outputs);
}

BiRecurrentEncoder::BiRecurrentEncoder(std::string name, int input_dim, int hidden, int n_layers)
    : input_dim_(input_dim), hidden_(hidden) {
  if (n_layers < 1) throw std::invalid_argument("BiRecurrentEncoder: n_layers must be >= 1");
  for (int l = 0; l < n_layers; ++l) {
    const int in = l == 0 ? input_dim : 2 * hidden;
    fwd_.emplace_back(name + ".l" + std::to_string(l) + ".fwd", in, hidden);
    bwd_.emplace_back(name + ".l" + std::to_string(l) + ".bwd", in, hidden);
  }
}

void BiRecurrentEncoder::init(Rng& rng) {
  for (auto& c : fwd_) c.init(rng);
  for (auto& c : bwd_) c.init(rng);
}

void BiRecurrentEncoder::collect(std::vector<Parameter*>& out) {
  for (auto& c : fwd_) c.collect(out);
  for (auto& c : bwd_) c.collect(out);
}

Var BiRecurrentEncoder::encode_sequence(Graph& g, Var x) const {
  Var cur = x;
  for (size_t l = 0; l < fwd_.size(); ++l) {
    Var hf = fwd_[l].run(g, cur, false);
    Var hb = bwd_[l].run(g, cur, true);
    cur = vcat({hf, hb});
  }
  return cur;
}

Var BiRecurrentEncoder::encode_final(Graph& g, Var x) const {
  Var seq = encode_sequence(g, x);
  const int T = seq.cols();
  Var fwd_last = block(seq, 0, T - 1, hidden_, 1);
  Var bwd_first = block(seq, hidden_, 0, hidden_, 1);
  return vcat({fwd_last, bwd_first});
}

ConvPoolStack::ConvPoolStack(std::string name, const Spec& spec)
    : spec_(spec),
      conv1_w_(name + ".conv1", spec.in_channels * spec.conv1_kernel, spec.conv1_channels),
      conv2_w_(name + ".conv2", spec.conv1_channels * spec.conv2_kernel, spec.conv2_channels),
      conv3_w_(name + ".conv3", spec.conv2_channels * spec.conv3_kernel, spec.conv3_channels) {
  // Compose receptive-field maps output->input, walking layers from last to
  // first.  Same-padded convs pad (k-1)/2 on the left.
  auto compose_conv = [](int& lo, int& hi, int k) {
    const int pl = (k - 1) / 2;
    lo -= pl;
    hi += k - 1 - pl;
  };
  int lo = 0, hi = 0;
  compose_conv(lo, hi, spec_.conv3_kernel);
  compose_conv(lo, hi, spec_.conv2_kernel);
  // pool: output j covers inputs [stride*j, stride*j + kernel - 1]
  lo = spec_.pool_stride * lo;
  hi = spec_.pool_stride * hi + spec_.pool_kernel - 1;
  compose_conv(lo, hi, spec_.conv1_kernel);
  rf_lo_ = lo;
  rf_hi_ = hi;
}

void ConvPoolStack::init(Rng& rng) {
  conv1_w_.init(rng);
  conv2_w_.init(rng);
  conv3_w_.init(rng);
}

void ConvPoolStack::collect(std::vector<Parameter*>& out) {
  conv1_w_.collect(out);
  conv2_w_.collect(out);
  conv3_w_.collect(out);
}

int ConvPoolStack::output_length(int T) const {
  if (T < spec_.pool_kernel) {
    throw std::invalid_argument("ConvPoolStack: input length " + std::to_string(T) +
                                " shorter than minimal feature-map input " +
                                std::to_string(spec_.pool_kernel));
  }
  return (T - spec_.pool_kernel) / spec_.pool_stride + 1;
}

Var ConvPoolStack::apply(Graph& g, Var x) const {
  output_length(x.cols());  // validates length
  Var h = relu(conv1d_same(x, g.param(conv1_w_.weight()), g.param(conv1_w_.bias()),
                           spec_.conv1_kernel));
  h = max_pool_time(h, spec_.pool_kernel, spec_.pool_stride);
  h = relu(conv1d_same(h, g.param(conv2_w_.weight()), g.param(conv2_w_.bias()),
                       spec_.conv2_kernel));
  h = relu(conv1d_same(h, g.param(conv3_w_.weight()), g.param(conv3_w_.bias()),
                       spec_.conv3_kernel));
  return h;
}

double ConvPoolStack::frame_center(int j) const {
  return spec_.pool_stride * static_cast<double>(j) + 0.5 * (rf_lo_ + rf_hi_);
}

std::pair<int, int> ConvPoolStack::receptive_field(int j) const {
  return {spec_.pool_stride * j + rf_lo_, spec_.pool_stride * j + rf_hi_};
}

}  // namespace fss::nn
