#include "fss/nn/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace fss::nn {

namespace {

[[noreturn]] void shape_error(const char* op, const MatX& a, const MatX& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) +
                              "x" + std::to_string(a.cols()) + ") vs (" + std::to_string(b.rows()) +
                              "x" + std::to_string(b.cols()) + ")");
}

void require_same_graph(Var a, Var b, const char* op) {
  if (a.g != b.g) {
    throw std::invalid_argument(std::string(op) + ": operands belong to different graphs");
  }
}

}  // namespace

const MatX& Var::value() const { return g->value(id); }

double Var::scalar() const {
  const MatX& v = value();
  if (v.size() != 1) {
    throw std::logic_error("Var::scalar on a " + std::to_string(v.rows()) + "x" +
                           std::to_string(v.cols()) + " value");
  }
  return v(0, 0);
}

Var Graph::constant(MatX v) {
  return make_node(std::move(v), {}, nullptr, "constant");
}

Var Graph::param(Parameter& p) {
  if (inference_) return constant(p.value);
  Node node;
  node.value = p.value;
  node.bound = &p;
  node.needs_grad = true;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::make_node(MatX value, std::vector<int> parents, BackwardFn back, const char* op_name) {
  if (!value.allFinite()) {
    throw std::runtime_error(std::string("non-finite values produced by op '") + op_name + "'");
  }
  Node node;
  node.value = std::move(value);
  node.parents = std::move(parents);
  for (int p : node.parents) {
    if (nodes_[p].needs_grad) {
      node.needs_grad = true;
      break;
    }
  }
  if (node.needs_grad) node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

MatX& Graph::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = MatX::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.g != this) throw std::invalid_argument("backward: var from another graph");
  if (nodes_[loss.id].value.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar");
  }
  grad(loss.id)(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.back) n.back(*this, i);
    if (n.bound) {
      if (!n.grad.allFinite()) {
        throw std::runtime_error("non-finite gradient for parameter '" + n.bound->name + "'");
      }
      n.bound->grad += n.grad;
    }
  }
}

void Graph::clear() { nodes_.clear(); }

// ---- ops ------------------------------------------------------------------

Var add(Var a, Var b) {
  require_same_graph(a, b, "add");
  if (a.value().rows() != b.value().rows() || a.value().cols() != b.value().cols()) {
    shape_error("add", a.value(), b.value());
  }
  const int pa = a.id, pb = b.id;
  return a.g->make_node(
      a.value() + b.value(), {pa, pb},
      [pa, pb](Graph& g, int self) {
        g.accumulate(pa, g.grad(self));
        g.accumulate(pb, g.grad(self));
      },
      "add");
}

Var sub(Var a, Var b) {
  require_same_graph(a, b, "sub");
  if (a.value().rows() != b.value().rows() || a.value().cols() != b.value().cols()) {
    shape_error("sub", a.value(), b.value());
  }
  const int pa = a.id, pb = b.id;
  return a.g->make_node(
      a.value() - b.value(), {pa, pb},
      [pa, pb](Graph& g, int self) {
        g.accumulate(pa, g.grad(self));
        g.accumulate(pb, -g.grad(self));
      },
      "sub");
}

Var cmul(Var a, Var b) {
  require_same_graph(a, b, "cmul");
  if (a.value().rows() != b.value().rows() || a.value().cols() != b.value().cols()) {
    shape_error("cmul", a.value(), b.value());
  }
  const int pa = a.id, pb = b.id;
  return a.g->make_node(
      a.value().cwiseProduct(b.value()), {pa, pb},
      [pa, pb](Graph& g, int self) {
        g.accumulate(pa, g.grad(self).cwiseProduct(g.value(pb)));
        g.accumulate(pb, g.grad(self).cwiseProduct(g.value(pa)));
      },
      "cmul");
}

Var affine(Var a, double alpha, double beta) {
  const int pa = a.id;
  return a.g->make_node(
      (alpha * a.value().array() + beta).matrix(), {pa},
      [pa, alpha](Graph& g, int self) { g.accumulate(pa, alpha * g.grad(self)); }, "affine");
}

Var add_colwise(Var a, Var bias) {
  require_same_graph(a, bias, "add_colwise");
  if (bias.value().cols() != 1 || bias.value().rows() != a.value().rows()) {
    shape_error("add_colwise", a.value(), bias.value());
  }
  const int pa = a.id, pb = bias.id;
  return a.g->make_node(
      a.value().colwise() + VecX(bias.value().col(0)), {pa, pb},
      [pa, pb](Graph& g, int self) {
        g.accumulate(pa, g.grad(self));
        g.accumulate(pb, g.grad(self).rowwise().sum());
      },
      "add_colwise");
}

Var scalar_mul(Var a, Var s) {
  require_same_graph(a, s, "scalar_mul");
  if (s.value().size() != 1) shape_error("scalar_mul", a.value(), s.value());
  const int pa = a.id, ps = s.id;
  return a.g->make_node(
      s.value()(0, 0) * a.value(), {pa, ps},
      [pa, ps](Graph& g, int self) {
        g.accumulate(pa, g.value(ps)(0, 0) * g.grad(self));
        if (g.needs_grad(ps)) {
          g.grad(ps)(0, 0) += g.grad(self).cwiseProduct(g.value(pa)).sum();
        }
      },
      "scalar_mul");
}

Var scalar_add(Var a, Var s) {
  require_same_graph(a, s, "scalar_add");
  if (s.value().size() != 1) shape_error("scalar_add", a.value(), s.value());
  const int pa = a.id, ps = s.id;
  return a.g->make_node(
      (a.value().array() + s.value()(0, 0)).matrix(), {pa, ps},
      [pa, ps](Graph& g, int self) {
        g.accumulate(pa, g.grad(self));
        if (g.needs_grad(ps)) g.grad(ps)(0, 0) += g.grad(self).sum();
      },
      "scalar_add");
}

Var matmul(Var a, Var b) {
  require_same_graph(a, b, "matmul");
  if (a.value().cols() != b.value().rows()) shape_error("matmul", a.value(), b.value());
  const int pa = a.id, pb = b.id;
  return a.g->make_node(
      a.value() * b.value(), {pa, pb},
      [pa, pb](Graph& g, int self) {
        g.accumulate(pa, g.grad(self) * g.value(pb).transpose());
        g.accumulate(pb, g.value(pa).transpose() * g.grad(self));
      },
      "matmul");
}

Var transpose(Var a) {
  const int pa = a.id;
  return a.g->make_node(
      a.value().transpose(), {pa},
      [pa](Graph& g, int self) { g.accumulate(pa, g.grad(self).transpose()); }, "transpose");
}

Var sigmoid(Var a) {
  const int pa = a.id;
  MatX y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return a.g->make_node(
      std::move(y), {pa},
      [pa](Graph& g, int self) {
        const auto& y = g.value(self).array();
        g.accumulate(pa, (g.grad(self).array() * y * (1.0 - y)).matrix());
      },
      "sigmoid");
}

Var tanh(Var a) {
  const int pa = a.id;
  return a.g->make_node(
      a.value().array().tanh().matrix(), {pa},
      [pa](Graph& g, int self) {
        const auto& y = g.value(self).array();
        g.accumulate(pa, (g.grad(self).array() * (1.0 - y.square())).matrix());
      },
      "tanh");
}

Var relu(Var a) {
  const int pa = a.id;
  return a.g->make_node(
      a.value().cwiseMax(0.0), {pa},
      [pa](Graph& g, int self) {
        const auto mask = (g.value(pa).array() > 0.0).cast<double>();
        g.accumulate(pa, (g.grad(self).array() * mask).matrix());
      },
      "relu");
}

Var square(Var a) {
  const int pa = a.id;
  return a.g->make_node(
      a.value().array().square().matrix(), {pa},
      [pa](Graph& g, int self) {
        g.accumulate(pa, (2.0 * g.grad(self).array() * g.value(pa).array()).matrix());
      },
      "square");
}

Var block(Var a, int i, int j, int p, int q) {
  if (i < 0 || j < 0 || p < 1 || q < 1 || i + p > a.rows() || j + q > a.cols()) {
    throw std::invalid_argument("block: region (" + std::to_string(i) + "," + std::to_string(j) +
                                "," + std::to_string(p) + "," + std::to_string(q) +
                                ") outside (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + ")");
  }
  const int pa = a.id;
  return a.g->make_node(
      a.value().block(i, j, p, q), {pa},
      [pa, i, j, p, q](Graph& g, int self) {
        if (g.needs_grad(pa)) g.grad(pa).block(i, j, p, q) += g.grad(self);
      },
      "block");
}

Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("hcat: no parts");
  Graph* g = parts[0].g;
  const int rows = parts[0].rows();
  int cols = 0;
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (Var v : parts) {
    require_same_graph(parts[0], v, "hcat");
    if (v.rows() != rows) shape_error("hcat", parts[0].value(), v.value());
    cols += v.cols();
    ids.push_back(v.id);
  }
  MatX out(rows, cols);
  int c = 0;
  for (Var v : parts) {
    out.middleCols(c, v.cols()) = v.value();
    c += v.cols();
  }
  return g->make_node(
      std::move(out), ids,
      [ids](Graph& g, int self) {
        int c = 0;
        for (int pid : ids) {
          const int w = static_cast<int>(g.value(pid).cols());
          if (g.needs_grad(pid)) g.grad(pid) += g.grad(self).middleCols(c, w);
          c += w;
        }
      },
      "hcat");
}

Var vcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("vcat: no parts");
  Graph* g = parts[0].g;
  const int cols = parts[0].cols();
  int rows = 0;
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (Var v : parts) {
    require_same_graph(parts[0], v, "vcat");
    if (v.cols() != cols) shape_error("vcat", parts[0].value(), v.value());
    rows += v.rows();
    ids.push_back(v.id);
  }
  MatX out(rows, cols);
  int r = 0;
  for (Var v : parts) {
    out.middleRows(r, v.rows()) = v.value();
    r += v.rows();
  }
  return g->make_node(
      std::move(out), ids,
      [ids](Graph& g, int self) {
        int r = 0;
        for (int pid : ids) {
          const int h = static_cast<int>(g.value(pid).rows());
          if (g.needs_grad(pid)) g.grad(pid) += g.grad(self).middleRows(r, h);
          r += h;
        }
      },
      "vcat");
}

Var select_cols(Var a, const std::vector<int>& cols) {
  for (int c : cols) {
    if (c < 0 || c >= a.cols()) {
      throw std::invalid_argument("select_cols: index " + std::to_string(c) + " outside " +
                                  std::to_string(a.cols()) + " columns");
    }
  }
  MatX out(a.rows(), static_cast<int>(cols.size()));
  for (size_t k = 0; k < cols.size(); ++k) out.col(static_cast<int>(k)) = a.value().col(cols[k]);
  const int pa = a.id;
  return a.g->make_node(
      std::move(out), {pa},
      [pa, cols](Graph& g, int self) {
        if (!g.needs_grad(pa)) return;
        MatX& pg = g.grad(pa);
        for (size_t k = 0; k < cols.size(); ++k) {
          pg.col(cols[k]) += g.grad(self).col(static_cast<int>(k));
        }
      },
      "select_cols");
}

Var gather(Var a, const std::vector<std::pair<int, int>>& coords) {
  MatX out(static_cast<int>(coords.size()), 1);
  for (size_t k = 0; k < coords.size(); ++k) {
    const auto [r, c] = coords[k];
    if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols()) {
      throw std::invalid_argument("gather: coordinate (" + std::to_string(r) + "," +
                                  std::to_string(c) + ") outside (" + std::to_string(a.rows()) +
                                  "x" + std::to_string(a.cols()) + ")");
    }
    out(static_cast<int>(k), 0) = a.value()(r, c);
  }
  const int pa = a.id;
  return a.g->make_node(
      std::move(out), {pa},
      [pa, coords](Graph& g, int self) {
        if (!g.needs_grad(pa)) return;
        MatX& pg = g.grad(pa);
        for (size_t k = 0; k < coords.size(); ++k) {
          pg(coords[k].first, coords[k].second) += g.grad(self)(static_cast<int>(k), 0);
        }
      },
      "gather");
}

Var sum(Var a) {
  const int pa = a.id;
  MatX out(1, 1);
  out(0, 0) = a.value().sum();
  return a.g->make_node(
      std::move(out), {pa},
      [pa](Graph& g, int self) {
        g.accumulate(pa, MatX::Constant(g.value(pa).rows(), g.value(pa).cols(),
                                        g.grad(self)(0, 0)));
      },
      "sum");
}

Var mean(Var a) {
  const int pa = a.id;
  const double n = static_cast<double>(a.value().size());
  MatX out(1, 1);
  out(0, 0) = a.value().mean();
  return a.g->make_node(
      std::move(out), {pa},
      [pa, n](Graph& g, int self) {
        g.accumulate(pa, MatX::Constant(g.value(pa).rows(), g.value(pa).cols(),
                                        g.grad(self)(0, 0) / n));
      },
      "mean");
}

Var dot(Var a, Var b) {
  require_same_graph(a, b, "dot");
  if (a.value().rows() != b.value().rows() || a.value().cols() != b.value().cols()) {
    shape_error("dot", a.value(), b.value());
  }
  const int pa = a.id, pb = b.id;
  MatX out(1, 1);
  out(0, 0) = a.value().cwiseProduct(b.value()).sum();
  return a.g->make_node(
      std::move(out), {pa, pb},
      [pa, pb](Graph& g, int self) {
        const double s = g.grad(self)(0, 0);
        g.accumulate(pa, s * g.value(pb));
        g.accumulate(pb, s * g.value(pa));
      },
      "dot");
}

Var normalize_cols(Var a) {
  constexpr double kEps = 1e-12;
  MatX out = a.value();
  for (int c = 0; c < out.cols(); ++c) {
    const double n = out.col(c).norm();
    if (n < kEps) {
      throw std::invalid_argument("normalize_cols: column " + std::to_string(c) +
                                  " has (near-)zero norm");
    }
    out.col(c) /= n;
  }
  const int pa = a.id;
  return a.g->make_node(
      std::move(out), {pa},
      [pa](Graph& g, int self) {
        if (!g.needs_grad(pa)) return;
        const MatX& y = g.value(self);
        const MatX& go = g.grad(self);
        MatX& pg = g.grad(pa);
        for (int c = 0; c < y.cols(); ++c) {
          const double n = g.value(pa).col(c).norm();
          const double proj = y.col(c).dot(go.col(c));
          pg.col(c) += (go.col(c) - proj * y.col(c)) / n;
        }
      },
      "normalize_cols");
}

Var softmax_cols(Var a) {
  MatX out = a.value();
  for (int c = 0; c < out.cols(); ++c) {
    const double m = out.col(c).maxCoeff();
    out.col(c) = (out.col(c).array() - m).exp();
    out.col(c) /= out.col(c).sum();
  }
  const int pa = a.id;
  return a.g->make_node(
      std::move(out), {pa},
      [pa](Graph& g, int self) {
        if (!g.needs_grad(pa)) return;
        const MatX& y = g.value(self);
        const MatX& go = g.grad(self);
        MatX& pg = g.grad(pa);
        for (int c = 0; c < y.cols(); ++c) {
          const double s = y.col(c).dot(go.col(c));
          pg.col(c) += y.col(c).cwiseProduct(go.col(c).array().matrix() -
                                             MatX::Constant(y.rows(), 1, s));
        }
      },
      "softmax_cols");
}

Var max_pool_time(Var a, int k, int stride) {
  const int T = a.cols();
  if (k < 1 || stride < 1) throw std::invalid_argument("max_pool_time: bad kernel/stride");
  if (T < k) {
    throw std::invalid_argument("max_pool_time: input length " + std::to_string(T) +
                                " shorter than kernel " + std::to_string(k));
  }
  const int To = (T - k) / stride + 1;
  const int R = a.rows();
  MatX out(R, To);
  std::vector<int> argmax(static_cast<size_t>(R) * To);
  for (int j = 0; j < To; ++j) {
    for (int r = 0; r < R; ++r) {
      int best = j * stride;
      double bv = a.value()(r, best);
      for (int u = 1; u < k; ++u) {
        const double v = a.value()(r, j * stride + u);
        if (v > bv) {
          bv = v;
          best = j * stride + u;
        }
      }
      out(r, j) = bv;
      argmax[static_cast<size_t>(j) * R + r] = best;
    }
  }
  const int pa = a.id;
  return a.g->make_node(
      std::move(out), {pa},
      [pa, argmax, To, R](Graph& g, int self) {
        if (!g.needs_grad(pa)) return;
        MatX& pg = g.grad(pa);
        const MatX& go = g.grad(self);
        for (int j = 0; j < To; ++j) {
          for (int r = 0; r < R; ++r) {
            pg(r, argmax[static_cast<size_t>(j) * R + r]) += go(r, j);
          }
        }
      },
      "max_pool_time");
}

Var conv1d_same(Var x, Var w, Var bias, int k) {
  require_same_graph(x, w, "conv1d_same");
  require_same_graph(x, bias, "conv1d_same");
  const int cin = x.rows();
  const int T = x.cols();
  if (w.cols() != cin * k) shape_error("conv1d_same", w.value(), x.value());
  if (bias.rows() != w.rows() || bias.cols() != 1) shape_error("conv1d_same", w.value(), bias.value());
  const int pad_left = (k - 1) / 2;
  // im2col: column t holds the stacked window x[:, t-pad_left .. t-pad_left+k-1]
  MatX cols = MatX::Zero(cin * k, T);
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u < k; ++u) {
      const int src = t - pad_left + u;
      if (src >= 0 && src < T) cols.block(u * cin, t, cin, 1) = x.value().col(src);
    }
  }
  MatX out = w.value() * cols;
  out.colwise() += VecX(bias.value().col(0));
  const int px = x.id, pw = w.id, pb = bias.id;
  return x.g->make_node(
      std::move(out), {px, pw, pb},
      [px, pw, pb, cols, k, pad_left, cin, T](Graph& g, int self) {
        const MatX& go = g.grad(self);
        g.accumulate(pw, go * cols.transpose());
        g.accumulate(pb, go.rowwise().sum());
        if (g.needs_grad(px)) {
          const MatX gc = g.value(pw).transpose() * go;  // (cin*k) x T
          MatX& pg = g.grad(px);
          for (int t = 0; t < T; ++t) {
            for (int u = 0; u < k; ++u) {
              const int src = t - pad_left + u;
              if (src >= 0 && src < T) pg.col(src) += gc.block(u * cin, t, cin, 1);
            }
          }
        }
      },
      "conv1d_same");
}

Var bce_with_logits_mean(Var logits, const MatX& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    shape_error("bce_with_logits_mean", logits.value(), targets);
  }
  const auto z = logits.value().array();
  const auto t = targets.array();
  // stable: max(z,0) - z*t + log(1 + exp(-|z|))
  const double loss =
      (z.max(0.0) - z * t + (1.0 + (-z.abs()).exp()).log()).sum() / static_cast<double>(z.size());
  const int pa = logits.id;
  MatX out(1, 1);
  out(0, 0) = loss;
  return logits.g->make_node(
      std::move(out), {pa},
      [pa, targets](Graph& g, int self) {
        const double s = g.grad(self)(0, 0) / static_cast<double>(targets.size());
        const auto z = g.value(pa).array();
        const auto y = 1.0 / (1.0 + (-z).exp());
        g.accumulate(pa, (s * (y - targets.array())).matrix());
      },
      "bce_with_logits_mean");
}

Var huber_sum(Var pred, const MatX& target, double delta) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    shape_error("huber_sum", pred.value(), target);
  }
  if (delta <= 0) throw std::invalid_argument("huber_sum: delta must be > 0");
  const auto e = (pred.value() - target).array();
  const auto a = e.abs();
  const double loss = ((a <= delta).select(0.5 / delta * e.square(), a - 0.5 * delta)).sum();
  const int pa = pred.id;
  MatX out(1, 1);
  out(0, 0) = loss;
  return pred.g->make_node(
      std::move(out), {pa},
      [pa, target, delta](Graph& g, int self) {
        const double s = g.grad(self)(0, 0);
        const auto e = ((g.value(pa) - target) / delta).array();
        g.accumulate(pa, (s * e.max(-1.0).min(1.0)).matrix());
      },
      "huber_sum");
}

Var cosine_distance(Var a, Var b) {
  if (a.cols() != 1 || b.cols() != 1) shape_error("cosine_distance", a.value(), b.value());
  Var an = normalize_cols(a);
  Var bn = normalize_cols(b);
  return affine(dot(an, bn), -1.0, 1.0);
}

double cosine_distance(const VecX& a, const VecX& b) {
  const double na = a.norm(), nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) {
    throw std::invalid_argument("cosine_distance: zero vector");
  }
  return 1.0 - a.dot(b) / (na * nb);
}

}  // namespace fss::nn
