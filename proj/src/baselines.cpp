#include "fss/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace fss::baselines {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double logsumexp3(double a, double b, double c) { return logsumexp2(logsumexp2(a, b), c); }

MatX log_softmax_cols(const MatX& logits) {
  MatX out = logits;
  for (int c = 0; c < out.cols(); ++c) {
    const double m = out.col(c).maxCoeff();
    const double lse = m + std::log((out.col(c).array() - m).exp().sum());
    out.col(c).array() -= lse;
  }
  return out;
}

}  // namespace

int ctc_min_frames(const std::vector<int>& target) {
  int repeats = 0;
  for (size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++repeats;
  }
  return static_cast<int>(target.size()) + repeats;
}

double ctc_loss_value(const MatX& logits, const std::vector<int>& target, int blank,
                      MatX* grad_logits) {
  const int K = static_cast<int>(logits.rows());
  const int T = static_cast<int>(logits.cols());
  for (int c : target) {
    if (c < 0 || c >= K || c == blank) {
      throw std::invalid_argument("ctc_loss: target symbol " + std::to_string(c) +
                                  " outside class range or equal to blank");
    }
  }
  if (T < ctc_min_frames(target)) {
    throw std::invalid_argument("ctc_loss: target needs at least " +
                                std::to_string(ctc_min_frames(target)) + " frames, clip has " +
                                std::to_string(T));
  }

  // extended label sequence with interleaved blanks
  const int L = static_cast<int>(target.size());
  const int S = 2 * L + 1;
  std::vector<int> ext(static_cast<size_t>(S), blank);
  for (int i = 0; i < L; ++i) ext[static_cast<size_t>(2 * i + 1)] = target[static_cast<size_t>(i)];

  const MatX logp = log_softmax_cols(logits);

  MatX alpha = MatX::Constant(S, T, kNegInf);
  alpha(0, 0) = logp(ext[0], 0);
  if (S > 1) alpha(1, 0) = logp(ext[1], 0);
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double acc = alpha(s, t - 1);
      if (s >= 1) acc = logsumexp2(acc, alpha(s - 1, t - 1));
      if (s >= 2 && ext[static_cast<size_t>(s)] != blank &&
          ext[static_cast<size_t>(s)] != ext[static_cast<size_t>(s - 2)]) {
        acc = logsumexp2(acc, alpha(s - 2, t - 1));
      }
      if (acc != kNegInf) alpha(s, t) = acc + logp(ext[static_cast<size_t>(s)], t);
    }
  }
  const double log_p = S > 1 ? logsumexp2(alpha(S - 1, T - 1), alpha(S - 2, T - 1))
                             : alpha(S - 1, T - 1);
  if (log_p == kNegInf) {
    throw std::invalid_argument("ctc_loss: target has zero probability mass");
  }

  if (grad_logits) {
    // beta excludes the frame-t emission so alpha_t(s) + beta_t(s) counts
    // each frame exactly once
    MatX beta = MatX::Constant(S, T, kNegInf);
    beta(S - 1, T - 1) = 0.0;
    if (S > 1) beta(S - 2, T - 1) = 0.0;
    for (int t = T - 2; t >= 0; --t) {
      for (int s = 0; s < S; ++s) {
        double acc = beta(s, t + 1) == kNegInf
                         ? kNegInf
                         : beta(s, t + 1) + logp(ext[static_cast<size_t>(s)], t + 1);
        if (s + 1 < S && beta(s + 1, t + 1) != kNegInf) {
          acc = logsumexp2(acc, beta(s + 1, t + 1) + logp(ext[static_cast<size_t>(s + 1)], t + 1));
        }
        if (s + 2 < S && ext[static_cast<size_t>(s + 2)] != blank &&
            ext[static_cast<size_t>(s + 2)] != ext[static_cast<size_t>(s)] &&
            beta(s + 2, t + 1) != kNegInf) {
          acc = logsumexp2(acc, beta(s + 2, t + 1) + logp(ext[static_cast<size_t>(s + 2)], t + 1));
        }
        beta(s, t) = acc;
      }
    }
    // dLoss/dlogit_t(k) = softmax_t(k) - sum of state posteriors emitting k
    *grad_logits = logp.array().exp().matrix();
    for (int t = 0; t < T; ++t) {
      std::map<int, double> occ;  // class -> log posterior mass
      for (int s = 0; s < S; ++s) {
        const double m = alpha(s, t) + beta(s, t);
        if (m == kNegInf) continue;
        const int k = ext[static_cast<size_t>(s)];
        const auto it = occ.find(k);
        occ[k] = it == occ.end() ? m : logsumexp2(it->second, m);
      }
      for (const auto& [k, lm] : occ) {
        (*grad_logits)(k, t) -= std::exp(lm - log_p);
      }
    }
  }
  return -log_p;
}

nn::Var ctc_loss(nn::Graph& g, nn::Var logits, const std::vector<int>& target, int blank) {
  MatX grad;
  const double value = ctc_loss_value(logits.value(), target, blank, &grad);
  MatX out(1, 1);
  out(0, 0) = value;
  const int parent = logits.id;
  return g.make_node(
      std::move(out), {parent},
      [parent, grad](nn::Graph& gg, int self) {
        gg.accumulate(parent, gg.grad(self)(0, 0) * grad);
      },
      "ctc_loss");
}

std::vector<Hypothesis> prefix_beam_search(const MatX& logits, int beam_width, int blank) {
  if (beam_width < 1) throw std::invalid_argument("prefix_beam_search: beam width must be >= 1");
  const int T = static_cast<int>(logits.cols());
  const int K = static_cast<int>(logits.rows());
  const MatX logp = log_softmax_cols(logits);

  struct Mass {
    double blank_lp = kNegInf;     // prob of paths ending in blank
    double nonblank_lp = kNegInf;  // prob of paths ending in the last label
    double total() const { return logsumexp2(blank_lp, nonblank_lp); }
  };
  std::map<std::vector<int>, Mass> beam;
  beam[{}] = Mass{0.0, kNegInf};

  for (int t = 0; t < T; ++t) {
    std::map<std::vector<int>, Mass> next;
    for (const auto& [prefix, mass] : beam) {
      // blank extends every path without changing the prefix
      {
        Mass& m = next[prefix];
        m.blank_lp = logsumexp2(m.blank_lp, mass.total() + logp(blank, t));
      }
      for (int k = 0; k < K; ++k) {
        if (k == blank) continue;
        const double lp = logp(k, t);
        if (!prefix.empty() && prefix.back() == k) {
          // repeated symbol: same prefix unless a blank intervened
          Mass& same = next[prefix];
          same.nonblank_lp = logsumexp2(same.nonblank_lp, mass.nonblank_lp + lp);
          std::vector<int> extended = prefix;
          extended.push_back(k);
          Mass& ext = next[extended];
          ext.nonblank_lp = logsumexp2(ext.nonblank_lp, mass.blank_lp + lp);
        } else {
          std::vector<int> extended = prefix;
          extended.push_back(k);
          Mass& ext = next[extended];
          ext.nonblank_lp = logsumexp2(ext.nonblank_lp, mass.total() + lp);
        }
      }
    }
    // prune to the beam width
    std::vector<std::pair<double, const std::vector<int>*>> order;
    order.reserve(next.size());
    for (const auto& [prefix, mass] : next) order.emplace_back(mass.total(), &prefix);
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return *a.second < *b.second;
              });
    std::map<std::vector<int>, Mass> pruned;
    for (size_t i = 0; i < std::min<size_t>(order.size(), static_cast<size_t>(beam_width)); ++i) {
      pruned[*order[i].second] = next[*order[i].second];
    }
    beam = std::move(pruned);
  }

  std::vector<Hypothesis> out;
  out.reserve(beam.size());
  for (const auto& [prefix, mass] : beam) out.push_back({prefix, mass.total()});
  std::sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.labels < b.labels;
  });
  return out;
}

std::vector<int> ctc_transcript(const Clip& clip) {
  const auto& ab = Alphabet::instance();
  std::vector<LabeledSegment> gt = clip.ground_truth;
  std::sort(gt.begin(), gt.end(), [](const LabeledSegment& a, const LabeledSegment& b) {
    return a.segment.s < b.segment.s;
  });
  std::vector<int> out;
  if (gt.empty()) {
    out.push_back(ab.x_index());
    return out;
  }
  if (gt.front().segment.s > 0) out.push_back(ab.x_index());
  for (size_t i = 0; i < gt.size(); ++i) {
    if (i > 0 && gt[i].segment.s > gt[i - 1].segment.t) out.push_back(ab.x_index());
    for (int c : ab.encode(gt[i].text)) out.push_back(c);
  }
  if (gt.back().segment.t < clip.n_frames()) out.push_back(ab.x_index());
  return out;
}

double recognizer_score(const std::vector<Hypothesis>& hypotheses, const Query& query) {
  if (hypotheses.empty()) return 0.0;
  const auto& ab = Alphabet::instance();
  double min_err = 1.0;
  for (const Hypothesis& hyp : hypotheses) {
    std::vector<std::string> words;
    std::string cur;
    for (int label : hyp.labels) {
      if (label == ab.x_index()) {
        if (!cur.empty()) words.push_back(std::move(cur));
        cur.clear();
      } else {
        cur.push_back(ab.char_at(label));
      }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    if (words.empty()) continue;  // contributes error 1, never smaller
    for (const std::string& w : words) {
      min_err = std::min(min_err, clamped_ler(w, query.text));
    }
  }
  return 1.0 - min_err;
}

double wholeclip_score(const VecX& clip_embedding, const VecX& text_embedding) {
  return std::max(0.0, 1.0 - nn::cosine_distance(clip_embedding, text_embedding));
}

AttnForward attn_kws_forward(nn::Graph& g, nn::Var frame_embeddings, nn::Var text_embedding,
                             nn::Var alpha, nn::Var theta, nn::Var w, nn::Var b) {
  nn::Var cos_row = nn::matmul(nn::transpose(nn::normalize_cols(text_embedding)),
                               nn::normalize_cols(frame_embeddings));
  nn::Var scores = nn::scalar_add(nn::scalar_mul(nn::square(cos_row), alpha), theta);
  nn::Var attention = nn::softmax_cols(nn::transpose(scores));
  nn::Var pooled = nn::matmul(frame_embeddings, attention);
  nn::Var logit = nn::add(nn::matmul(w, pooled), b);
  return {attention, logit};
}

std::vector<detect::Proposal> attention_to_segments(const VecX& attention, double tau_fraction) {
  std::vector<detect::Proposal> out;
  const int T = static_cast<int>(attention.size());
  if (T == 0) return out;
  const double threshold = tau_fraction * attention.maxCoeff();
  int start = -1;
  for (int t = 0; t <= T; ++t) {
    const bool above = t < T && attention(t) >= threshold;
    if (above && start < 0) start = t;
    if (!above && start >= 0) {
      const double mean_w = attention.segment(start, t - start).mean();
      out.push_back({Segment(start, t), mean_w});
      start = -1;
    }
  }
  return out;
}

}  // namespace fss::baselines
