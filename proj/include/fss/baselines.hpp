#pragma once

#include "fss/core.hpp"
#include "fss/detector.hpp"
#include "fss/nn/graph.hpp"

#include <string>
#include <vector>

namespace fss::baselines {

/// CTC negative log-likelihood of `target` (symbol indices, no blanks)
/// given per-frame logits (classes x T; the blank row is
/// Alphabet::blank_index() unless stated otherwise by the caller).
/// Computed with the forward algorithm in log space.  If grad_logits is
/// non-null it receives dLoss/dlogits.  Throws when T is too short to emit
/// the target.
double ctc_loss_value(const MatX& logits, const std::vector<int>& target, int blank,
                      MatX* grad_logits);

/// Graph op wrapping ctc_loss_value.
nn::Var ctc_loss(nn::Graph& g, nn::Var logits, const std::vector<int>& target, int blank);

/// Minimum number of frames needed to emit the target (repeats need a
/// separating blank).
int ctc_min_frames(const std::vector<int>& target);

struct Hypothesis {
  std::vector<int> labels;  // no blanks
  double log_prob = 0.0;
};

/// Prefix beam search with blank/repeat collapsing; returns up to
/// beam_width hypotheses, best first.
std::vector<Hypothesis> prefix_beam_search(const MatX& logits, int beam_width, int blank);

/// CTC training transcript for a clip: ground-truth words in temporal
/// order joined by single <x> tokens, with a leading/trailing <x> when the
/// clip starts/ends outside fingerspelling.
std::vector<int> ctc_transcript(const Clip& clip);

/// Eq.-style recognizer score: hypotheses split into words on <x>;
/// 1 - min over (hypothesis, word) of the clamped letter error rate.
/// A hypothesis with no words contributes error 1; no hypotheses at all
/// scores 0.
double recognizer_score(const std::vector<Hypothesis>& hypotheses, const Query& query);

/// Attention-derived segments: threshold at tau_fraction of the max
/// weight, merge adjacent above-threshold frames, score each segment by
/// its mean attention weight.
std::vector<detect::Proposal> attention_to_segments(const VecX& attention, double tau_fraction);

/// Whole-clip matching score: 1 - d(e_v, e_x), clamped at zero.
double wholeclip_score(const VecX& clip_embedding, const VecX& text_embedding);

struct AttnForward {
  nn::Var attention;  // T x 1, non-negative, sums to 1
  nn::Var logit;      // 1 x 1 pre-sigmoid score
};

/// Attention scoring head: per-frame weights a = softmax over
/// alpha*cos^2(e_v^t, e_x) + theta, pooled frames scored by w.pool + b.
AttnForward attn_kws_forward(nn::Graph& g, nn::Var frame_embeddings, nn::Var text_embedding,
                             nn::Var alpha, nn::Var theta, nn::Var w, nn::Var b);

}  // namespace fss::baselines
