#pragma once

#include "fss/core.hpp"
#include "fss/nn/layers.hpp"
#include "fss/rng.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fss::detect {

struct DetectorConfig {
  std::vector<int> anchor_scales = {1,  2,  3,  4,  5,  6,  7,  8,  9,  10,
                                    12, 14, 16, 18, 20, 24, 32, 40, 60, 75};
  double iou_positive = 0.6;
  double iou_negative = 0.3;
  int neg_pos_ratio = 3;
  double nms_iou = 0.7;
  int max_proposals = 50;
  int pre_nms_top = 200;    // score cutoff before the quadratic suppression
  double reg_weight = 3.0;  // regression term weight relative to the BCE
  double reg_huber_delta = 1.0;
};

/// One anchor: a scale placed at a feature-map position, clipped to the
/// clip bounds.  center/length describe the clipped segment and are the
/// regression reference frame.
struct Anchor {
  int position = 0;
  int scale_index = 0;
  Segment segment;
  double center = 0.0;
  double length = 1.0;
};

struct AnchorGrid {
  std::vector<Anchor> anchors;
  int n_positions = 0;
  int n_scales = 0;
  int clip_len = 0;
};

/// Anchors at every feature-map position of the stack applied to a
/// length-T clip; anchors reaching past the clip edges are clipped, never
/// discarded.
AnchorGrid make_anchor_grid(const nn::ConvPoolStack& stack, int T,
                            const std::vector<int>& scales);

enum class AnchorLabel : unsigned char { Negative, Positive, Ignore };

struct DetectionTargets {
  std::vector<AnchorLabel> labels;
  std::vector<int> matched_gt;         // -1 unless positive
  std::vector<double> target_dcenter;  // (gt_center - anchor_center) / anchor_len
  std::vector<double> target_dlog_len; // log(gt_len / anchor_len)
  int n_positive = 0;
  int n_negative = 0;
};

/// Label anchors by max-IoU thresholds; every ground truth without a
/// strictly-above-threshold anchor is force-matched to its best free
/// anchor so each ground truth keeps at least one positive.
DetectionTargets assign_anchors(const AnchorGrid& grid,
                                const std::vector<Segment>& ground_truth,
                                const DetectorConfig& cfg);

struct Proposal {
  Segment segment;
  double p_det = 0.0;
};

/// Greedy NMS: keep by descending score, drop anything with IoU >= threshold
/// against a kept proposal.  Ties break by earlier start, then longer
/// length, so the result does not depend on input order.
std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold);

/// Temporal proposal generator: conv/pool stack over trunk features with a
/// per-scale classification head (p_det) and boundary-regression head.
class Detector {
 public:
  Detector(const std::string& name, int in_channels, const nn::ConvPoolStack::Spec& stack_spec,
           const DetectorConfig& cfg);

  void init(Rng& rng);
  void collect(std::vector<nn::Parameter*>& out);

  const DetectorConfig& config() const { return cfg_; }
  const nn::ConvPoolStack& stack() const { return stack_; }

  struct Heads {
    nn::Var cls;  // n_scales x n_positions, logits
    nn::Var reg;  // 2*n_scales x n_positions, (dcenter, dlog_len) per scale
    AnchorGrid grid;
  };

  /// trunk_features is in_channels x T.
  Heads forward(nn::Graph& g, nn::Var trunk_features) const;

  /// Classification BCE over positives plus subsampled negatives (at most
  /// neg_pos_ratio per positive; all negatives when there are no
  /// positives), plus smooth-L1 on positive regression outputs, equally
  /// weighted.  Zero when no anchors are selected at all.
  nn::Var detection_loss(nn::Graph& g, const Heads& heads, const DetectionTargets& targets,
                         Rng& rng) const;

  /// Decode + NMS + top-M, sorted by p_det descending.  Value-only path.
  std::vector<Proposal> propose(const MatX& trunk_features) const;

  /// Decode all anchors from head values without NMS.
  std::vector<Proposal> decode(const MatX& cls, const MatX& reg, const AnchorGrid& grid) const;

  /// decode -> pre-NMS score cutoff -> NMS -> top max_proposals.
  std::vector<Proposal> decode_nms(const MatX& cls, const MatX& reg,
                                   const AnchorGrid& grid) const;

 private:
  DetectorConfig cfg_;
  nn::ConvPoolStack stack_;
  nn::Linear cls_head_;
  nn::Linear reg_head_;
};

/// Proposal records, exported per clip for the external-detector baseline
/// and AP@IoU scoring.
using ProposalTable = std::map<std::string, std::vector<Proposal>>;

void save_proposals(const ProposalTable& table, const std::filesystem::path& path);
ProposalTable load_proposals(const std::filesystem::path& path);

}  // namespace fss::detect
