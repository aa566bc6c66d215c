#pragma once

#include "fss/core.hpp"
#include "fss/detector.hpp"
#include "fss/nn/layers.hpp"
#include "fss/rng.hpp"

#include <optional>
#include <string>
#include <vector>

namespace fss::match {

/// Thresholds for promoting generated proposals into training positives.
/// Comparisons are inclusive (>=): with the inclusive form a delta of 1.0
/// still admits exact matches instead of emptying the set.
struct FilterConfig {
  double delta_iou = 0.8;
  double delta_is = 0.8;
  int k_per_ground_truth = 4;
};

struct MatchConfig {
  double margin = 0.45;
  int neg_cap_visual = 5;
  int neg_cap_word = 5;
  int embedding_dim = 32;
  double lambda_det = 0.1;
};

/// A labeled training segment: member of P_g (ground truth) or P_k
/// (sampled proposal that inherited its source ground truth's text).
struct TrainingPair {
  Segment segment;
  std::string text;
  bool is_ground_truth = false;

  bool operator==(const TrainingPair&) const = default;
};

/// Proposals passing both overlap tests against some ground truth, paired
/// with that ground truth's text; at most k survivors are kept per ground
/// truth, sampled uniformly.
std::vector<TrainingPair> filter_proposals(const std::vector<detect::Proposal>& proposals,
                                           const std::vector<LabeledSegment>& ground_truth,
                                           const FilterConfig& cfg, Rng& rng);

/// P_+ = P_g followed by P_k.
std::vector<TrainingPair> build_training_pairs(const std::vector<LabeledSegment>& ground_truth,
                                               const std::vector<TrainingPair>& sampled);

/// Visual segment encoder: bidirectional recurrence over the trunk slice,
/// final states projected to the embedding dimension and unit-normalized.
class SegmentEncoder {
 public:
  SegmentEncoder(const std::string& name, int input_dim, int hidden, int n_layers,
                 int embedding_dim);

  void init(Rng& rng);
  void collect(std::vector<nn::Parameter*>& out);

  /// trunk_features is input_dim x T; the segment must lie inside [0, T).
  nn::Var encode(nn::Graph& g, nn::Var trunk_features, const Segment& segment) const;
  int embedding_dim() const { return proj_.out_dim(); }

 private:
  nn::BiRecurrentEncoder encoder_;
  nn::Linear proj_;
};

/// Character-compositional text encoder; total on the open vocabulary.
class TextEncoder {
 public:
  TextEncoder(const std::string& name, int char_embed_dim, int hidden, int n_layers,
              int embedding_dim);

  void init(Rng& rng);
  void collect(std::vector<nn::Parameter*>& out);

  nn::Var encode(nn::Graph& g, const Query& query) const;
  VecX encode_value(const Query& query) const;
  int embedding_dim() const { return proj_.out_dim(); }

 private:
  mutable nn::Parameter char_embed_;  // char_embed_dim x |alphabet characters|
  nn::BiRecurrentEncoder encoder_;
  nn::Linear proj_;
};

/// Embedded mini-batch, value side: used for semi-hard negative selection.
struct EmbeddedBatch {
  std::vector<std::string> words;  // distinct words in the batch
  std::vector<int> word_of;        // per positive pair: index into words
  MatX distances;                  // n_pairs x n_words cosine distances
};

struct NegativeSets {
  std::vector<int> visual;  // indices of positive pairs acting as negatives
  std::vector<int> words;   // indices into EmbeddedBatch::words
};

/// Semi-hard sets for one anchor pair: candidates farther than the positive
/// distance, identical words excluded, truncated hardest-first (ascending
/// distance) to the caps.
NegativeSets mine_negatives(const EmbeddedBatch& batch, int anchor, int cap_visual, int cap_word);

/// One Eq.-style hinge: max(margin + positive - mean(negatives), 0);
/// std::nullopt (contributes nothing) when there are no negatives.
std::optional<nn::Var> triplet_term(nn::Graph& g, nn::Var positive_distance,
                                    const std::vector<nn::Var>& negative_distances, double margin);

/// lambda_det * det_loss + tri_loss; det_loss may be an invalid Var (or
/// lambda zero), in which case the detection term vanishes entirely.
nn::Var total_loss(nn::Graph& g, nn::Var det_loss, nn::Var tri_loss, double lambda_det);

}  // namespace fss::match
