#pragma once

#include "fss/core.hpp"
#include "fss/search.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace fss::evalkit {

enum class Direction { FWS, FVS };

Direction direction_from_string(const std::string& s);
std::string to_string(Direction d);

/// Ground-truth relevance, derived deterministically from a corpus split.
/// FWS: per clip, the set of its fingerspelled words.  FVS: per word, the
/// set of clips containing it.  The vocabulary is the union of the split's
/// ground-truth words.
struct RelevanceJudgments {
  Direction direction = Direction::FWS;
  std::vector<std::string> queries;                       // sorted
  std::map<std::string, std::set<std::string>> relevant;  // query -> item ids
  std::vector<std::string> candidates;                    // sorted item universe
};

RelevanceJudgments build_judgments(const std::vector<Clip>& split, Direction direction);

/// Mean precision at the ranks of relevant items; relevant items absent
/// from the list count as unretrieved.
double average_precision(const search::RankedList& ranked,
                         const std::set<std::string>& relevant);

/// Oracle-threshold F1: the maximum F1 over all prefixes of the ranking.
double max_f1(const search::RankedList& ranked, const std::set<std::string>& relevant);

struct PrecisionRecallAtN {
  double precision = 0.0;
  double recall = 0.0;
  double max_precision = 0.0;  // attainable given |relevant| and N
  double max_recall = 0.0;
};

PrecisionRecallAtN precision_recall_at_n(const search::RankedList& ranked,
                                         const std::set<std::string>& relevant, int n);

struct SegmentPrediction {
  std::string clip_id;
  Segment segment;
  double score = 0.0;
};

/// Detection AP at IoU threshold tau: predictions pooled over the split,
/// sorted by score, greedily matched (highest IoU first) to unmatched
/// ground truths of the same clip; all-point interpolated AP over the
/// resulting PR curve.  Throws when there is no ground truth at all.
double ap_at_iou(const std::vector<SegmentPrediction>& predictions,
                 const std::map<std::string, std::vector<Segment>>& ground_truth, double tau);

struct QueryMetrics {
  std::string query;
  int n_relevant = 0;
  double ap = 0.0;
  double f1 = 0.0;
  PrecisionRecallAtN at1, at10;
};

/// Aggregate over one ranked-list file.  Queries with no relevant items are
/// excluded from every mean.
struct MetricReport {
  std::string system;
  std::string direction;
  int n_queries = 0;  // queries that entered the means
  double map = 0.0;
  double mf1 = 0.0;
  double p_at_1 = 0.0, p_at_10 = 0.0, r_at_1 = 0.0, r_at_10 = 0.0;
  double max_p_at_1 = 0.0, max_p_at_10 = 0.0, max_r_at_1 = 0.0, max_r_at_10 = 0.0;
  std::vector<QueryMetrics> per_query;
  // localization block, present when proposals were evaluated
  bool has_ap_iou = false;
  double ap_iou_01 = 0.0, ap_iou_03 = 0.0, ap_iou_05 = 0.0;

  std::string render() const;
};

MetricReport evaluate_rankings(const std::vector<std::pair<std::string, search::RankedList>>& lists,
                               const RelevanceJudgments& judgments, const std::string& system);

void add_localization(MetricReport& report, const std::vector<SegmentPrediction>& predictions,
                      const std::map<std::string, std::vector<Segment>>& ground_truth);

std::map<std::string, std::vector<Segment>> ground_truth_segments(const std::vector<Clip>& split);

}  // namespace fss::evalkit
