#include "fss/evalkit.hpp"

#include "fss/io.hpp"

#include <algorithm>
#include <stdexcept>

namespace fss::evalkit {

Direction direction_from_string(const std::string& s) {
  if (s == "fws") return Direction::FWS;
  if (s == "fvs") return Direction::FVS;
  throw std::invalid_argument("direction must be fws or fvs, got '" + s + "'");
}

std::string to_string(Direction d) { return d == Direction::FWS ? "fws" : "fvs"; }

RelevanceJudgments build_judgments(const std::vector<Clip>& split, Direction direction) {
  RelevanceJudgments j;
  j.direction = direction;
  std::set<std::string> vocab;
  for (const Clip& clip : split) {
    for (const auto& ls : clip.ground_truth) vocab.insert(ls.text);
  }
  if (direction == Direction::FWS) {
    j.candidates.assign(vocab.begin(), vocab.end());
    for (const Clip& clip : split) {
      auto& rel = j.relevant[clip.id];
      for (const auto& ls : clip.ground_truth) rel.insert(ls.text);
      j.queries.push_back(clip.id);
    }
  } else {
    for (const Clip& clip : split) j.candidates.push_back(clip.id);
    std::sort(j.candidates.begin(), j.candidates.end());
    for (const std::string& w : vocab) {
      auto& rel = j.relevant[w];
      for (const Clip& clip : split) {
        for (const auto& ls : clip.ground_truth) {
          if (ls.text == w) {
            rel.insert(clip.id);
            break;
          }
        }
      }
      j.queries.push_back(w);
    }
  }
  std::sort(j.queries.begin(), j.queries.end());
  return j;
}

double average_precision(const search::RankedList& ranked,
                         const std::set<std::string>& relevant) {
  if (ranked.empty()) throw std::invalid_argument("average_precision: empty ranked list");
  if (relevant.empty()) {
    throw std::invalid_argument("average_precision: empty relevant set (exclude such queries)");
  }
  int hits = 0;
  double sum = 0.0;
  for (size_t k = 0; k < ranked.size(); ++k) {
    if (relevant.count(ranked[k].id)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

double max_f1(const search::RankedList& ranked, const std::set<std::string>& relevant) {
  if (ranked.empty()) throw std::invalid_argument("max_f1: empty ranked list");
  if (relevant.empty()) throw std::invalid_argument("max_f1: empty relevant set");
  int hits = 0;
  double best = 0.0;
  for (size_t k = 0; k < ranked.size(); ++k) {
    if (relevant.count(ranked[k].id)) ++hits;
    if (hits == 0) continue;
    const double p = static_cast<double>(hits) / static_cast<double>(k + 1);
    const double r = static_cast<double>(hits) / static_cast<double>(relevant.size());
    best = std::max(best, 2.0 * p * r / (p + r));
  }
  return best;
}

PrecisionRecallAtN precision_recall_at_n(const search::RankedList& ranked,
                                         const std::set<std::string>& relevant, int n) {
  if (ranked.empty()) throw std::invalid_argument("precision_recall_at_n: empty ranked list");
  if (relevant.empty()) throw std::invalid_argument("precision_recall_at_n: empty relevant set");
  if (n < 1) throw std::invalid_argument("precision_recall_at_n: n must be >= 1");
  int hits = 0;
  for (size_t k = 0; k < std::min<size_t>(ranked.size(), static_cast<size_t>(n)); ++k) {
    if (relevant.count(ranked[k].id)) ++hits;
  }
  PrecisionRecallAtN out;
  const double nrel = static_cast<double>(relevant.size());
  out.precision = static_cast<double>(hits) / static_cast<double>(n);
  out.recall = static_cast<double>(hits) / nrel;
  const double attainable = std::min<double>(nrel, n);
  out.max_precision = attainable / static_cast<double>(n);
  out.max_recall = attainable / nrel;
  return out;
}

double ap_at_iou(const std::vector<SegmentPrediction>& predictions,
                 const std::map<std::string, std::vector<Segment>>& ground_truth, double tau) {
  size_t n_gt = 0;
  for (const auto& [id, segs] : ground_truth) n_gt += segs.size();
  if (n_gt == 0) throw std::invalid_argument("ap_at_iou: no ground-truth segments");
  if (predictions.empty()) return 0.0;

  std::vector<SegmentPrediction> preds = predictions;
  std::sort(preds.begin(), preds.end(), [](const SegmentPrediction& a, const SegmentPrediction& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.clip_id != b.clip_id) return a.clip_id < b.clip_id;
    if (a.segment.s != b.segment.s) return a.segment.s < b.segment.s;
    return a.segment.t < b.segment.t;
  });

  std::map<std::string, std::vector<char>> used;
  for (const auto& [id, segs] : ground_truth) used[id].assign(segs.size(), 0);

  std::vector<char> is_tp(preds.size(), 0);
  for (size_t i = 0; i < preds.size(); ++i) {
    const auto it = ground_truth.find(preds[i].clip_id);
    if (it == ground_truth.end()) continue;
    const auto& segs = it->second;
    auto& flags = used[preds[i].clip_id];
    int best = -1;
    double best_iou = 0.0;
    for (size_t gi = 0; gi < segs.size(); ++gi) {
      if (flags[gi]) continue;
      const double v = iou(preds[i].segment, segs[gi]);
      if (v >= tau && v > best_iou) {
        best_iou = v;
        best = static_cast<int>(gi);
      }
    }
    if (best >= 0) {
      flags[static_cast<size_t>(best)] = 1;
      is_tp[i] = 1;
    }
  }

  // all-point interpolated AP over the PR curve
  std::vector<double> precision(preds.size()), recall(preds.size());
  int tp = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (is_tp[i]) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  for (size_t i = preds.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (is_tp[i]) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

MetricReport evaluate_rankings(const std::vector<std::pair<std::string, search::RankedList>>& lists,
                               const RelevanceJudgments& judgments, const std::string& system) {
  MetricReport report;
  report.system = system;
  report.direction = to_string(judgments.direction);
  double sum_ap = 0, sum_f1 = 0, sum_p1 = 0, sum_p10 = 0, sum_r1 = 0, sum_r10 = 0;
  double sum_mp1 = 0, sum_mp10 = 0, sum_mr1 = 0, sum_mr10 = 0;
  for (const auto& [query, ranked] : lists) {
    const auto it = judgments.relevant.find(query);
    if (it == judgments.relevant.end()) {
      throw std::invalid_argument("evaluate_rankings: query '" + query + "' has no judgments");
    }
    if (it->second.empty()) continue;  // excluded from means
    QueryMetrics qm;
    qm.query = query;
    qm.n_relevant = static_cast<int>(it->second.size());
    qm.ap = average_precision(ranked, it->second);
    qm.f1 = max_f1(ranked, it->second);
    qm.at1 = precision_recall_at_n(ranked, it->second, 1);
    qm.at10 = precision_recall_at_n(ranked, it->second, 10);
    sum_ap += qm.ap;
    sum_f1 += qm.f1;
    sum_p1 += qm.at1.precision;
    sum_p10 += qm.at10.precision;
    sum_r1 += qm.at1.recall;
    sum_r10 += qm.at10.recall;
    sum_mp1 += qm.at1.max_precision;
    sum_mp10 += qm.at10.max_precision;
    sum_mr1 += qm.at1.max_recall;
    sum_mr10 += qm.at10.max_recall;
    report.per_query.push_back(std::move(qm));
    ++report.n_queries;
  }
  if (report.n_queries > 0) {
    const double n = report.n_queries;
    report.map = sum_ap / n;
    report.mf1 = sum_f1 / n;
    report.p_at_1 = sum_p1 / n;
    report.p_at_10 = sum_p10 / n;
    report.r_at_1 = sum_r1 / n;
    report.r_at_10 = sum_r10 / n;
    report.max_p_at_1 = sum_mp1 / n;
    report.max_p_at_10 = sum_mp10 / n;
    report.max_r_at_1 = sum_mr1 / n;
    report.max_r_at_10 = sum_mr10 / n;
  }
  return report;
}

void add_localization(MetricReport& report, const std::vector<SegmentPrediction>& predictions,
                      const std::map<std::string, std::vector<Segment>>& ground_truth) {
  report.has_ap_iou = true;
  report.ap_iou_01 = ap_at_iou(predictions, ground_truth, 0.1);
  report.ap_iou_03 = ap_at_iou(predictions, ground_truth, 0.3);
  report.ap_iou_05 = ap_at_iou(predictions, ground_truth, 0.5);
}

std::map<std::string, std::vector<Segment>> ground_truth_segments(const std::vector<Clip>& split) {
  std::map<std::string, std::vector<Segment>> out;
  for (const Clip& clip : split) {
    auto& segs = out[clip.id];
    for (const auto& ls : clip.ground_truth) segs.push_back(ls.segment);
  }
  return out;
}

std::string MetricReport::render() const {
  auto f = [](double v) { return io::format_score(v); };
  std::string out;
  out += "FSSREPORT v1\n";
  out += "system\t" + system + "\n";
  out += "direction\t" + direction + "\n";
  out += "queries\t" + std::to_string(n_queries) + "\n";
  out += "metric\tmAP\t" + f(map) + "\tmax\t" + f(1.0) + "\n";
  out += "metric\tmF1\t" + f(mf1) + "\tmax\t" + f(1.0) + "\n";
  out += "metric\tP@1\t" + f(p_at_1) + "\tmax\t" + f(max_p_at_1) + "\n";
  out += "metric\tP@10\t" + f(p_at_10) + "\tmax\t" + f(max_p_at_10) + "\n";
  out += "metric\tR@1\t" + f(r_at_1) + "\tmax\t" + f(max_r_at_1) + "\n";
  out += "metric\tR@10\t" + f(r_at_10) + "\tmax\t" + f(max_r_at_10) + "\n";
  if (has_ap_iou) {
    out += "metric\tAP@0.1\t" + f(ap_iou_01) + "\tmax\t" + f(1.0) + "\n";
    out += "metric\tAP@0.3\t" + f(ap_iou_03) + "\tmax\t" + f(1.0) + "\n";
    out += "metric\tAP@0.5\t" + f(ap_iou_05) + "\tmax\t" + f(1.0) + "\n";
  }
  for (const auto& q : per_query) {
    out += "query\t" + q.query + "\t" + std::to_string(q.n_relevant) + "\tap\t" + f(q.ap) +
           "\tf1\t" + f(q.f1) + "\tp1\t" + f(q.at1.precision) + "\tp10\t" + f(q.at10.precision) +
           "\tr1\t" + f(q.at1.recall) + "\tr10\t" + f(q.at10.recall) + "\n";
  }
  out += "end\n";
  return out;
}

}  // namespace fss::evalkit
