#include "fss/detector.hpp"

#include "fss/io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fss::detect {

namespace {

// score desc, then earlier start, then longer length
bool proposal_before(const Proposal& a, const Proposal& b) {
  if (a.p_det != b.p_det) return a.p_det > b.p_det;
  if (a.segment.s != b.segment.s) return a.segment.s < b.segment.s;
  return a.segment.length() > b.segment.length();
}

}  // namespace

AnchorGrid make_anchor_grid(const nn::ConvPoolStack& stack, int T,
                            const std::vector<int>& scales) {
  AnchorGrid grid;
  grid.clip_len = T;
  grid.n_positions = stack.output_length(T);
  grid.n_scales = static_cast<int>(scales.size());
  grid.anchors.reserve(static_cast<size_t>(grid.n_positions) * scales.size());
  for (int j = 0; j < grid.n_positions; ++j) {
    const double center = stack.frame_center(j);
    for (int si = 0; si < grid.n_scales; ++si) {
      const double half = scales[static_cast<size_t>(si)] / 2.0;
      int s = static_cast<int>(std::lround(center - half));
      int t = s + scales[static_cast<size_t>(si)];
      s = std::max(0, std::min(s, T - 1));
      t = std::max(s + 1, std::min(t, T));
      Anchor a;
      a.position = j;
      a.scale_index = si;
      a.segment = Segment(s, t);
      a.center = 0.5 * (s + t);
      a.length = static_cast<double>(t - s);
      grid.anchors.push_back(a);
    }
  }
  return grid;
}

DetectionTargets assign_anchors(const AnchorGrid& grid,
                                const std::vector<Segment>& ground_truth,
                                const DetectorConfig& cfg) {
  const size_t n = grid.anchors.size();
  if (n == 0) throw std::invalid_argument("assign_anchors: empty anchor grid");
  DetectionTargets tg;
  tg.labels.assign(n, AnchorLabel::Negative);
  tg.matched_gt.assign(n, -1);
  tg.target_dcenter.assign(n, 0.0);
  tg.target_dlog_len.assign(n, 0.0);

  if (ground_truth.empty()) {
    tg.n_negative = static_cast<int>(n);
    return tg;
  }

  auto set_positive = [&](size_t ai, int gi) {
    const Anchor& a = grid.anchors[ai];
    const Segment& g = ground_truth[static_cast<size_t>(gi)];
    tg.labels[ai] = AnchorLabel::Positive;
    tg.matched_gt[ai] = gi;
    const double g_center = 0.5 * (g.s + g.t);
    tg.target_dcenter[ai] = (g_center - a.center) / a.length;
    tg.target_dlog_len[ai] = std::log(static_cast<double>(g.length()) / a.length);
  };

  std::vector<char> gt_covered(ground_truth.size(), 0);
  for (size_t ai = 0; ai < n; ++ai) {
    double best = 0.0;
    int best_gt = -1;
    for (size_t gi = 0; gi < ground_truth.size(); ++gi) {
      const double v = iou(grid.anchors[ai].segment, ground_truth[gi]);
      if (v > best) {
        best = v;
        best_gt = static_cast<int>(gi);
      }
    }
    if (best > cfg.iou_positive) {
      set_positive(ai, best_gt);
      gt_covered[static_cast<size_t>(best_gt)] = 1;
    } else if (best < cfg.iou_negative) {
      tg.labels[ai] = AnchorLabel::Negative;
    } else {
      tg.labels[ai] = AnchorLabel::Ignore;
    }
  }

  // Force-match uncovered ground truths to their best still-free anchor.
  // A zero-overlap anchor is never forced: regression targets would be
  // meaningless (cannot happen with a full grid, whose largest scales
  // overlap every frame).
  for (size_t gi = 0; gi < ground_truth.size(); ++gi) {
    if (gt_covered[gi]) continue;
    int best_anchor = -1;
    double best = 0.0;
    for (size_t ai = 0; ai < n; ++ai) {
      if (tg.labels[ai] == AnchorLabel::Positive) continue;
      const double v = iou(grid.anchors[ai].segment, ground_truth[gi]);
      const bool better =
          v > best ||
          (v == best && best_anchor >= 0 &&
           (grid.anchors[ai].segment.s < grid.anchors[static_cast<size_t>(best_anchor)].segment.s ||
            (grid.anchors[ai].segment.s == grid.anchors[static_cast<size_t>(best_anchor)].segment.s &&
             grid.anchors[ai].segment.length() >
                 grid.anchors[static_cast<size_t>(best_anchor)].segment.length())));
      if (better) {
        best = v;
        best_anchor = static_cast<int>(ai);
      }
    }
    if (best_anchor >= 0) {
      set_positive(static_cast<size_t>(best_anchor), static_cast<int>(gi));
      gt_covered[gi] = 1;
    }
  }

  tg.n_positive = static_cast<int>(std::count(tg.labels.begin(), tg.labels.end(),
                                              AnchorLabel::Positive));
  tg.n_negative = static_cast<int>(std::count(tg.labels.begin(), tg.labels.end(),
                                              AnchorLabel::Negative));
  return tg;
}

std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold) {
  std::sort(proposals.begin(), proposals.end(), proposal_before);
  std::vector<Proposal> kept;
  for (const Proposal& p : proposals) {
    bool suppressed = false;
    for (const Proposal& k : kept) {
      if (iou(p.segment, k.segment) >= iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(p);
  }
  return kept;
}

Detector::Detector(const std::string& name, int in_channels,
                   const nn::ConvPoolStack::Spec& stack_spec, const DetectorConfig& cfg)
    : cfg_(cfg),
      stack_(name + ".stack",
             [&] {
               nn::ConvPoolStack::Spec s = stack_spec;
               s.in_channels = in_channels;
               return s;
             }()),
      cls_head_(name + ".cls", stack_.out_channels(), static_cast<int>(cfg.anchor_scales.size())),
      reg_head_(name + ".reg", stack_.out_channels(),
                2 * static_cast<int>(cfg.anchor_scales.size())) {
  if (cfg_.anchor_scales.empty()) {
    throw std::invalid_argument("Detector: anchor scale list is empty");
  }
}

void Detector::init(Rng& rng) {
  stack_.init(rng);
  cls_head_.init(rng);
  reg_head_.init(rng);
}

void Detector::collect(std::vector<nn::Parameter*>& out) {
  stack_.collect(out);
  cls_head_.collect(out);
  reg_head_.collect(out);
}

Detector::Heads Detector::forward(nn::Graph& g, nn::Var trunk_features) const {
  const int T = trunk_features.cols();
  nn::Var fm = stack_.apply(g, trunk_features);
  Heads heads{cls_head_.apply(g, fm), reg_head_.apply(g, fm),
              make_anchor_grid(stack_, T, cfg_.anchor_scales)};
  return heads;
}

nn::Var Detector::detection_loss(nn::Graph& g, const Heads& heads,
                                 const DetectionTargets& targets, Rng& rng) const {
  const auto& anchors = heads.grid.anchors;
  std::vector<int> positives, negatives;
  for (size_t i = 0; i < anchors.size(); ++i) {
    if (targets.labels[i] == AnchorLabel::Positive) positives.push_back(static_cast<int>(i));
    if (targets.labels[i] == AnchorLabel::Negative) negatives.push_back(static_cast<int>(i));
  }
  // Balance: at most neg_pos_ratio negatives per positive; with no
  // positives the clip is all background and every negative counts.
  if (!positives.empty() &&
      negatives.size() > positives.size() * static_cast<size_t>(cfg_.neg_pos_ratio)) {
    rng.shuffle(negatives);
    negatives.resize(positives.size() * static_cast<size_t>(cfg_.neg_pos_ratio));
    std::sort(negatives.begin(), negatives.end());
  }
  if (positives.empty() && negatives.empty()) {
    return g.constant(MatX::Zero(1, 1));
  }

  std::vector<std::pair<int, int>> cls_coords;
  MatX labels(static_cast<int>(positives.size() + negatives.size()), 1);
  int row = 0;
  for (int ai : positives) {
    cls_coords.emplace_back(anchors[static_cast<size_t>(ai)].scale_index,
                            anchors[static_cast<size_t>(ai)].position);
    labels(row++, 0) = 1.0;
  }
  for (int ai : negatives) {
    cls_coords.emplace_back(anchors[static_cast<size_t>(ai)].scale_index,
                            anchors[static_cast<size_t>(ai)].position);
    labels(row++, 0) = 0.0;
  }
  nn::Var loss = nn::bce_with_logits_mean(nn::gather(heads.cls, cls_coords), labels);

  if (!positives.empty()) {
    std::vector<std::pair<int, int>> dc_coords, dl_coords;
    MatX t_dc(static_cast<int>(positives.size()), 1), t_dl(static_cast<int>(positives.size()), 1);
    for (size_t k = 0; k < positives.size(); ++k) {
      const Anchor& a = anchors[static_cast<size_t>(positives[k])];
      dc_coords.emplace_back(2 * a.scale_index, a.position);
      dl_coords.emplace_back(2 * a.scale_index + 1, a.position);
      t_dc(static_cast<int>(k), 0) = targets.target_dcenter[static_cast<size_t>(positives[k])];
      t_dl(static_cast<int>(k), 0) = targets.target_dlog_len[static_cast<size_t>(positives[k])];
    }
    nn::Var reg_loss =
        nn::add(nn::huber_sum(nn::gather(heads.reg, dc_coords), t_dc, cfg_.reg_huber_delta),
                nn::huber_sum(nn::gather(heads.reg, dl_coords), t_dl, cfg_.reg_huber_delta));
    loss = nn::add(loss,
                   nn::scale(reg_loss, cfg_.reg_weight / static_cast<double>(positives.size())));
  }
  return loss;
}

std::vector<Proposal> Detector::decode(const MatX& cls, const MatX& reg,
                                       const AnchorGrid& grid) const {
  std::vector<Proposal> out;
  out.reserve(grid.anchors.size());
  const int T = grid.clip_len;
  for (const Anchor& a : grid.anchors) {
    const double logit = cls(a.scale_index, a.position);
    const double dc = reg(2 * a.scale_index, a.position);
    const double dl = std::clamp(reg(2 * a.scale_index + 1, a.position), -4.0, 4.0);
    const double center = a.center + dc * a.length;
    const double len = a.length * std::exp(dl);
    int s = static_cast<int>(std::lround(center - 0.5 * len));
    int t = static_cast<int>(std::lround(center + 0.5 * len));
    s = std::max(0, std::min(s, T - 1));
    t = std::max(s + 1, std::min(t, T));
    out.push_back({Segment(s, t), 1.0 / (1.0 + std::exp(-logit))});
  }
  return out;
}

std::vector<Proposal> Detector::decode_nms(const MatX& cls, const MatX& reg,
                                           const AnchorGrid& grid) const {
  std::vector<Proposal> decoded = decode(cls, reg, grid);
  if (static_cast<int>(decoded.size()) > cfg_.pre_nms_top) {
    std::sort(decoded.begin(), decoded.end(), proposal_before);
    decoded.resize(static_cast<size_t>(cfg_.pre_nms_top));
  }
  std::vector<Proposal> kept = nms(std::move(decoded), cfg_.nms_iou);
  if (static_cast<int>(kept.size()) > cfg_.max_proposals) {
    kept.resize(static_cast<size_t>(cfg_.max_proposals));
  }
  return kept;
}

std::vector<Proposal> Detector::propose(const MatX& trunk_features) const {
  nn::Graph g;
  g.set_inference(true);
  Heads heads = forward(g, g.constant(trunk_features));
  return decode_nms(heads.cls.value(), heads.reg.value(), heads.grid);
}

void save_proposals(const ProposalTable& table, const std::filesystem::path& path) {
  std::string out = "FSSPROPS v1\n";
  for (const auto& [clip_id, props] : table) {
    for (const Proposal& p : props) {
      out += "prop\t" + clip_id + "\t" + std::to_string(p.segment.s) + "\t" +
             std::to_string(p.segment.t) + "\t" + io::format_exact(p.p_det) + "\n";
    }
  }
  out += "end\n";
  io::write_file(path, out);
}

ProposalTable load_proposals(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  const std::string fname = path.string();
  std::string line;
  int lineno = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    return true;
  };
  if (!next_line() || line != "FSSPROPS v1") {
    throw io::ParseError(fname, lineno, "bad proposals header");
  }
  ProposalTable table;
  bool saw_end = false;
  while (next_line()) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    const auto fields = io::split(line, '\t');
    if (fields.size() != 5 || fields[0] != "prop") {
      throw io::ParseError(fname, lineno, "expected 'prop' record with 5 fields");
    }
    try {
      table[fields[1]].push_back(
          {Segment(std::stoi(fields[2]), std::stoi(fields[3])), std::stod(fields[4])});
    } catch (const std::exception& e) {
      throw io::ParseError(fname, lineno, e.what());
    }
  }
  if (!saw_end) throw io::ParseError(fname, lineno, "truncated proposals file (missing 'end')");
  return table;
}

}  // namespace fss::detect
