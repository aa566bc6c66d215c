#include "fss/matcher.hpp"

#include <algorithm>
#include <map>

namespace fss::match {

std::vector<TrainingPair> filter_proposals(const std::vector<detect::Proposal>& proposals,
                                           const std::vector<LabeledSegment>& ground_truth,
                                           const FilterConfig& cfg, Rng& rng) {
  std::vector<TrainingPair> out;
  for (size_t gi = 0; gi < ground_truth.size(); ++gi) {
    const LabeledSegment& gt = ground_truth[gi];
    std::vector<TrainingPair> survivors;
    for (const detect::Proposal& p : proposals) {
      if (iou(p.segment, gt.segment) >= cfg.delta_iou &&
          is_ratio(p.segment, gt.segment) >= cfg.delta_is) {
        survivors.push_back({p.segment, gt.text, false});
      }
    }
    // canonical order first, so the sampled subset does not depend on how
    // the caller ordered its proposals
    std::sort(survivors.begin(), survivors.end(),
              [](const TrainingPair& a, const TrainingPair& b) {
                if (a.segment.s != b.segment.s) return a.segment.s < b.segment.s;
                return a.segment.t < b.segment.t;
              });
    if (static_cast<int>(survivors.size()) > cfg.k_per_ground_truth) {
      // uniform sample without replacement, original order kept
      std::vector<int> idx(survivors.size());
      for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
      rng.shuffle(idx);
      idx.resize(static_cast<size_t>(cfg.k_per_ground_truth));
      std::sort(idx.begin(), idx.end());
      std::vector<TrainingPair> picked;
      picked.reserve(idx.size());
      for (int i : idx) picked.push_back(survivors[static_cast<size_t>(i)]);
      survivors = std::move(picked);
    } else if (cfg.k_per_ground_truth == 0) {
      survivors.clear();
    }
    out.insert(out.end(), survivors.begin(), survivors.end());
  }
  return out;
}

std::vector<TrainingPair> build_training_pairs(const std::vector<LabeledSegment>& ground_truth,
                                               const std::vector<TrainingPair>& sampled) {
  std::vector<TrainingPair> out;
  out.reserve(ground_truth.size() + sampled.size());
  for (const auto& g : ground_truth) out.push_back({g.segment, g.text, true});
  out.insert(out.end(), sampled.begin(), sampled.end());
  return out;
}

SegmentEncoder::SegmentEncoder(const std::string& name, int input_dim, int hidden, int n_layers,
                               int embedding_dim)
    : encoder_(name + ".enc", input_dim, hidden, n_layers),
      proj_(name + ".proj", 2 * hidden, embedding_dim) {}

void SegmentEncoder::init(Rng& rng) {
  encoder_.init(rng);
  proj_.init(rng);
}

void SegmentEncoder::collect(std::vector<nn::Parameter*>& out) {
  encoder_.collect(out);
  proj_.collect(out);
}

nn::Var SegmentEncoder::encode(nn::Graph& g, nn::Var trunk_features,
                               const Segment& segment) const {
  const int T = trunk_features.cols();
  if (segment.s < 0 || segment.t > T || segment.length() < 1) {
    throw std::invalid_argument("SegmentEncoder: segment [" + std::to_string(segment.s) + ", " +
                                std::to_string(segment.t) + ") outside clip of length " +
                                std::to_string(T));
  }
  nn::Var window = nn::block(trunk_features, 0, segment.s, trunk_features.rows(),
                             segment.length());
  return nn::normalize_cols(proj_.apply(g, encoder_.encode_final(g, window)));
}

TextEncoder::TextEncoder(const std::string& name, int char_embed_dim, int hidden, int n_layers,
                         int embedding_dim)
    : char_embed_(name + ".chars", char_embed_dim, Alphabet::instance().size()),
      encoder_(name + ".enc", char_embed_dim, hidden, n_layers),
      proj_(name + ".proj", 2 * hidden, embedding_dim) {}

void TextEncoder::init(Rng& rng) {
  const double r = 1.0 / std::sqrt(static_cast<double>(char_embed_.value.rows()));
  for (int j = 0; j < char_embed_.value.cols(); ++j) {
    for (int i = 0; i < char_embed_.value.rows(); ++i) {
      char_embed_.value(i, j) = rng.uniform(-r, r);
    }
  }
  encoder_.init(rng);
  proj_.init(rng);
}

void TextEncoder::collect(std::vector<nn::Parameter*>& out) {
  out.push_back(&char_embed_);
  encoder_.collect(out);
  proj_.collect(out);
}

nn::Var TextEncoder::encode(nn::Graph& g, const Query& query) const {
  if (query.chars.empty()) throw std::invalid_argument("TextEncoder: empty query");
  nn::Var table = g.param(char_embed_);
  nn::Var seq = nn::select_cols(table, query.chars);
  return nn::normalize_cols(proj_.apply(g, encoder_.encode_final(g, seq)));
}

VecX TextEncoder::encode_value(const Query& query) const {
  nn::Graph g;
  return encode(g, query).value().col(0);
}

NegativeSets mine_negatives(const EmbeddedBatch& batch, int anchor, int cap_visual,
                            int cap_word) {
  NegativeSets sets;
  const int w = batch.word_of[static_cast<size_t>(anchor)];
  const double positive = batch.distances(anchor, w);

  std::vector<std::pair<double, int>> word_cands, visual_cands;
  for (int j = 0; j < static_cast<int>(batch.words.size()); ++j) {
    if (j == w) continue;
    const double d = batch.distances(anchor, j);
    if (d > positive) word_cands.emplace_back(d, j);
  }
  for (int p = 0; p < static_cast<int>(batch.word_of.size()); ++p) {
    if (batch.word_of[static_cast<size_t>(p)] == w) continue;  // same word is never its own negative
    const double d = batch.distances(p, w);
    if (d > positive) visual_cands.emplace_back(d, p);
  }
  auto take = [](std::vector<std::pair<double, int>>& cands, int cap, std::vector<int>& out) {
    std::sort(cands.begin(), cands.end());
    for (int i = 0; i < std::min<int>(cap, static_cast<int>(cands.size())); ++i) {
      out.push_back(cands[static_cast<size_t>(i)].second);
    }
  };
  take(word_cands, cap_word, sets.words);
  take(visual_cands, cap_visual, sets.visual);
  return sets;
}

std::optional<nn::Var> triplet_term(nn::Graph& g, nn::Var positive_distance,
                                    const std::vector<nn::Var>& negative_distances,
                                    double margin) {
  if (negative_distances.empty()) return std::nullopt;
  nn::Var neg_mean = nn::mean(nn::hcat(negative_distances));
  return nn::relu(nn::affine(nn::sub(positive_distance, neg_mean), 1.0, margin));
}

nn::Var total_loss(nn::Graph&, nn::Var det_loss, nn::Var tri_loss, double lambda_det) {
  if (!det_loss.valid() || lambda_det == 0.0) return tri_loss;
  return nn::add(nn::scale(det_loss, lambda_det), tri_loss);
}

}  // namespace fss::match
