#include "fss/systems.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace fss::systems {

namespace {

nn::ConvPoolStack::Spec stack_spec_from(const RunConfig& cfg) {
  nn::ConvPoolStack::Spec s;
  s.in_channels = 2 * cfg.model_trunk_hidden;
  s.conv1_channels = cfg.model_conv1_channels;
  s.conv1_kernel = cfg.model_conv1_kernel;
  s.pool_kernel = cfg.model_pool_kernel;
  s.pool_stride = cfg.model_pool_stride;
  s.conv2_channels = cfg.model_conv2_channels;
  s.conv2_kernel = cfg.model_conv2_kernel;
  s.conv3_channels = cfg.model_conv3_channels;
  s.conv3_kernel = cfg.model_conv3_kernel;
  return s;
}

detect::DetectorConfig detector_config_from(const RunConfig& cfg) {
  detect::DetectorConfig d;
  d.anchor_scales = cfg.model_anchor_scales;
  d.iou_positive = cfg.detector_iou_positive;
  d.iou_negative = cfg.detector_iou_negative;
  d.neg_pos_ratio = cfg.detector_neg_pos_ratio;
  d.nms_iou = cfg.detector_nms_iou;
  d.max_proposals = cfg.detector_max_proposals;
  d.pre_nms_top = cfg.detector_pre_nms_top;
  d.reg_weight = cfg.detector_reg_weight;
  d.reg_huber_delta = cfg.detector_reg_huber_delta;
  return d;
}

match::FilterConfig filter_config_from(const RunConfig& cfg) {
  return {cfg.filter_delta_iou, cfg.filter_delta_is, cfg.filter_k_per_ground_truth};
}

match::MatchConfig match_config_from(const RunConfig& cfg) {
  return {cfg.match_margin, cfg.match_neg_cap_visual, cfg.match_neg_cap_word,
          cfg.model_embedding_dim, cfg.match_lambda_det};
}

std::vector<Segment> gt_segments(const Clip& clip) {
  std::vector<Segment> out;
  out.reserve(clip.ground_truth.size());
  for (const auto& ls : clip.ground_truth) out.push_back(ls.segment);
  return out;
}

std::vector<std::string> clip_ids(const std::vector<Clip>& clips) {
  std::vector<std::string> out;
  out.reserve(clips.size());
  for (const Clip& c : clips) out.push_back(c.id);
  return out;
}

nn::Var sum_vars(nn::Graph& g, const std::vector<nn::Var>& vars) {
  if (vars.empty()) return g.constant(MatX::Zero(1, 1));
  nn::Var acc = vars[0];
  for (size_t i = 1; i < vars.size(); ++i) acc = nn::add(acc, vars[i]);
  return acc;
}

/// Batch-level triplet bookkeeping shared by FSS-Net and Whole-clip
/// training: positive pairs with their clip slots, semi-hard mining on
/// embedding values, hinge terms assembled back onto the graph.
struct TripletWorkspace {
  struct PairRef {
    int slot;
    std::string word;
  };
  std::vector<PairRef> pairs;
  std::vector<nn::Var> visual;  // unit-norm embeddings, one per pair

  void add(int slot, std::string word, nn::Var embedding) {
    pairs.push_back({slot, std::move(word)});
    visual.push_back(embedding);
  }

  /// Per-slot sum of hinge terms (invalid Var for slots with none).
  std::vector<nn::Var> build(nn::Graph& g, const match::TextEncoder& text_encoder,
                             const match::MatchConfig& mc, int n_slots) {
    std::vector<nn::Var> slot_loss(static_cast<size_t>(n_slots));
    if (pairs.empty()) return slot_loss;

    std::vector<std::string> words;
    std::vector<int> word_of(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
      const auto it = std::find(words.begin(), words.end(), pairs[i].word);
      if (it == words.end()) {
        word_of[i] = static_cast<int>(words.size());
        words.push_back(pairs[i].word);
      } else {
        word_of[i] = static_cast<int>(it - words.begin());
      }
    }
    std::vector<nn::Var> text(words.size());
    for (size_t w = 0; w < words.size(); ++w) {
      text[w] = text_encoder.encode(g, make_query(words[w]));
    }

    match::EmbeddedBatch eb;
    eb.words = words;
    eb.word_of = word_of;
    eb.distances.resize(static_cast<long>(pairs.size()), static_cast<long>(words.size()));
    for (size_t i = 0; i < pairs.size(); ++i) {
      for (size_t w = 0; w < words.size(); ++w) {
        eb.distances(static_cast<long>(i), static_cast<long>(w)) =
            1.0 - visual[i].value().col(0).dot(text[w].value().col(0));
      }
    }

    std::map<std::pair<int, int>, nn::Var> dvar;
    auto dist = [&](int i, int w) {
      const auto key = std::make_pair(i, w);
      auto it = dvar.find(key);
      if (it == dvar.end()) {
        nn::Var d = nn::affine(nn::dot(visual[static_cast<size_t>(i)],
                                       text[static_cast<size_t>(w)]),
                               -1.0, 1.0);
        it = dvar.emplace(key, d).first;
      }
      return it->second;
    };

    std::vector<std::vector<nn::Var>> terms(static_cast<size_t>(n_slots));
    for (size_t i = 0; i < pairs.size(); ++i) {
      const int w = word_of[i];
      nn::Var pos = dist(static_cast<int>(i), w);
      const match::NegativeSets sets =
          match::mine_negatives(eb, static_cast<int>(i), mc.neg_cap_visual, mc.neg_cap_word);
      std::vector<nn::Var> neg_w, neg_v;
      for (int j : sets.words) neg_w.push_back(dist(static_cast<int>(i), j));
      for (int p : sets.visual) neg_v.push_back(dist(p, w));
      if (auto t = match::triplet_term(g, pos, neg_w, mc.margin)) {
        terms[static_cast<size_t>(pairs[i].slot)].push_back(*t);
      }
      if (auto t = match::triplet_term(g, pos, neg_v, mc.margin)) {
        terms[static_cast<size_t>(pairs[i].slot)].push_back(*t);
      }
    }
    for (int s = 0; s < n_slots; ++s) {
      if (!terms[static_cast<size_t>(s)].empty()) {
        slot_loss[static_cast<size_t>(s)] = sum_vars(g, terms[static_cast<size_t>(s)]);
      }
    }
    return slot_loss;
  }
};

/// Keeps a copy of the parameter values from the epoch with the best dev
/// metric; training restores it at the end (model selection on dev).
class BestDevTracker {
 public:
  void observe(double dev_metric, const std::vector<nn::Parameter*>& params) {
    if (!has_best_ || dev_metric > best_) {
      best_ = dev_metric;
      has_best_ = true;
      values_.clear();
      values_.reserve(params.size());
      for (const nn::Parameter* p : params) values_.push_back(p->value);
    }
  }
  void restore(const std::vector<nn::Parameter*>& params) const {
    if (!has_best_) return;
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = values_[i];
  }

 private:
  bool has_best_ = false;
  double best_ = 0.0;
  std::vector<MatX> values_;
};

std::vector<std::vector<int>> make_batches(size_t n, int batch_size, Rng& rng) {
  std::vector<int> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  rng.shuffle(idx);
  std::vector<std::vector<int>> batches;
  for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
    batches.emplace_back(idx.begin() + static_cast<long>(start),
                         idx.begin() + static_cast<long>(std::min(n, start + static_cast<size_t>(batch_size))));
  }
  return batches;
}

}  // namespace

std::vector<std::string> split_vocabulary(const std::vector<Clip>& split) {
  std::set<std::string> vocab;
  for (const Clip& c : split) {
    for (const auto& ls : c.ground_truth) vocab.insert(ls.text);
  }
  return {vocab.begin(), vocab.end()};
}

double fvs_map(const search::ScoreMatrix& scores, const std::vector<Clip>& split) {
  const auto judgments = evalkit::build_judgments(split, evalkit::Direction::FVS);
  const auto rankings = search::all_rankings(scores, "fvs");
  return evalkit::evaluate_rankings(rankings.lists, judgments, "dev").map;
}

// ---- FssNetModel ------------------------------------------------------------

FssNetModel::FssNetModel(const RunConfig& cfg, const std::string& prefix)
    : cfg_(cfg),
      trunk_(prefix + ".trunk", cfg.corpus_feature_dim, cfg.model_trunk_hidden,
             cfg.model_trunk_layers),
      detector_(prefix + ".det", 2 * cfg.model_trunk_hidden, stack_spec_from(cfg),
                detector_config_from(cfg)),
      fs_encoder_(prefix + ".fs", 2 * cfg.model_trunk_hidden, cfg.model_fs_hidden,
                  cfg.model_fs_layers, cfg.model_embedding_dim),
      text_encoder_(prefix + ".text", cfg.model_char_embed_dim, cfg.model_text_hidden,
                    cfg.model_text_layers, cfg.model_embedding_dim) {}

void FssNetModel::init(Rng& rng) {
  trunk_.init(rng);
  detector_.init(rng);
  fs_encoder_.init(rng);
  text_encoder_.init(rng);
}

std::vector<nn::Parameter*> FssNetModel::params() {
  std::vector<nn::Parameter*> out;
  trunk_.collect(out);
  detector_.collect(out);
  fs_encoder_.collect(out);
  text_encoder_.collect(out);
  return out;
}

nn::Var FssNetModel::trunk(nn::Graph& g, const MatX& frames) const {
  return trunk_.encode_sequence(g, g.constant(frames.transpose()));
}

MatX FssNetModel::trunk_value(const MatX& frames) const {
  nn::Graph g;
  g.set_inference(true);
  return trunk(g, frames).value();
}

std::vector<detect::Proposal> FssNetModel::propose(const Clip& clip) const {
  return detector_.propose(trunk_value(clip.frames));
}

std::vector<detect::Proposal> FssNetModel::sliding_windows(int T) const {
  const auto grid =
      detect::make_anchor_grid(detector_.stack(), T, detector_.config().anchor_scales);
  std::set<std::pair<int, int>> seen;
  std::vector<detect::Proposal> out;
  for (const auto& a : grid.anchors) {
    if (seen.insert({a.segment.s, a.segment.t}).second) out.push_back({a.segment, 1.0});
  }
  std::sort(out.begin(), out.end(), [](const detect::Proposal& x, const detect::Proposal& y) {
    if (x.segment.s != y.segment.s) return x.segment.s < y.segment.s;
    return x.segment.t < y.segment.t;
  });
  return out;
}

VecX FssNetModel::encode_segment_value(const MatX& trunk_features, const Segment& segment) const {
  nn::Graph g;
  g.set_inference(true);
  return fs_encoder_.encode(g, g.constant(trunk_features), segment).value().col(0);
}

VecX FssNetModel::encode_text_value(const Query& query) const {
  nn::Graph g;
  g.set_inference(true);
  return text_encoder_.encode(g, query).value().col(0);
}

search::ScoreMatrix score_proposal_system(
    const FssNetModel& matcher,
    const std::function<std::vector<detect::Proposal>(const Clip&)>& proposer,
    const std::vector<Clip>& clips, const std::vector<std::string>& vocab, double beta) {
  search::ScoreMatrix m(vocab, clip_ids(clips));
  std::vector<VecX> ex(vocab.size());
  for (size_t w = 0; w < vocab.size(); ++w) {
    ex[w] = matcher.encode_text_value(make_query(vocab[w]));
  }
  for (size_t c = 0; c < clips.size(); ++c) {
    const auto props = proposer(clips[c]);
    const MatX trunk = matcher.trunk_value(clips[c].frames);
    std::vector<VecX> ev;
    ev.reserve(props.size());
    for (const auto& p : props) ev.push_back(matcher.encode_segment_value(trunk, p.segment));
    for (size_t w = 0; w < vocab.size(); ++w) {
      double best = 0.0;
      for (size_t p = 0; p < props.size(); ++p) {
        const double d = 1.0 - ev[p].dot(ex[w]);
        best = std::max(best, search::score_word(props[p].p_det, d, beta));
      }
      m.set(static_cast<int>(w), static_cast<int>(c), best);
    }
  }
  return m;
}

// ---- System base ------------------------------------------------------------

std::vector<evalkit::SegmentPrediction> System::localize(const std::vector<Clip>&) const {
  throw std::runtime_error("system '" + name() + "' does not produce segment predictions");
}

nn::Checkpoint System::checkpoint() {
  nn::Checkpoint ckpt = nn::Checkpoint::from_params(params());
  ckpt.meta["system"] = name();
  std::string echo = config().echo();
  std::replace(echo.begin(), echo.end(), '\n', '|');
  ckpt.meta["config"] = echo;
  ckpt.meta["feature_dim"] = std::to_string(config().corpus_feature_dim);
  return ckpt;
}

void System::restore(const nn::Checkpoint& ckpt) { ckpt.restore(params()); }

// ---- FSS-Net ----------------------------------------------------------------

class FssNetSystem : public System {
 public:
  explicit FssNetSystem(const RunConfig& cfg) : cfg_(cfg), model_(cfg, "fssnet") {}

  std::string name() const override { return "fssnet"; }
  const RunConfig& config() const override { return cfg_; }
  std::vector<nn::Parameter*> params() override { return model_.params(); }

  FssNetModel& model() { return model_; }

  TrainResult train(const synth::Corpus& corpus, Rng& rng) override {
    model_.init(rng);
    return run_training(model_, corpus, cfg_, rng, TrainingMode::Joint, nullptr);
  }

  search::ScoreMatrix score(const std::vector<Clip>& clips,
                            const std::vector<std::string>& vocab) const override {
    if (!cfg_.model_use_proposal_generator) {
      return score_proposal_system(
          model_, [this](const Clip& c) { return model_.sliding_windows(c.n_frames()); }, clips,
          vocab, cfg_.search_beta);
    }
    return score_proposal_system(
        model_, [this](const Clip& c) { return model_.propose(c); }, clips, vocab,
        cfg_.search_beta);
  }

  bool supports_localization() const override { return cfg_.model_use_proposal_generator; }

  std::vector<evalkit::SegmentPrediction> localize(const std::vector<Clip>& clips) const override {
    std::vector<evalkit::SegmentPrediction> out;
    for (const Clip& clip : clips) {
      for (const auto& p : model_.propose(clip)) {
        out.push_back({clip.id, p.segment, p.p_det});
      }
    }
    return out;
  }

  enum class TrainingMode { Joint, DetectorOnly, MatcherOnly };

  /// Shared FSS-style training loop; `external` (matcher-only mode)
  /// supplies frozen proposals for P_k.
  static TrainResult run_training(FssNetModel& model, const synth::Corpus& corpus,
                                  const RunConfig& cfg, Rng& rng, TrainingMode mode,
                                  const FssNetModel* external);

 private:
  RunConfig cfg_;
  FssNetModel model_;
};

TrainResult FssNetSystem::run_training(FssNetModel& model, const synth::Corpus& corpus,
                                       const RunConfig& cfg, Rng& rng, TrainingMode mode,
                                       const FssNetModel* external) {
  TrainResult result;
  nn::Optimizer opt(nn::Optimizer::kind_from_string(cfg.train_optimizer), model.params(),
                    cfg.train_learning_rate);
  nn::PlateauSchedule schedule(cfg.train_plateau_patience);
  const auto det_cfg = detector_config_from(cfg);
  const auto filter_cfg = filter_config_from(cfg);
  const auto match_cfg = match_config_from(cfg);
  const bool use_generator = cfg.model_use_proposal_generator && mode != TrainingMode::MatcherOnly;
  const bool train_detector =
      use_generator && (mode == TrainingMode::DetectorOnly || match_cfg.lambda_det > 0.0);
  const double lambda = mode == TrainingMode::DetectorOnly ? 1.0 : match_cfg.lambda_det;
  const bool train_matcher = mode != TrainingMode::DetectorOnly;
  const std::vector<std::string> dev_vocab = split_vocabulary(corpus.dev);
  BestDevTracker best;
  const std::vector<nn::Parameter*> all_params = model.params();

  for (int epoch = 0; epoch < cfg.train_epochs; ++epoch) {
    double loss_sum = 0.0;
    int n_batches = 0;
    for (const auto& batch : make_batches(corpus.train.size(), cfg.train_batch_size, rng)) {
      nn::Graph g;
      const int B = static_cast<int>(batch.size());
      std::vector<nn::Var> det_losses(static_cast<size_t>(B));
      TripletWorkspace ws;
      for (int b = 0; b < B; ++b) {
        const Clip& clip = corpus.train[static_cast<size_t>(batch[static_cast<size_t>(b)])];
        nn::Var tr = model.trunk(g, clip.frames);
        std::vector<detect::Proposal> proposal_pool;
        if (train_detector) {
          const auto heads = model.detector().forward(g, tr);
          const auto targets = detect::assign_anchors(heads.grid, gt_segments(clip), det_cfg);
          det_losses[static_cast<size_t>(b)] =
              model.detector().detection_loss(g, heads, targets, rng);
          if (train_matcher && filter_cfg.k_per_ground_truth > 0) {
            proposal_pool =
                model.detector().decode_nms(heads.cls.value(), heads.reg.value(), heads.grid);
          }
        } else if (train_matcher && filter_cfg.k_per_ground_truth > 0 && use_generator) {
          proposal_pool = model.propose(clip);
        } else if (train_matcher && filter_cfg.k_per_ground_truth > 0 && external) {
          proposal_pool = external->propose(clip);
        }
        if (!train_matcher) continue;

        std::vector<match::TrainingPair> pk;
        if (!proposal_pool.empty()) {
          pk = match::filter_proposals(proposal_pool, clip.ground_truth, filter_cfg, rng);
        }
        const bool gt_only = !use_generator && !external;
        const auto pairs = match::build_training_pairs(
            clip.ground_truth, gt_only ? std::vector<match::TrainingPair>{} : pk);
        for (const auto& pair : pairs) {
          ws.add(b, pair.text, model.fs_encoder().encode(g, tr, pair.segment));
        }
      }

      std::vector<nn::Var> slot_tri;
      if (train_matcher) slot_tri = ws.build(g, model.text_encoder(), match_cfg, B);

      std::vector<nn::Var> clip_losses;
      for (int b = 0; b < B; ++b) {
        nn::Var tri = train_matcher && slot_tri[static_cast<size_t>(b)].valid()
                          ? slot_tri[static_cast<size_t>(b)]
                          : g.constant(MatX::Zero(1, 1));
        clip_losses.push_back(
            match::total_loss(g, det_losses[static_cast<size_t>(b)], tri, lambda));
      }
      nn::Var batch_loss = nn::scale(sum_vars(g, clip_losses), 1.0 / std::max(1, B));
      loss_sum += batch_loss.scalar();
      ++n_batches;
      if (g.needs_grad(batch_loss.id)) {
        g.backward(batch_loss);
        opt.step();
        opt.zero_grad();
      }
    }

    TrainLogEntry entry;
    entry.epoch = epoch;
    entry.train_loss = n_batches ? loss_sum / n_batches : 0.0;
    entry.learning_rate = opt.learning_rate();
    if (!corpus.dev.empty() && (mode == TrainingMode::DetectorOnly || !dev_vocab.empty())) {
      if (mode == TrainingMode::DetectorOnly) {
        // detector phase is scheduled on dev localization quality
        std::vector<evalkit::SegmentPrediction> preds;
        for (const Clip& clip : corpus.dev) {
          for (const auto& p : model.propose(clip)) preds.push_back({clip.id, p.segment, p.p_det});
        }
        entry.dev_map =
            evalkit::ap_at_iou(preds, evalkit::ground_truth_segments(corpus.dev), 0.5);
      } else {
        std::function<std::vector<detect::Proposal>(const Clip&)> proposer;
        if (external) {
          proposer = [external](const Clip& c) { return external->propose(c); };
        } else if (!use_generator) {
          proposer = [&model](const Clip& c) { return model.sliding_windows(c.n_frames()); };
        } else {
          proposer = [&model](const Clip& c) { return model.propose(c); };
        }
        entry.dev_map = fvs_map(
            score_proposal_system(model, proposer, corpus.dev, dev_vocab, cfg.search_beta),
            corpus.dev);
      }
      schedule.observe(entry.dev_map, opt);
      best.observe(entry.dev_map, all_params);
    }
    result.log.push_back(entry);
  }
  best.restore(all_params);
  return result;
}

// ---- Whole-clip -------------------------------------------------------------

class WholeClipSystem : public System {
 public:
  explicit WholeClipSystem(const RunConfig& cfg)
      : cfg_(cfg),
        trunk_("wholeclip.trunk", cfg.corpus_feature_dim, cfg.model_trunk_hidden,
               cfg.model_trunk_layers),
        encoder_("wholeclip.fs", 2 * cfg.model_trunk_hidden, cfg.model_fs_hidden,
                 cfg.model_fs_layers, cfg.model_embedding_dim),
        text_("wholeclip.text", cfg.model_char_embed_dim, cfg.model_text_hidden,
              cfg.model_text_layers, cfg.model_embedding_dim) {}

  std::string name() const override { return "wholeclip"; }
  const RunConfig& config() const override { return cfg_; }

  std::vector<nn::Parameter*> params() override {
    std::vector<nn::Parameter*> out;
    trunk_.collect(out);
    encoder_.collect(out);
    text_.collect(out);
    return out;
  }

  TrainResult train(const synth::Corpus& corpus, Rng& rng) override {
    Rng init_rng = rng.fork(0x77);
    trunk_.init(init_rng);
    encoder_.init(init_rng);
    text_.init(init_rng);
    TrainResult result;
    nn::Optimizer opt(nn::Optimizer::kind_from_string(cfg_.train_optimizer), params(),
                      cfg_.train_learning_rate);
    nn::PlateauSchedule schedule(cfg_.train_plateau_patience);
    const auto match_cfg = match_config_from(cfg_);
    const auto dev_vocab = split_vocabulary(corpus.dev);
    BestDevTracker best;
    const std::vector<nn::Parameter*> all_params = params();

    for (int epoch = 0; epoch < cfg_.train_epochs; ++epoch) {
      double loss_sum = 0.0;
      int n_batches = 0;
      for (const auto& batch : make_batches(corpus.train.size(), cfg_.train_batch_size, rng)) {
        nn::Graph g;
        const int B = static_cast<int>(batch.size());
        TripletWorkspace ws;
        for (int b = 0; b < B; ++b) {
          const Clip& clip = corpus.train[static_cast<size_t>(batch[static_cast<size_t>(b)])];
          nn::Var tr = trunk_.encode_sequence(g, g.constant(clip.frames.transpose()));
          nn::Var ev = encoder_.encode(g, tr, Segment(0, clip.n_frames()));
          std::set<std::string> words;
          for (const auto& ls : clip.ground_truth) words.insert(ls.text);
          for (const auto& w : words) ws.add(b, w, ev);
        }
        auto slot_tri = ws.build(g, text_, match_cfg, B);
        std::vector<nn::Var> clip_losses;
        for (int b = 0; b < B; ++b) {
          clip_losses.push_back(slot_tri[static_cast<size_t>(b)].valid()
                                    ? slot_tri[static_cast<size_t>(b)]
                                    : g.constant(MatX::Zero(1, 1)));
        }
        nn::Var batch_loss = nn::scale(sum_vars(g, clip_losses), 1.0 / std::max(1, B));
        loss_sum += batch_loss.scalar();
        ++n_batches;
        if (g.needs_grad(batch_loss.id)) {
          g.backward(batch_loss);
          opt.step();
          opt.zero_grad();
        }
      }
      TrainLogEntry entry;
      entry.epoch = epoch;
      entry.train_loss = n_batches ? loss_sum / n_batches : 0.0;
      entry.learning_rate = opt.learning_rate();
      if (!corpus.dev.empty() && !dev_vocab.empty()) {
        entry.dev_map = fvs_map(score(corpus.dev, dev_vocab), corpus.dev);
        schedule.observe(entry.dev_map, opt);
        best.observe(entry.dev_map, all_params);
      }
      result.log.push_back(entry);
    }
    best.restore(all_params);
    return result;
  }

  search::ScoreMatrix score(const std::vector<Clip>& clips,
                            const std::vector<std::string>& vocab) const override {
    search::ScoreMatrix m(vocab, clip_ids(clips));
    std::vector<VecX> ex(vocab.size());
    for (size_t w = 0; w < vocab.size(); ++w) {
      nn::Graph g;
      g.set_inference(true);
      ex[w] = text_.encode(g, make_query(vocab[w])).value().col(0);
    }
    for (size_t c = 0; c < clips.size(); ++c) {
      nn::Graph g;
      g.set_inference(true);
      nn::Var tr = trunk_.encode_sequence(g, g.constant(clips[c].frames.transpose()));
      const VecX ev = encoder_.encode(g, tr, Segment(0, clips[c].n_frames())).value().col(0);
      for (size_t w = 0; w < vocab.size(); ++w) {
        m.set(static_cast<int>(w), static_cast<int>(c), std::max(0.0, ev.dot(ex[w])));
      }
    }
    return m;
  }

 private:
  RunConfig cfg_;
  nn::BiRecurrentEncoder trunk_;
  match::SegmentEncoder encoder_;
  match::TextEncoder text_;
};

// ---- Attn-KWS ---------------------------------------------------------------

class AttnKwsSystem : public System {
 public:
  explicit AttnKwsSystem(const RunConfig& cfg)
      : cfg_(cfg),
        trunk_("attnkws.trunk", cfg.corpus_feature_dim, cfg.model_trunk_hidden,
               cfg.model_trunk_layers),
        frame_proj_("attnkws.frameproj", 2 * cfg.model_trunk_hidden, cfg.model_embedding_dim),
        text_("attnkws.text", cfg.model_char_embed_dim, cfg.model_text_hidden,
              cfg.model_text_layers, cfg.model_embedding_dim),
        alpha_("attnkws.alpha", 1, 1),
        theta_("attnkws.theta", 1, 1),
        out_("attnkws.out", cfg.model_embedding_dim, 1) {
    alpha_.value(0, 0) = 1.0;
    theta_.value(0, 0) = 0.0;
  }

  std::string name() const override { return "attnkws"; }
  const RunConfig& config() const override { return cfg_; }

  std::vector<nn::Parameter*> params() override {
    std::vector<nn::Parameter*> out;
    trunk_.collect(out);
    frame_proj_.collect(out);
    text_.collect(out);
    out.push_back(&alpha_);
    out.push_back(&theta_);
    out_.collect(out);
    return out;
  }

  struct Forward {
    nn::Var attention;  // T x 1
    nn::Var logit;      // 1 x 1
  };

  Forward forward(nn::Graph& g, nn::Var trunk_seq, const Query& query) const {
    nn::Var ev = frame_proj_.apply(g, trunk_seq);  // e x T
    const auto fwd = baselines::attn_kws_forward(g, ev, text_.encode(g, query), g.param(alpha_),
                                                 g.param(theta_), g.param(out_.weight()),
                                                 g.param(out_.bias()));
    return {fwd.attention, fwd.logit};
  }

  TrainResult train(const synth::Corpus& corpus, Rng& rng) override {
    Rng init_rng = rng.fork(0x99);
    trunk_.init(init_rng);
    frame_proj_.init(init_rng);
    text_.init(init_rng);
    out_.init(init_rng);
    TrainResult result;
    nn::Optimizer opt(nn::Optimizer::kind_from_string(cfg_.train_optimizer), params(),
                      cfg_.train_learning_rate);
    nn::PlateauSchedule schedule(cfg_.train_plateau_patience);
    const auto train_vocab = split_vocabulary(corpus.train);
    const auto dev_vocab = split_vocabulary(corpus.dev);
    BestDevTracker best;
    const std::vector<nn::Parameter*> all_params = params();

    for (int epoch = 0; epoch < cfg_.train_epochs; ++epoch) {
      double loss_sum = 0.0;
      int n_batches = 0;
      for (const auto& batch : make_batches(corpus.train.size(), cfg_.train_batch_size, rng)) {
        nn::Graph g;
        std::vector<nn::Var> logits;
        std::vector<double> labels;
        for (int ci : batch) {
          const Clip& clip = corpus.train[static_cast<size_t>(ci)];
          nn::Var tr = trunk_.encode_sequence(g, g.constant(clip.frames.transpose()));
          std::set<std::string> pos_words;
          for (const auto& ls : clip.ground_truth) pos_words.insert(ls.text);
          for (const auto& w : pos_words) {
            logits.push_back(forward(g, tr, make_query(w)).logit);
            labels.push_back(1.0);
            for (int n = 0; n < cfg_.train_attn_negatives; ++n) {
              const std::string& neg =
                  train_vocab[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(train_vocab.size()) - 1))];
              if (pos_words.count(neg)) continue;
              logits.push_back(forward(g, tr, make_query(neg)).logit);
              labels.push_back(0.0);
            }
          }
        }
        if (logits.empty()) continue;
        MatX label_mat(1, static_cast<long>(labels.size()));
        for (size_t i = 0; i < labels.size(); ++i) label_mat(0, static_cast<long>(i)) = labels[i];
        nn::Var loss = nn::bce_with_logits_mean(nn::hcat(logits), label_mat);
        loss_sum += loss.scalar();
        ++n_batches;
        g.backward(loss);
        opt.step();
        opt.zero_grad();
      }
      TrainLogEntry entry;
      entry.epoch = epoch;
      entry.train_loss = n_batches ? loss_sum / n_batches : 0.0;
      entry.learning_rate = opt.learning_rate();
      if (!corpus.dev.empty() && !dev_vocab.empty()) {
        entry.dev_map = fvs_map(score(corpus.dev, dev_vocab), corpus.dev);
        schedule.observe(entry.dev_map, opt);
        best.observe(entry.dev_map, all_params);
      }
      result.log.push_back(entry);
    }
    best.restore(all_params);
    return result;
  }

  search::ScoreMatrix score(const std::vector<Clip>& clips,
                            const std::vector<std::string>& vocab) const override {
    search::ScoreMatrix m(vocab, clip_ids(clips));
    for (size_t c = 0; c < clips.size(); ++c) {
      nn::Graph g;
      g.set_inference(true);
      nn::Var tr = trunk_.encode_sequence(g, g.constant(clips[c].frames.transpose()));
      for (size_t w = 0; w < vocab.size(); ++w) {
        const double logit = forward(g, tr, make_query(vocab[w])).logit.scalar();
        m.set(static_cast<int>(w), static_cast<int>(c), 1.0 / (1.0 + std::exp(-logit)));
      }
    }
    return m;
  }

  bool supports_localization() const override { return true; }

  /// Attention vectors of each clip's own words, thresholded into segments.
  std::vector<evalkit::SegmentPrediction> localize(const std::vector<Clip>& clips) const override {
    std::vector<evalkit::SegmentPrediction> out;
    for (const Clip& clip : clips) {
      nn::Graph g;
      g.set_inference(true);
      nn::Var tr = trunk_.encode_sequence(g, g.constant(clip.frames.transpose()));
      std::set<std::string> words;
      for (const auto& ls : clip.ground_truth) words.insert(ls.text);
      for (const auto& w : words) {
        const VecX attention = forward(g, tr, make_query(w)).attention.value().col(0);
        for (const auto& seg : baselines::attention_to_segments(attention, cfg_.train_tau_attention)) {
          out.push_back({clip.id, seg.segment, seg.p_det});
        }
      }
    }
    return out;
  }

 private:
  RunConfig cfg_;
  nn::BiRecurrentEncoder trunk_;
  nn::Linear frame_proj_;
  match::TextEncoder text_;
  mutable nn::Parameter alpha_, theta_;
  nn::Linear out_;
};

// ---- Recognizer -------------------------------------------------------------

class RecognizerSystem : public System {
 public:
  explicit RecognizerSystem(const RunConfig& cfg)
      : cfg_(cfg),
        trunk_("recognizer.trunk", cfg.corpus_feature_dim, cfg.model_trunk_hidden,
               cfg.model_trunk_layers),
        head_("recognizer.head", 2 * cfg.model_trunk_hidden,
              Alphabet::instance().total_symbols()) {}

  std::string name() const override { return "recognizer"; }
  const RunConfig& config() const override { return cfg_; }

  std::vector<nn::Parameter*> params() override {
    std::vector<nn::Parameter*> out;
    trunk_.collect(out);
    head_.collect(out);
    return out;
  }

  TrainResult train(const synth::Corpus& corpus, Rng& rng) override {
    Rng init_rng = rng.fork(0x55);
    trunk_.init(init_rng);
    head_.init(init_rng);
    TrainResult result;
    nn::Optimizer opt(nn::Optimizer::kind_from_string(cfg_.train_optimizer), params(),
                      cfg_.train_learning_rate);
    nn::PlateauSchedule schedule(cfg_.train_plateau_patience);
    const int blank = Alphabet::instance().blank_index();
    const auto dev_vocab = split_vocabulary(corpus.dev);
    BestDevTracker best;
    const std::vector<nn::Parameter*> all_params = params();

    for (int epoch = 0; epoch < cfg_.train_epochs; ++epoch) {
      double loss_sum = 0.0;
      int n_batches = 0;
      for (const auto& batch : make_batches(corpus.train.size(), cfg_.train_batch_size, rng)) {
        nn::Graph g;
        std::vector<nn::Var> losses;
        for (int ci : batch) {
          const Clip& clip = corpus.train[static_cast<size_t>(ci)];
          nn::Var tr = trunk_.encode_sequence(g, g.constant(clip.frames.transpose()));
          nn::Var logits = head_.apply(g, tr);
          losses.push_back(baselines::ctc_loss(g, logits, baselines::ctc_transcript(clip), blank));
        }
        nn::Var loss = nn::scale(sum_vars(g, losses), 1.0 / std::max<size_t>(1, losses.size()));
        loss_sum += loss.scalar();
        ++n_batches;
        g.backward(loss);
        opt.step();
        opt.zero_grad();
      }
      TrainLogEntry entry;
      entry.epoch = epoch;
      entry.train_loss = n_batches ? loss_sum / n_batches : 0.0;
      entry.learning_rate = opt.learning_rate();
      if (!corpus.dev.empty() && !dev_vocab.empty()) {
        entry.dev_map = fvs_map(score(corpus.dev, dev_vocab), corpus.dev);
        schedule.observe(entry.dev_map, opt);
        best.observe(entry.dev_map, all_params);
      }
      result.log.push_back(entry);
    }
    best.restore(all_params);
    return result;
  }

  search::ScoreMatrix score(const std::vector<Clip>& clips,
                            const std::vector<std::string>& vocab) const override {
    search::ScoreMatrix m(vocab, clip_ids(clips));
    const int blank = Alphabet::instance().blank_index();
    for (size_t c = 0; c < clips.size(); ++c) {
      nn::Graph g;
      g.set_inference(true);
      nn::Var tr = trunk_.encode_sequence(g, g.constant(clips[c].frames.transpose()));
      const MatX logits = head_.apply(g, tr).value();
      const auto hyps = baselines::prefix_beam_search(logits, cfg_.train_beam_width, blank);
      for (size_t w = 0; w < vocab.size(); ++w) {
        m.set(static_cast<int>(w), static_cast<int>(c),
              baselines::recognizer_score(hyps, make_query(vocab[w])));
      }
    }
    return m;
  }

 private:
  RunConfig cfg_;
  nn::BiRecurrentEncoder trunk_;
  nn::Linear head_;
};

// ---- Ext-Det ----------------------------------------------------------------

class ExtDetSystem : public System {
 public:
  explicit ExtDetSystem(const RunConfig& cfg)
      : cfg_(cfg), det_model_(cfg, "extdet.det"), match_model_(cfg, "extdet.match") {}

  std::string name() const override { return "extdet"; }
  const RunConfig& config() const override { return cfg_; }

  std::vector<nn::Parameter*> params() override {
    auto out = det_model_.params();
    const auto m = match_model_.params();
    out.insert(out.end(), m.begin(), m.end());
    return out;
  }

  TrainResult train(const synth::Corpus& corpus, Rng& rng) override {
    det_model_.init(rng);
    match_model_.init(rng);
    // The epoch budget covers both phases, so the comparison against the
    // jointly trained model is compute-matched.
    RunConfig det_cfg = cfg_;
    det_cfg.train_epochs = (cfg_.train_epochs + 1) / 2;
    RunConfig match_cfg = cfg_;
    match_cfg.train_epochs = cfg_.train_epochs - det_cfg.train_epochs;
    // Phase 1: detector alone (detection loss only), then frozen.
    TrainResult det_log = FssNetSystem::run_training(
        det_model_, corpus, det_cfg, rng, FssNetSystem::TrainingMode::DetectorOnly, nullptr);
    // Phase 2: matcher trained on the frozen detector's proposals.
    TrainResult match_log = FssNetSystem::run_training(
        match_model_, corpus, match_cfg, rng, FssNetSystem::TrainingMode::MatcherOnly,
        &det_model_);
    TrainResult result;
    result.log = det_log.log;
    for (auto entry : match_log.log) {
      entry.epoch += static_cast<int>(det_log.log.size());
      result.log.push_back(entry);
    }
    return result;
  }

  search::ScoreMatrix score(const std::vector<Clip>& clips,
                            const std::vector<std::string>& vocab) const override {
    return score_proposal_system(
        match_model_, [this](const Clip& c) { return det_model_.propose(c); }, clips, vocab,
        cfg_.search_beta);
  }

  bool supports_localization() const override { return true; }

  std::vector<evalkit::SegmentPrediction> localize(const std::vector<Clip>& clips) const override {
    std::vector<evalkit::SegmentPrediction> out;
    for (const Clip& clip : clips) {
      for (const auto& p : det_model_.propose(clip)) out.push_back({clip.id, p.segment, p.p_det});
    }
    return out;
  }

  const FssNetModel& detector_model() const { return det_model_; }
  const FssNetModel& matcher_model() const { return match_model_; }

 private:
  RunConfig cfg_;
  FssNetModel det_model_;
  FssNetModel match_model_;
};

// ---- factory ----------------------------------------------------------------

std::unique_ptr<System> make_system(const std::string& system, const RunConfig& cfg) {
  if (system == "fssnet") return std::make_unique<FssNetSystem>(cfg);
  if (system == "recognizer") return std::make_unique<RecognizerSystem>(cfg);
  if (system == "wholeclip") return std::make_unique<WholeClipSystem>(cfg);
  if (system == "attnkws") return std::make_unique<AttnKwsSystem>(cfg);
  if (system == "extdet") return std::make_unique<ExtDetSystem>(cfg);
  throw std::invalid_argument(
      "unknown system '" + system +
      "' (expected fssnet|recognizer|wholeclip|attnkws|extdet)");
}

std::unique_ptr<System> load_system(const nn::Checkpoint& ckpt, const synth::Corpus& corpus) {
  const std::string system = ckpt.meta_or("system", "");
  if (system.empty()) throw std::runtime_error("checkpoint has no 'system' metadata");
  std::string echo = ckpt.meta_or("config", "");
  if (echo.empty()) throw std::runtime_error("checkpoint has no 'config' metadata");
  std::replace(echo.begin(), echo.end(), '|', '\n');
  const RunConfig cfg = RunConfig::parse(echo, "checkpoint config");
  if (cfg.corpus_feature_dim != corpus.config.feature_dim) {
    throw std::runtime_error(
        "checkpoint/corpus dimension mismatch: model expects feature_dim " +
        std::to_string(cfg.corpus_feature_dim) + ", corpus has " +
        std::to_string(corpus.config.feature_dim));
  }
  auto sys = make_system(system, cfg);
  sys->restore(ckpt);
  return sys;
}

}  // namespace fss::systems
