#pragma once

#include "fss/baselines.hpp"
#include "fss/config.hpp"
#include "fss/corpus.hpp"
#include "fss/detector.hpp"
#include "fss/evalkit.hpp"
#include "fss/matcher.hpp"
#include "fss/nn/checkpoint.hpp"
#include "fss/nn/layers.hpp"
#include "fss/nn/optim.hpp"
#include "fss/search.hpp"

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace fss::systems {

struct TrainLogEntry {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_map = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
};

/// Joint detection + matching model: shared recurrent trunk feeding the
/// proposal generator, the segment encoder and (via queries) the text
/// encoder.  Also serves as the detector-only and matcher-only halves of
/// the external-detector baseline.
class FssNetModel {
 public:
  FssNetModel(const RunConfig& cfg, const std::string& prefix);

  void init(Rng& rng);
  std::vector<nn::Parameter*> params();

  nn::Var trunk(nn::Graph& g, const MatX& frames) const;  // frames: T x D
  MatX trunk_value(const MatX& frames) const;

  const detect::Detector& detector() const { return detector_; }
  detect::Detector& detector() { return detector_; }
  const match::SegmentEncoder& fs_encoder() const { return fs_encoder_; }
  const match::TextEncoder& text_encoder() const { return text_encoder_; }

  std::vector<detect::Proposal> propose(const Clip& clip) const;
  /// Every distinct clipped anchor with p_det = 1 (the sliding-window pool).
  std::vector<detect::Proposal> sliding_windows(int T) const;

  VecX encode_segment_value(const MatX& trunk_features, const Segment& segment) const;
  VecX encode_text_value(const Query& query) const;

  const RunConfig& config() const { return cfg_; }

 private:
  RunConfig cfg_;
  nn::BiRecurrentEncoder trunk_;
  detect::Detector detector_;
  match::SegmentEncoder fs_encoder_;
  match::TextEncoder text_encoder_;
  friend class FssNetSystem;
  friend class ExtDetSystem;
};

/// Scores every (clip, word) pair the Eq.-style way: proposals from
/// `proposer`, embeddings from `matcher`, sc = max over proposals of
/// p_det^beta (1 - d)+.
search::ScoreMatrix score_proposal_system(
    const FssNetModel& matcher,
    const std::function<std::vector<detect::Proposal>(const Clip&)>& proposer,
    const std::vector<Clip>& clips, const std::vector<std::string>& vocab, double beta);

/// Uniform train/score interface consumed by the CLI and the acceptance
/// suite.
class System {
 public:
  virtual ~System() = default;
  virtual std::string name() const = 0;
  virtual const RunConfig& config() const = 0;
  virtual TrainResult train(const synth::Corpus& corpus, Rng& rng) = 0;
  virtual search::ScoreMatrix score(const std::vector<Clip>& clips,
                                    const std::vector<std::string>& vocab) const = 0;
  virtual std::vector<nn::Parameter*> params() = 0;

  virtual bool supports_localization() const { return false; }
  virtual std::vector<evalkit::SegmentPrediction> localize(const std::vector<Clip>&) const;

  nn::Checkpoint checkpoint();
  void restore(const nn::Checkpoint& ckpt);
};

/// system: fssnet | recognizer | wholeclip | attnkws | extdet.
std::unique_ptr<System> make_system(const std::string& system, const RunConfig& cfg);

/// Verifies the checkpoint was written by `system` with dimensions matching
/// the corpus, then builds and restores the model.
std::unique_ptr<System> load_system(const nn::Checkpoint& ckpt, const synth::Corpus& corpus);

/// FVS mAP of a score matrix against a split (the dev-set training metric).
double fvs_map(const search::ScoreMatrix& scores, const std::vector<Clip>& split);

/// Sorted ground-truth vocabulary of a split.
std::vector<std::string> split_vocabulary(const std::vector<Clip>& split);

}  // namespace fss::systems
