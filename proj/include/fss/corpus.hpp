#pragma once

#include "fss/config.hpp"
#include "fss/core.hpp"
#include "fss/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fss::synth {

/// Knobs for the synthetic stand-in corpus: letter-prototype feature runs
/// embedded in distractor "signing", with exact ground-truth boundaries.
struct CorpusConfig {
  uint64_t seed = 1;
  int feature_dim = 64;
  int clip_len = 300;
  int overlap = 75;  // chunking overlap of the mirrored source data; recorded in files
  int n_train_clips = 500;
  int n_dev_clips = 60;
  int n_test_clips = 100;
  int lexicon_size = 120;
  int letter_dur_min = 2;
  int letter_dur_max = 6;
  double noise_sigma = 0.3;
  double fs_segments_per_clip_mean = 1.9;
  double test_only_word_fraction = 0.2;
  int n_distractor_prototypes = 40;
  int word_len_min = 2;
  int word_len_max = 8;
  double special_char_prob = 0.1;

  void validate() const;
  bool operator==(const CorpusConfig&) const = default;
};

CorpusConfig corpus_config_from(const RunConfig& run);

struct LexiconEntry {
  std::string word;
  bool test_only = false;

  bool operator==(const LexiconEntry&) const = default;
};

struct Corpus {
  CorpusConfig config;
  std::vector<LexiconEntry> lexicon;
  MatX letter_prototypes;      // feature_dim x alphabet characters
  MatX distractor_prototypes;  // feature_dim x n_distractor_prototypes
  std::vector<Clip> train, dev, test;

  const std::vector<Clip>& split(const std::string& name) const;
};

bool operator==(const Corpus& a, const Corpus& b);

/// Deterministic given config.seed; every clip is generated from its own
/// derived stream, so corpus contents do not depend on generation order.
Corpus generate(const CorpusConfig& config);

void save(const Corpus& corpus, const std::filesystem::path& path);
Corpus load(const std::filesystem::path& path);

}  // namespace fss::synth
