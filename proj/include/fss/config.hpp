#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fss {

/// Every tunable in one flat struct.  Keys are dotted lowercase names in
/// human-editable "key = value" files; unknown keys are rejected.  All
/// randomness in a run flows from the single root `seed`.
struct RunConfig {
  uint64_t seed = 1;

  // corpus
  int corpus_feature_dim = 64;
  int corpus_clip_len = 300;
  int corpus_overlap = 75;
  int corpus_n_train_clips = 500;
  int corpus_n_dev_clips = 60;
  int corpus_n_test_clips = 100;
  int corpus_lexicon_size = 120;
  int corpus_letter_dur_min = 2;
  int corpus_letter_dur_max = 6;
  double corpus_noise_sigma = 0.3;
  double corpus_fs_segments_per_clip_mean = 1.9;
  double corpus_test_only_word_fraction = 0.2;
  int corpus_n_distractor_prototypes = 40;
  int corpus_word_len_min = 2;
  int corpus_word_len_max = 8;
  double corpus_special_char_prob = 0.1;

  // model
  int model_trunk_hidden = 32;
  int model_trunk_layers = 1;
  int model_fs_hidden = 32;
  int model_fs_layers = 1;
  int model_text_hidden = 32;
  int model_text_layers = 1;
  int model_char_embed_dim = 16;
  int model_embedding_dim = 32;
  int model_conv1_channels = 96;
  int model_conv1_kernel = 8;
  int model_pool_kernel = 8;
  int model_pool_stride = 4;
  int model_conv2_channels = 64;
  int model_conv2_kernel = 3;
  int model_conv3_channels = 64;
  int model_conv3_kernel = 3;
  std::vector<int> model_anchor_scales = {1,  2,  3,  4,  5,  6,  7,  8,  9,  10,
                                          12, 14, 16, 18, 20, 24, 32, 40, 60, 75};
  // false: no temporal proposal generator; training uses ground-truth
  // segments only and inference scores every sliding-window anchor
  bool model_use_proposal_generator = true;

  // detector
  double detector_iou_positive = 0.6;
  double detector_iou_negative = 0.3;
  int detector_neg_pos_ratio = 3;
  double detector_nms_iou = 0.7;
  int detector_max_proposals = 50;
  int detector_pre_nms_top = 200;
  double detector_reg_weight = 3.0;
  double detector_reg_huber_delta = 1.0;

  // proposal filtering (training positives)
  double filter_delta_iou = 0.8;
  double filter_delta_is = 0.8;
  int filter_k_per_ground_truth = 4;

  // matching
  double match_margin = 0.45;
  int match_neg_cap_visual = 5;
  int match_neg_cap_word = 5;
  double match_lambda_det = 0.1;

  // search
  double search_beta = 1.0;

  // training
  int train_epochs = 25;
  int train_batch_size = 8;
  double train_learning_rate = 0.001;
  std::string train_optimizer = "adam";  // adam | sgd
  int train_plateau_patience = 3;
  int train_attn_negatives = 5;
  int train_beam_width = 10;
  double train_tau_attention = 0.5;

  /// Set one field by its dotted key.  Throws on unknown key or bad value.
  void set(const std::string& key, const std::string& value);

  /// Canonical echo: one "key = value" line per field, sorted by key.
  std::string echo() const;

  /// Throws std::invalid_argument when any cross-field invariant fails.
  void validate() const;

  static RunConfig load(const std::filesystem::path& path,
                        const std::vector<std::string>& overrides = {});

  /// Parse "key = value" lines from a string (source_name only names parse
  /// errors).
  static RunConfig parse(const std::string& text, const std::string& source_name,
                         const std::vector<std::string>& overrides = {});

  /// Parse "key=value" override strings (from --set flags) on top of *this.
  void apply_overrides(const std::vector<std::string>& overrides);
};

}  // namespace fss
