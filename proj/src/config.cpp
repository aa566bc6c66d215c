#include "fss/config.hpp"

#include "fss/io.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fss {

namespace {

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

int parse_int(const std::string& v) {
  size_t pos = 0;
  const long long x = std::stoll(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters in integer '" + v + "'");
  return static_cast<int>(x);
}

uint64_t parse_u64(const std::string& v) {
  size_t pos = 0;
  const unsigned long long x = std::stoull(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters in integer '" + v + "'");
  return x;
}

double parse_double(const std::string& v) {
  size_t pos = 0;
  const double x = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters in number '" + v + "'");
  return x;
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  for (const auto& part : io::split(v, ',')) {
    if (part.empty()) throw std::invalid_argument("empty element in list '" + v + "'");
    out.push_back(parse_int(part));
  }
  return out;
}

std::string render_int_list(const std::vector<int>& xs) {
  std::vector<std::string> parts;
  parts.reserve(xs.size());
  for (int x : xs) parts.push_back(std::to_string(x));
  return io::join(parts, ',');
}

#define INT_FIELD(key, member)                                                 \
  {key,                                                                        \
   {[](const RunConfig& c) { return std::to_string(c.member); },               \
    [](RunConfig& c, const std::string& v) { c.member = parse_int(v); }}}

#define DOUBLE_FIELD(key, member)                                              \
  {key,                                                                        \
   {[](const RunConfig& c) { return io::format_exact(c.member); },             \
    [](RunConfig& c, const std::string& v) { c.member = parse_double(v); }}}

const std::map<std::string, Field>& field_table() {
  static const std::map<std::string, Field> table = {
      {"seed",
       {[](const RunConfig& c) { return std::to_string(c.seed); },
        [](RunConfig& c, const std::string& v) { c.seed = parse_u64(v); }}},
      INT_FIELD("corpus.feature_dim", corpus_feature_dim),
      INT_FIELD("corpus.clip_len", corpus_clip_len),
      INT_FIELD("corpus.overlap", corpus_overlap),
      INT_FIELD("corpus.n_train_clips", corpus_n_train_clips),
      INT_FIELD("corpus.n_dev_clips", corpus_n_dev_clips),
      INT_FIELD("corpus.n_test_clips", corpus_n_test_clips),
      INT_FIELD("corpus.lexicon_size", corpus_lexicon_size),
      INT_FIELD("corpus.letter_dur_min", corpus_letter_dur_min),
      INT_FIELD("corpus.letter_dur_max", corpus_letter_dur_max),
      DOUBLE_FIELD("corpus.noise_sigma", corpus_noise_sigma),
      DOUBLE_FIELD("corpus.fs_segments_per_clip_mean", corpus_fs_segments_per_clip_mean),
      DOUBLE_FIELD("corpus.test_only_word_fraction", corpus_test_only_word_fraction),
      INT_FIELD("corpus.n_distractor_prototypes", corpus_n_distractor_prototypes),
      INT_FIELD("corpus.word_len_min", corpus_word_len_min),
      INT_FIELD("corpus.word_len_max", corpus_word_len_max),
      DOUBLE_FIELD("corpus.special_char_prob", corpus_special_char_prob),
      INT_FIELD("model.trunk_hidden", model_trunk_hidden),
      INT_FIELD("model.trunk_layers", model_trunk_layers),
      INT_FIELD("model.fs_hidden", model_fs_hidden),
      INT_FIELD("model.fs_layers", model_fs_layers),
      INT_FIELD("model.text_hidden", model_text_hidden),
      INT_FIELD("model.text_layers", model_text_layers),
      INT_FIELD("model.char_embed_dim", model_char_embed_dim),
      INT_FIELD("model.embedding_dim", model_embedding_dim),
      INT_FIELD("model.conv1_channels", model_conv1_channels),
      INT_FIELD("model.conv1_kernel", model_conv1_kernel),
      INT_FIELD("model.pool_kernel", model_pool_kernel),
      INT_FIELD("model.pool_stride", model_pool_stride),
      INT_FIELD("model.conv2_channels", model_conv2_channels),
      INT_FIELD("model.conv2_kernel", model_conv2_kernel),
      INT_FIELD("model.conv3_channels", model_conv3_channels),
      INT_FIELD("model.conv3_kernel", model_conv3_kernel),
      {"model.anchor_scales",
       {[](const RunConfig& c) { return render_int_list(c.model_anchor_scales); },
        [](RunConfig& c, const std::string& v) { c.model_anchor_scales = parse_int_list(v); }}},
      {"model.use_proposal_generator",
       {[](const RunConfig& c) { return c.model_use_proposal_generator ? std::string("true")
                                                                       : std::string("false"); },
        [](RunConfig& c, const std::string& v) {
          if (v != "true" && v != "false") {
            throw std::invalid_argument("model.use_proposal_generator must be true or false");
          }
          c.model_use_proposal_generator = v == "true";
        }}},
      DOUBLE_FIELD("detector.iou_positive", detector_iou_positive),
      DOUBLE_FIELD("detector.iou_negative", detector_iou_negative),
      INT_FIELD("detector.neg_pos_ratio", detector_neg_pos_ratio),
      DOUBLE_FIELD("detector.nms_iou", detector_nms_iou),
      INT_FIELD("detector.max_proposals", detector_max_proposals),
      INT_FIELD("detector.pre_nms_top", detector_pre_nms_top),
      DOUBLE_FIELD("detector.reg_weight", detector_reg_weight),
      DOUBLE_FIELD("detector.reg_huber_delta", detector_reg_huber_delta),
      DOUBLE_FIELD("filter.delta_iou", filter_delta_iou),
      DOUBLE_FIELD("filter.delta_is", filter_delta_is),
      INT_FIELD("filter.k_per_ground_truth", filter_k_per_ground_truth),
      DOUBLE_FIELD("match.margin", match_margin),
      INT_FIELD("match.neg_cap_visual", match_neg_cap_visual),
      INT_FIELD("match.neg_cap_word", match_neg_cap_word),
      DOUBLE_FIELD("match.lambda_det", match_lambda_det),
      DOUBLE_FIELD("search.beta", search_beta),
      INT_FIELD("train.epochs", train_epochs),
      INT_FIELD("train.batch_size", train_batch_size),
      DOUBLE_FIELD("train.learning_rate", train_learning_rate),
      {"train.optimizer",
       {[](const RunConfig& c) { return c.train_optimizer; },
        [](RunConfig& c, const std::string& v) {
          if (v != "adam" && v != "sgd") {
            throw std::invalid_argument("train.optimizer must be adam or sgd, got '" + v + "'");
          }
          c.train_optimizer = v;
        }}},
      INT_FIELD("train.plateau_patience", train_plateau_patience),
      INT_FIELD("train.attn_negatives", train_attn_negatives),
      INT_FIELD("train.beam_width", train_beam_width),
      DOUBLE_FIELD("train.tau_attention", train_tau_attention),
  };
  return table;
}

#undef INT_FIELD
#undef DOUBLE_FIELD

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& table = field_table();
  const auto it = table.find(key);
  if (it == table.end()) {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
  it->second.set(*this, value);
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& [key, field] : field_table()) {
    out += key;
    out += " = ";
    out += field.get(*this);
    out += '\n';
  }
  return out;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (corpus_clip_len <= corpus_overlap || corpus_overlap < 0) {
    fail("require clip_len > overlap >= 0");
  }
  if (corpus_letter_dur_min < 1 || corpus_letter_dur_max < corpus_letter_dur_min) {
    fail("require 1 <= letter_dur_min <= letter_dur_max");
  }
  if (corpus_noise_sigma < 0) fail("noise_sigma must be >= 0");
  if (corpus_feature_dim < 1) fail("feature_dim must be >= 1");
  if (corpus_n_train_clips < 0 || corpus_n_dev_clips < 0 || corpus_n_test_clips < 0) {
    fail("clip counts must be >= 0");
  }
  if (corpus_lexicon_size < 1) fail("lexicon_size must be >= 1");
  if (corpus_word_len_min < 1 || corpus_word_len_max < corpus_word_len_min) {
    fail("require 1 <= word_len_min <= word_len_max");
  }
  if (corpus_test_only_word_fraction < 0 || corpus_test_only_word_fraction >= 1) {
    fail("test_only_word_fraction must be in [0, 1)");
  }
  if (corpus_fs_segments_per_clip_mean < 0) fail("fs_segments_per_clip_mean must be >= 0");
  if (model_anchor_scales.empty()) fail("anchor_scales must be non-empty");
  for (int s : model_anchor_scales) {
    if (s < 1) fail("anchor scales must be >= 1");
  }
  if (filter_delta_iou < 0 || filter_delta_iou > 1 || filter_delta_is < 0 || filter_delta_is > 1) {
    fail("filter deltas must lie in [0, 1]");
  }
  if (filter_k_per_ground_truth < 0) fail("filter.k_per_ground_truth must be >= 0");
  if (match_margin <= 0) fail("match.margin must be > 0");
  if (match_neg_cap_visual < 1 || match_neg_cap_word < 1) fail("negative caps must be >= 1");
  if (detector_iou_negative > detector_iou_positive) {
    fail("detector.iou_negative must not exceed detector.iou_positive");
  }
  if (detector_max_proposals < 1) fail("detector.max_proposals must be >= 1");
  if (detector_pre_nms_top < 1) fail("detector.pre_nms_top must be >= 1");
  if (detector_reg_weight < 0) fail("detector.reg_weight must be >= 0");
  if (detector_reg_huber_delta <= 0) fail("detector.reg_huber_delta must be > 0");
  if (train_epochs < 0 || train_batch_size < 1) fail("bad training schedule");
  if (train_learning_rate <= 0) fail("learning rate must be > 0");
  if (train_beam_width < 1) fail("beam width must be >= 1");
  if (model_embedding_dim < 1 || model_trunk_hidden < 1 || model_fs_hidden < 1 ||
      model_text_hidden < 1 || model_char_embed_dim < 1) {
    fail("model dimensions must be >= 1");
  }
  if (model_pool_stride < 1 || model_pool_kernel < 1 || model_conv1_kernel < 1 ||
      model_conv2_kernel < 1 || model_conv3_kernel < 1) {
    fail("kernel and stride sizes must be >= 1");
  }
}

RunConfig RunConfig::load(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides) {
  return parse(io::read_file(path), path.string(), overrides);
}

RunConfig RunConfig::parse(const std::string& text, const std::string& source_name,
                           const std::vector<std::string>& overrides) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw io::ParseError(source_name, lineno, "expected 'key = value'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    try {
      cfg.set(key, value);
    } catch (const std::exception& e) {
      throw io::ParseError(source_name, lineno, e.what());
    }
  }
  cfg.apply_overrides(overrides);
  cfg.validate();
  return cfg;
}

void RunConfig::apply_overrides(const std::vector<std::string>& overrides) {
  for (const auto& kv : overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("override must look like key=value, got '" + kv + "'");
    }
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
}

}  // namespace fss
