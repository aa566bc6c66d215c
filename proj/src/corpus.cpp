#include "fss/corpus.hpp"

#include "fss/io.hpp"
#include "fss/rng.hpp"

#include <algorithm>
#include <functional>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fss::synth {

namespace {

constexpr const char* kMagic = "FSSCORPUS v1";
constexpr double kMaxPrototypeCos = 0.5;
constexpr int kMaxSegmentsPerClip = 4;

std::string split_name(int s) {
  switch (s) {
    case 0: return "train";
    case 1: return "dev";
    default: return "test";
  }
}

VecX draw_unit_vector(Rng& rng, int dim) {
  VecX v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.normal();
  const double n = v.norm();
  if (n < 1e-9) return draw_unit_vector(rng, dim);
  return v / n;
}

/// Draws prototypes one by one; at feature_dim >= 64 each new vector is
/// redrawn until it stays below the pairwise |cos| bound against all
/// previous ones.
MatX draw_prototypes(Rng& rng, int dim, int count, std::vector<VecX>& all_so_far) {
  MatX out(dim, count);
  for (int c = 0; c < count; ++c) {
    VecX v;
    bool ok = false;
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      v = draw_unit_vector(rng, dim);
      ok = true;
      if (dim >= 64) {
        for (const VecX& u : all_so_far) {
          if (std::abs(u.dot(v)) >= kMaxPrototypeCos) {
            ok = false;
            break;
          }
        }
      }
    }
    if (!ok) {
      throw std::runtime_error("corpus: could not draw near-orthogonal prototypes at dim " +
                               std::to_string(dim));
    }
    out.col(c) = v;
    all_so_far.push_back(v);
  }
  return out;
}

std::string draw_word(Rng& rng, const CorpusConfig& cfg) {
  const auto& ab = Alphabet::instance();
  const int len = rng.uniform_int(cfg.word_len_min, cfg.word_len_max);
  std::string w(static_cast<size_t>(len), 'A');
  for (int i = 0; i < len; ++i) w[static_cast<size_t>(i)] = ab.char_at(rng.uniform_int(0, 25));
  if (len >= 3 && rng.uniform() < cfg.special_char_prob) {
    const int pos = rng.uniform_int(1, len - 2);
    w[static_cast<size_t>(pos)] = ab.char_at(rng.uniform_int(26, ab.size() - 1));
  }
  return w;
}

// Poisson clamped into [0, 4]; clamping (vs. resampling) keeps the mean
// near the configured rate.
int draw_segment_count(Rng& rng, double mean) {
  return std::min(rng.poisson(mean), kMaxSegmentsPerClip);
}

struct PlannedSegment {
  std::string word;
  std::vector<int> letter_durations;
  int start = 0;
  int length() const {
    int sum = 0;
    for (int d : letter_durations) sum += d;
    return sum;
  }
};

Clip generate_clip(const CorpusConfig& cfg, const MatX& letters, const MatX& distractors,
                   const std::vector<std::string>& word_pool, const std::string& id, Rng rng) {
  const auto& ab = Alphabet::instance();
  const int T = cfg.clip_len;

  // Plan segments; re-plan wholesale when the draw cannot be packed.
  std::vector<PlannedSegment> plan;
  bool packed = false;
  for (int attempt = 0; attempt < 1000 && !packed; ++attempt) {
    plan.clear();
    const int k = draw_segment_count(rng, cfg.fs_segments_per_clip_mean);
    int total = 0;
    for (int i = 0; i < k; ++i) {
      PlannedSegment seg;
      seg.word = word_pool[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(word_pool.size()) - 1))];
      for (char c : seg.word) {
        (void)c;
        seg.letter_durations.push_back(rng.uniform_int(cfg.letter_dur_min, cfg.letter_dur_max));
      }
      total += seg.length();
      plan.push_back(std::move(seg));
    }
    const int k_actual = static_cast<int>(plan.size());
    const int slack = T - total - std::max(0, k_actual - 1);  // >= 1 frame between segments
    if (slack < 0) continue;
    // Uniform offsets into the slack keep placements random while packing
    // always succeeds.
    std::vector<int> offsets(static_cast<size_t>(k_actual));
    for (int i = 0; i < k_actual; ++i) offsets[static_cast<size_t>(i)] = rng.uniform_int(0, slack);
    std::sort(offsets.begin(), offsets.end());
    int cursor = 0;
    for (int i = 0; i < k_actual; ++i) {
      plan[static_cast<size_t>(i)].start = offsets[static_cast<size_t>(i)] + cursor;
      cursor += plan[static_cast<size_t>(i)].length() + 1;
    }
    packed = true;
  }
  if (!packed) {
    throw std::runtime_error("corpus: could not pack segments into clip of length " +
                             std::to_string(T));
  }

  Clip clip;
  clip.id = id;
  clip.frames.resize(T, cfg.feature_dim);

  // Distractor runs over the whole timeline, then letter runs on top.
  int t = 0;
  while (t < T) {
    const int proto = rng.uniform_int(0, static_cast<int>(distractors.cols()) - 1);
    const int dur = std::min(rng.uniform_int(cfg.letter_dur_min, cfg.letter_dur_max), T - t);
    for (int u = 0; u < dur; ++u) clip.frames.row(t + u) = distractors.col(proto).transpose();
    t += dur;
  }
  for (const auto& seg : plan) {
    int pos = seg.start;
    for (size_t ci = 0; ci < seg.word.size(); ++ci) {
      const int letter = ab.index_of(seg.word[ci]);
      for (int u = 0; u < seg.letter_durations[ci]; ++u) {
        clip.frames.row(pos + u) = letters.col(letter).transpose();
      }
      pos += seg.letter_durations[ci];
    }
    clip.ground_truth.push_back({Segment(seg.start, seg.start + seg.length()), seg.word});
  }
  std::sort(clip.ground_truth.begin(), clip.ground_truth.end(),
            [](const LabeledSegment& a, const LabeledSegment& b) {
              return a.segment.s < b.segment.s;
            });

  if (cfg.noise_sigma > 0) {
    for (int r = 0; r < T; ++r) {
      for (int c = 0; c < cfg.feature_dim; ++c) {
        clip.frames(r, c) += cfg.noise_sigma * rng.normal();
      }
    }
  }
  validate_clip(clip);
  return clip;
}

}  // namespace

void CorpusConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("corpus config: " + m); };
  if (clip_len <= overlap || overlap < 0) fail("require clip_len > overlap >= 0");
  if (letter_dur_min < 1 || letter_dur_max < letter_dur_min) fail("bad letter durations");
  if (noise_sigma < 0) fail("noise_sigma must be >= 0");
  if (feature_dim < 1) fail("feature_dim must be >= 1");
  if (lexicon_size < 1) fail("lexicon_size must be >= 1");
  if (word_len_min < 1 || word_len_max < word_len_min) fail("bad word lengths");
  if (test_only_word_fraction < 0 || test_only_word_fraction >= 1) {
    fail("test_only_word_fraction must be in [0, 1)");
  }
  if (fs_segments_per_clip_mean < 0) fail("fs_segments_per_clip_mean must be >= 0");
  if (n_train_clips < 0 || n_dev_clips < 0 || n_test_clips < 0) fail("negative clip count");
  if (n_distractor_prototypes < 1) fail("need at least one distractor prototype");
  if (special_char_prob < 0 || special_char_prob > 1) fail("special_char_prob must be in [0, 1]");
}

CorpusConfig corpus_config_from(const RunConfig& run) {
  CorpusConfig c;
  c.seed = run.seed;
  c.feature_dim = run.corpus_feature_dim;
  c.clip_len = run.corpus_clip_len;
  c.overlap = run.corpus_overlap;
  c.n_train_clips = run.corpus_n_train_clips;
  c.n_dev_clips = run.corpus_n_dev_clips;
  c.n_test_clips = run.corpus_n_test_clips;
  c.lexicon_size = run.corpus_lexicon_size;
  c.letter_dur_min = run.corpus_letter_dur_min;
  c.letter_dur_max = run.corpus_letter_dur_max;
  c.noise_sigma = run.corpus_noise_sigma;
  c.fs_segments_per_clip_mean = run.corpus_fs_segments_per_clip_mean;
  c.test_only_word_fraction = run.corpus_test_only_word_fraction;
  c.n_distractor_prototypes = run.corpus_n_distractor_prototypes;
  c.word_len_min = run.corpus_word_len_min;
  c.word_len_max = run.corpus_word_len_max;
  c.special_char_prob = run.corpus_special_char_prob;
  return c;
}

const std::vector<Clip>& Corpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "dev") return dev;
  if (name == "test") return test;
  throw std::invalid_argument("unknown split '" + name + "' (expected train|dev|test)");
}

namespace {
bool same_matrix(const MatX& a, const MatX& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}
}  // namespace

bool operator==(const Corpus& a, const Corpus& b) {
  return a.config == b.config && a.lexicon == b.lexicon &&
         same_matrix(a.letter_prototypes, b.letter_prototypes) &&
         same_matrix(a.distractor_prototypes, b.distractor_prototypes) && a.train == b.train &&
         a.dev == b.dev && a.test == b.test;
}

Corpus generate(const CorpusConfig& config) {
  config.validate();
  const auto& ab = Alphabet::instance();
  const Rng root(config.seed);

  Corpus corpus;
  corpus.config = config;

  std::vector<VecX> all_protos;
  Rng proto_rng = root.fork(1);
  corpus.letter_prototypes = draw_prototypes(proto_rng, config.feature_dim, ab.size(), all_protos);
  corpus.distractor_prototypes =
      draw_prototypes(proto_rng, config.feature_dim, config.n_distractor_prototypes, all_protos);

  // Lexicon of distinct words; a leading shuffled fraction is held out of
  // the train/dev pool for the open-vocabulary condition.
  Rng lex_rng = root.fork(2);
  std::set<std::string> seen;
  std::vector<std::string> words;
  int guard = 0;
  while (static_cast<int>(words.size()) < config.lexicon_size) {
    if (++guard > 100000) throw std::runtime_error("corpus: lexicon too large for word space");
    std::string w = draw_word(lex_rng, config);
    if (seen.insert(w).second) words.push_back(std::move(w));
  }
  lex_rng.shuffle(words);
  const int n_test_only =
      static_cast<int>(config.test_only_word_fraction * static_cast<double>(config.lexicon_size));
  if (n_test_only >= config.lexicon_size) {
    throw std::invalid_argument("corpus config: no shared words left for training");
  }
  corpus.lexicon.reserve(words.size());
  for (size_t i = 0; i < words.size(); ++i) {
    corpus.lexicon.push_back({words[i], static_cast<int>(i) < n_test_only});
  }

  std::vector<std::string> shared_pool, full_pool;
  for (const auto& e : corpus.lexicon) {
    full_pool.push_back(e.word);
    if (!e.test_only) shared_pool.push_back(e.word);
  }

  const int counts[3] = {config.n_train_clips, config.n_dev_clips, config.n_test_clips};
  for (int s = 0; s < 3; ++s) {
    auto& out = s == 0 ? corpus.train : (s == 1 ? corpus.dev : corpus.test);
    const auto& pool = s == 2 ? full_pool : shared_pool;
    for (int i = 0; i < counts[s]; ++i) {
      char id[40];
      std::snprintf(id, sizeof(id), "%s-%05d", split_name(s).c_str(), i);
      const uint64_t salt = (static_cast<uint64_t>(s + 1) << 32) | static_cast<uint64_t>(i);
      out.push_back(generate_clip(config, corpus.letter_prototypes, corpus.distractor_prototypes,
                                  pool, id, root.fork(salt)));
    }
  }
  return corpus;
}

namespace {

const std::map<std::string, std::function<void(CorpusConfig&, const std::string&)>>&
config_setters() {
  static const std::map<std::string, std::function<void(CorpusConfig&, const std::string&)>> m = {
      {"seed", [](CorpusConfig& c, const std::string& v) { c.seed = std::stoull(v); }},
      {"feature_dim", [](CorpusConfig& c, const std::string& v) { c.feature_dim = std::stoi(v); }},
      {"clip_len", [](CorpusConfig& c, const std::string& v) { c.clip_len = std::stoi(v); }},
      {"overlap", [](CorpusConfig& c, const std::string& v) { c.overlap = std::stoi(v); }},
      {"n_train_clips", [](CorpusConfig& c, const std::string& v) { c.n_train_clips = std::stoi(v); }},
      {"n_dev_clips", [](CorpusConfig& c, const std::string& v) { c.n_dev_clips = std::stoi(v); }},
      {"n_test_clips", [](CorpusConfig& c, const std::string& v) { c.n_test_clips = std::stoi(v); }},
      {"lexicon_size", [](CorpusConfig& c, const std::string& v) { c.lexicon_size = std::stoi(v); }},
      {"letter_dur_min", [](CorpusConfig& c, const std::string& v) { c.letter_dur_min = std::stoi(v); }},
      {"letter_dur_max", [](CorpusConfig& c, const std::string& v) { c.letter_dur_max = std::stoi(v); }},
      {"noise_sigma", [](CorpusConfig& c, const std::string& v) { c.noise_sigma = std::stod(v); }},
      {"fs_segments_per_clip_mean",
       [](CorpusConfig& c, const std::string& v) { c.fs_segments_per_clip_mean = std::stod(v); }},
      {"test_only_word_fraction",
       [](CorpusConfig& c, const std::string& v) { c.test_only_word_fraction = std::stod(v); }},
      {"n_distractor_prototypes",
       [](CorpusConfig& c, const std::string& v) { c.n_distractor_prototypes = std::stoi(v); }},
      {"word_len_min", [](CorpusConfig& c, const std::string& v) { c.word_len_min = std::stoi(v); }},
      {"word_len_max", [](CorpusConfig& c, const std::string& v) { c.word_len_max = std::stoi(v); }},
      {"special_char_prob",
       [](CorpusConfig& c, const std::string& v) { c.special_char_prob = std::stod(v); }},
  };
  return m;
}

std::string config_echo(const CorpusConfig& c) {
  std::string out;
  auto emit = [&out](const std::string& k, const std::string& v) {
    out += "config\t" + k + "\t" + v + "\n";
  };
  emit("seed", std::to_string(c.seed));
  emit("feature_dim", std::to_string(c.feature_dim));
  emit("clip_len", std::to_string(c.clip_len));
  emit("overlap", std::to_string(c.overlap));
  emit("n_train_clips", std::to_string(c.n_train_clips));
  emit("n_dev_clips", std::to_string(c.n_dev_clips));
  emit("n_test_clips", std::to_string(c.n_test_clips));
  emit("lexicon_size", std::to_string(c.lexicon_size));
  emit("letter_dur_min", std::to_string(c.letter_dur_min));
  emit("letter_dur_max", std::to_string(c.letter_dur_max));
  emit("noise_sigma", io::format_exact(c.noise_sigma));
  emit("fs_segments_per_clip_mean", io::format_exact(c.fs_segments_per_clip_mean));
  emit("test_only_word_fraction", io::format_exact(c.test_only_word_fraction));
  emit("n_distractor_prototypes", std::to_string(c.n_distractor_prototypes));
  emit("word_len_min", std::to_string(c.word_len_min));
  emit("word_len_max", std::to_string(c.word_len_max));
  emit("special_char_prob", io::format_exact(c.special_char_prob));
  return out;
}

std::string encode_matrix(const MatX& m) {
  return std::to_string(m.rows()) + "\t" + std::to_string(m.cols()) + "\t" +
         io::encode_doubles(m.data(), static_cast<size_t>(m.size()));
}

MatX decode_matrix(const std::string& rows, const std::string& cols, const std::string& b64) {
  const int r = std::stoi(rows);
  const int c = std::stoi(cols);
  const auto data = io::decode_doubles(b64);
  if (static_cast<long>(data.size()) != static_cast<long>(r) * c) {
    throw std::invalid_argument("matrix payload has " + std::to_string(data.size()) +
                                " values, header says " + rows + "x" + cols);
  }
  return Eigen::Map<const MatX>(data.data(), r, c);
}

std::string encode_ground_truth(const std::vector<LabeledSegment>& gt) {
  if (gt.empty()) return "-";
  std::vector<std::string> parts;
  parts.reserve(gt.size());
  for (const auto& ls : gt) {
    parts.push_back(std::to_string(ls.segment.s) + "," + std::to_string(ls.segment.t) + "," +
                    ls.text);
  }
  return io::join(parts, ';');
}

std::vector<LabeledSegment> decode_ground_truth(const std::string& field) {
  std::vector<LabeledSegment> out;
  if (field == "-") return out;
  for (const auto& part : io::split(field, ';')) {
    const auto bits = io::split(part, ',');
    if (bits.size() != 3) {
      throw std::invalid_argument("ground-truth entry '" + part + "' needs s,t,text");
    }
    out.push_back({Segment(std::stoi(bits[0]), std::stoi(bits[1])), bits[2]});
  }
  return out;
}

}  // namespace

void save(const Corpus& corpus, const std::filesystem::path& path) {
  std::string out;
  out += kMagic;
  out += '\n';
  out += config_echo(corpus.config);
  for (const auto& e : corpus.lexicon) {
    out += "lexicon\t" + e.word + "\t" + (e.test_only ? "test_only" : "shared") + "\n";
  }
  out += "letterproto\t" + encode_matrix(corpus.letter_prototypes) + "\n";
  out += "distractorproto\t" + encode_matrix(corpus.distractor_prototypes) + "\n";
  for (int s = 0; s < 3; ++s) {
    const auto& clips = s == 0 ? corpus.train : (s == 1 ? corpus.dev : corpus.test);
    for (const Clip& clip : clips) {
      out += "clip\t" + split_name(s) + "\t" + clip.id + "\t" +
             std::to_string(clip.frames.rows()) + "\t" + std::to_string(clip.frames.cols()) +
             "\t" + encode_ground_truth(clip.ground_truth) + "\t" +
             io::encode_doubles(clip.frames.data(), static_cast<size_t>(clip.frames.size())) +
             "\n";
    }
  }
  out += "end\n";
  io::write_file(path, out);
}

Corpus load(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  const std::string fname = path.string();
  std::string line;
  int lineno = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    return true;
  };

  if (!next_line() || line != kMagic) {
    throw io::ParseError(fname, lineno, "bad corpus header (expected '" + std::string(kMagic) + "')");
  }

  Corpus corpus;
  bool saw_end = false;
  while (next_line()) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    const auto fields = io::split(line, '\t');
    try {
      if (fields[0] == "config") {
        if (fields.size() != 3) throw std::invalid_argument("config record needs 3 fields");
        const auto it = config_setters().find(fields[1]);
        if (it == config_setters().end()) {
          throw std::invalid_argument("unknown corpus config key '" + fields[1] + "'");
        }
        it->second(corpus.config, fields[2]);
      } else if (fields[0] == "lexicon") {
        if (fields.size() != 3) throw std::invalid_argument("lexicon record needs 3 fields");
        if (fields[2] != "shared" && fields[2] != "test_only") {
          throw std::invalid_argument("lexicon tag must be shared|test_only");
        }
        corpus.lexicon.push_back({Alphabet::instance().canonicalize(fields[1]),
                                  fields[2] == "test_only"});
      } else if (fields[0] == "letterproto" || fields[0] == "distractorproto") {
        if (fields.size() != 4) throw std::invalid_argument("prototype record needs 4 fields");
        MatX m = decode_matrix(fields[1], fields[2], fields[3]);
        (fields[0] == "letterproto" ? corpus.letter_prototypes : corpus.distractor_prototypes) =
            std::move(m);
      } else if (fields[0] == "clip") {
        if (fields.size() != 7) throw std::invalid_argument("clip record needs 7 fields");
        Clip clip;
        clip.id = fields[2];
        clip.ground_truth = decode_ground_truth(fields[5]);
        const int T = std::stoi(fields[3]);
        const int D = std::stoi(fields[4]);
        const auto data = io::decode_doubles(fields[6]);
        if (static_cast<long>(data.size()) != static_cast<long>(T) * D) {
          throw std::invalid_argument("clip feature payload has " + std::to_string(data.size()) +
                                      " values, header says " + fields[3] + "x" + fields[4]);
        }
        clip.frames = Eigen::Map<const MatX>(data.data(), T, D);
        validate_clip(clip);
        if (fields[1] == "train") {
          corpus.train.push_back(std::move(clip));
        } else if (fields[1] == "dev") {
          corpus.dev.push_back(std::move(clip));
        } else if (fields[1] == "test") {
          corpus.test.push_back(std::move(clip));
        } else {
          throw std::invalid_argument("unknown split '" + fields[1] + "'");
        }
      } else {
        throw std::invalid_argument("unknown record '" + fields[0] + "'");
      }
    } catch (const io::ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw io::ParseError(fname, lineno, e.what());
    }
  }
  if (!saw_end) throw io::ParseError(fname, lineno, "truncated corpus (missing 'end')");
  corpus.config.validate();
  if (corpus.letter_prototypes.size() == 0) {
    throw io::ParseError(fname, lineno, "corpus missing letter prototypes");
  }
  return corpus;
}

}  // namespace fss::synth
