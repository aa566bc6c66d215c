#include "fss/corpus.hpp"
#include "fss/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <set>

using namespace fss;
using namespace fss::synth;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fss_test_" + name);
}

CorpusConfig small_config() {
  CorpusConfig c;
  c.seed = 1;
  c.feature_dim = 16;
  c.clip_len = 80;
  c.overlap = 20;
  c.n_train_clips = 6;
  c.n_dev_clips = 2;
  c.n_test_clips = 4;
  c.lexicon_size = 20;
  c.noise_sigma = 0.1;
  c.n_distractor_prototypes = 8;
  return c;
}

}  // namespace

TEST_CASE("empty split counts give empty splits") {
  CorpusConfig c = small_config();
  c.n_train_clips = 0;
  c.n_dev_clips = 0;
  c.n_test_clips = 0;
  const Corpus corpus = generate(c);
  CHECK(corpus.train.empty());
  CHECK(corpus.dev.empty());
  CHECK(corpus.test.empty());
  CHECK(static_cast<int>(corpus.lexicon.size()) == c.lexicon_size);
}

TEST_CASE("generation is deterministic: same seed twice is byte identical") {
  const CorpusConfig c = small_config();
  const Corpus a = generate(c);
  const Corpus b = generate(c);
  CHECK(a == b);
  const auto pa = temp_file("corpus_a.fsc"), pb = temp_file("corpus_b.fsc");
  save(a, pa);
  save(b, pb);
  CHECK(io::read_file(pa) == io::read_file(pb));
  // different seed changes the bytes
  CorpusConfig c2 = small_config();
  c2.seed = 2;
  save(generate(c2), pb);
  CHECK(io::read_file(pa) != io::read_file(pb));
}

TEST_CASE("ground-truth segments are disjoint, in range, and words come from the lexicon") {
  const Corpus corpus = generate(small_config());
  std::set<std::string> lex;
  for (const auto& e : corpus.lexicon) lex.insert(e.word);
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
    for (const Clip& clip : *split) {
      CHECK_NOTHROW(validate_clip(clip));
      CHECK(clip.n_frames() == 80);
      CHECK(clip.feature_dim() == 16);
      for (const auto& ls : clip.ground_truth) CHECK(lex.count(ls.text) == 1);
      for (size_t i = 1; i < clip.ground_truth.size(); ++i) {
        CHECK(clip.ground_truth[i].segment.s >= clip.ground_truth[i - 1].segment.t);
      }
    }
  }
}

TEST_CASE("test-only words never appear in train or dev clips") {
  CorpusConfig c = small_config();
  c.n_train_clips = 30;
  c.test_only_word_fraction = 0.3;
  const Corpus corpus = generate(c);
  std::set<std::string> held_out;
  for (const auto& e : corpus.lexicon) {
    if (e.test_only) held_out.insert(e.word);
  }
  CHECK(held_out.size() == 6);  // 0.3 * 20
  for (const auto* split : {&corpus.train, &corpus.dev}) {
    for (const Clip& clip : *split) {
      for (const auto& ls : clip.ground_truth) CHECK(held_out.count(ls.text) == 0);
    }
  }
}

TEST_CASE("noise-free corpus renders exact prototypes inside letter runs") {
  CorpusConfig c = small_config();
  c.noise_sigma = 0.0;
  const Corpus corpus = generate(c);
  const auto& ab = Alphabet::instance();
  bool checked_any = false;
  for (const Clip& clip : corpus.train) {
    for (const auto& ls : clip.ground_truth) {
      // every frame of the segment is exactly one of the word's letter
      // prototypes
      std::set<int> letters;
      for (char ch : ls.text) letters.insert(ab.index_of(ch));
      for (int t = ls.segment.s; t < ls.segment.t; ++t) {
        bool match = false;
        for (int li : letters) {
          if ((clip.frames.row(t).transpose().array() ==
               corpus.letter_prototypes.col(li).array())
                  .all()) {
            match = true;
            break;
          }
        }
        CHECK(match);
        checked_any = true;
      }
    }
  }
  CHECK(checked_any);
}

TEST_CASE("letter prototypes are near-orthogonal at dimension 64") {
  CorpusConfig c = small_config();
  c.feature_dim = 64;
  const Corpus corpus = generate(c);
  const MatX& L = corpus.letter_prototypes;
  for (int i = 0; i < L.cols(); ++i) {
    CHECK(L.col(i).norm() == doctest::Approx(1.0));
    for (int j = i + 1; j < L.cols(); ++j) {
      CHECK(std::abs(L.col(i).dot(L.col(j))) < 0.5);
    }
  }
}

TEST_CASE("segments-per-clip mean sits near the configured rate") {
  CorpusConfig c;
  c.seed = 1;
  c.feature_dim = 8;  // tiny features keep this statistical check fast
  c.n_train_clips = 100;
  c.n_dev_clips = 0;
  c.n_test_clips = 0;
  const Corpus corpus = generate(c);
  double total = 0;
  for (const Clip& clip : corpus.train) total += static_cast<double>(clip.ground_truth.size());
  const double mean = total / 100.0;
  CHECK(mean >= 1.6);
  CHECK(mean <= 2.2);
  for (const Clip& clip : corpus.train) CHECK(clip.ground_truth.size() <= 4);
}

TEST_CASE("save/load round trip is identity") {
  const Corpus corpus = generate(small_config());
  const auto path = temp_file("roundtrip.fsc");
  save(corpus, path);
  const Corpus back = load(path);
  CHECK(back == corpus);
}

TEST_CASE("truncated and malformed files report parse errors with line numbers") {
  const Corpus corpus = generate(small_config());
  const auto path = temp_file("broken.fsc");
  save(corpus, path);
  const std::string text = io::read_file(path);

  io::write_file(path, text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load(path), io::ParseError);

  io::write_file(path, "FSSCORPUS v1\nclip\ttrain\tx\tbad\n end\n");
  try {
    load(path);
    FAIL("expected parse error");
  } catch (const io::ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find(path.string()) != std::string::npos);
  }

  io::write_file(path, "NOT A CORPUS\n");
  CHECK_THROWS_AS(load(path), io::ParseError);
}

TEST_CASE("hand-written one-clip fixture loads with expected fields") {
  // 3 frames x 2 dims, features stored column-major as raw doubles
  const std::vector<double> feats = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  std::string text = "FSSCORPUS v1\n";
  text += "config\tseed\t9\n";
  text += "config\tfeature_dim\t2\n";
  text += "config\tclip_len\t3\n";
  text += "config\toverlap\t0\n";
  text += "config\tn_train_clips\t1\n";
  text += "config\tn_dev_clips\t0\n";
  text += "config\tn_test_clips\t0\n";
  text += "config\tletter_dur_min\t1\n";
  text += "config\tword_len_min\t1\n";
  text += "lexicon\tHI\tshared\n";
  text += "letterproto\t2\t1\t" + io::encode_doubles(feats.data(), 2) + "\n";
  text += "distractorproto\t2\t1\t" + io::encode_doubles(feats.data() + 2, 2) + "\n";
  text += "clip\ttrain\tclip-a\t3\t2\t1,3,HI\t" + io::encode_doubles(feats.data(), 6) + "\n";
  text += "end\n";
  const auto path = temp_file("fixture.fsc");
  io::write_file(path, text);

  const Corpus corpus = load(path);
  CHECK(corpus.config.seed == 9);
  CHECK(corpus.config.feature_dim == 2);
  REQUIRE(corpus.train.size() == 1);
  const Clip& clip = corpus.train[0];
  CHECK(clip.id == "clip-a");
  CHECK(clip.n_frames() == 3);
  CHECK(clip.feature_dim() == 2);
  REQUIRE(clip.ground_truth.size() == 1);
  CHECK(clip.ground_truth[0].segment == Segment(1, 3));
  CHECK(clip.ground_truth[0].text == "HI");
  CHECK(clip.frames(0, 0) == 1.0);
  CHECK(clip.frames(2, 1) == 6.0);  // column-major payload
  CHECK(corpus.lexicon.size() == 1);
}

TEST_CASE("phrases with separator characters survive the file format") {
  CorpusConfig c = small_config();
  c.special_char_prob = 1.0;  // force specials into every eligible word
  c.word_len_min = 3;
  const Corpus corpus = generate(c);
  bool has_special = false;
  for (const auto& e : corpus.lexicon) {
    has_special = has_special || e.word.find_first_of(" '&.@") != std::string::npos;
  }
  CHECK(has_special);
  const auto path = temp_file("specials.fsc");
  save(corpus, path);
  CHECK(load(path) == corpus);
}
