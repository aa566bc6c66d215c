#pragma once

#include "fss/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fss::search {

struct ScoredItem {
  std::string id;
  double score = 0.0;

  bool operator==(const ScoredItem&) const = default;
};

/// Sorted descending by score; ties broken by ascending item id so rankings
/// are deterministic.
using RankedList = std::vector<ScoredItem>;

/// Eq.-style proposal/word score: p_det^beta * (1 - d), clamped at zero so
/// anti-aligned embeddings (d up to 2) cannot go negative.
double score_word(double p_det, double cosine_dist, double beta);

/// Highest proposal score; zero when the clip produced no proposals.
double score_clip(const std::vector<double>& proposal_scores);

RankedList rank(const std::vector<std::string>& ids, const VecX& scores);

/// Dense sc(clip, word) matrix shared by both search directions; ranking
/// rows gives FVS, ranking columns gives FWS.
class ScoreMatrix {
 public:
  ScoreMatrix(std::vector<std::string> words, std::vector<std::string> clip_ids);

  void set(int word_index, int clip_index, double score) { scores_(word_index, clip_index) = score; }
  double at(int word_index, int clip_index) const { return scores_(word_index, clip_index); }

  const std::vector<std::string>& words() const { return words_; }
  const std::vector<std::string>& clip_ids() const { return clip_ids_; }
  const MatX& matrix() const { return scores_; }

  int word_index(const std::string& word) const;
  int clip_index(const std::string& clip_id) const;

  /// Rank the vocabulary for one clip.  Throws if the vocabulary is empty.
  RankedList fws(const std::string& clip_id) const;
  /// Rank the clips for one word.  Throws if the clip set is empty.
  RankedList fvs(const std::string& word) const;

  void save(const std::filesystem::path& path) const;
  static ScoreMatrix load(const std::filesystem::path& path);

 private:
  std::vector<std::string> words_;
  std::vector<std::string> clip_ids_;
  MatX scores_;
};

/// Ranked list files: one record per (query, item) in rank order.
struct RankedListFile {
  std::string direction;  // fws | fvs
  std::vector<std::pair<std::string, RankedList>> lists;

  void save(const std::filesystem::path& path) const;
  static RankedListFile load(const std::filesystem::path& path);
};

/// Every query of the direction, ranked from the score matrix.
RankedListFile all_rankings(const ScoreMatrix& m, const std::string& direction);

}  // namespace fss::search
