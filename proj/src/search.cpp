#include "fss/search.hpp"

#include "fss/io.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fss::search {

double score_word(double p_det, double cosine_dist, double beta) {
  return std::pow(p_det, beta) * std::max(0.0, 1.0 - cosine_dist);
}

double score_clip(const std::vector<double>& proposal_scores) {
  double best = 0.0;
  for (double s : proposal_scores) best = std::max(best, s);
  return best;
}

RankedList rank(const std::vector<std::string>& ids, const VecX& scores) {
  if (ids.size() != static_cast<size_t>(scores.size())) {
    throw std::invalid_argument("rank: " + std::to_string(ids.size()) + " ids vs " +
                                std::to_string(scores.size()) + " scores");
  }
  RankedList out;
  out.reserve(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) out.push_back({ids[i], scores(static_cast<long>(i))});
  std::sort(out.begin(), out.end(), [](const ScoredItem& a, const ScoredItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return out;
}

ScoreMatrix::ScoreMatrix(std::vector<std::string> words, std::vector<std::string> clip_ids)
    : words_(std::move(words)), clip_ids_(std::move(clip_ids)) {
  if (words_.empty()) throw std::invalid_argument("ScoreMatrix: empty vocabulary");
  if (clip_ids_.empty()) throw std::invalid_argument("ScoreMatrix: empty clip set");
  const std::set<std::string> wset(words_.begin(), words_.end());
  if (wset.size() != words_.size()) {
    throw std::invalid_argument("ScoreMatrix: duplicate words in vocabulary");
  }
  const std::set<std::string> cset(clip_ids_.begin(), clip_ids_.end());
  if (cset.size() != clip_ids_.size()) {
    throw std::invalid_argument("ScoreMatrix: duplicate clip ids");
  }
  scores_ = MatX::Zero(static_cast<long>(words_.size()), static_cast<long>(clip_ids_.size()));
}

int ScoreMatrix::word_index(const std::string& word) const {
  const auto it = std::find(words_.begin(), words_.end(), word);
  if (it == words_.end()) throw std::invalid_argument("ScoreMatrix: unknown word '" + word + "'");
  return static_cast<int>(it - words_.begin());
}

int ScoreMatrix::clip_index(const std::string& clip_id) const {
  const auto it = std::find(clip_ids_.begin(), clip_ids_.end(), clip_id);
  if (it == clip_ids_.end()) {
    throw std::invalid_argument("ScoreMatrix: unknown clip '" + clip_id + "'");
  }
  return static_cast<int>(it - clip_ids_.begin());
}

RankedList ScoreMatrix::fws(const std::string& clip_id) const {
  return rank(words_, scores_.col(clip_index(clip_id)));
}

RankedList ScoreMatrix::fvs(const std::string& word) const {
  return rank(clip_ids_, scores_.row(word_index(word)).transpose());
}

void ScoreMatrix::save(const std::filesystem::path& path) const {
  std::string out = "FSSSCORES v1\n";
  for (size_t w = 0; w < words_.size(); ++w) {
    for (size_t c = 0; c < clip_ids_.size(); ++c) {
      out += "score\t" + words_[w] + "\t" + clip_ids_[c] + "\t" +
             io::format_exact(scores_(static_cast<long>(w), static_cast<long>(c))) + "\n";
    }
  }
  out += "end\n";
  io::write_file(path, out);
}

ScoreMatrix ScoreMatrix::load(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  const std::string fname = path.string();
  std::string line;
  int lineno = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    return true;
  };
  if (!next_line() || line != "FSSSCORES v1") {
    throw io::ParseError(fname, lineno, "bad score matrix header");
  }
  std::vector<std::string> words, clips;
  std::map<std::pair<std::string, std::string>, double> cells;
  bool saw_end = false;
  while (next_line()) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    const auto fields = io::split(line, '\t');
    if (fields.size() != 4 || fields[0] != "score") {
      throw io::ParseError(fname, lineno, "expected 'score' record with 4 fields");
    }
    if (std::find(words.begin(), words.end(), fields[1]) == words.end()) words.push_back(fields[1]);
    if (std::find(clips.begin(), clips.end(), fields[2]) == clips.end()) clips.push_back(fields[2]);
    try {
      cells[{fields[1], fields[2]}] = std::stod(fields[3]);
    } catch (const std::exception& e) {
      throw io::ParseError(fname, lineno, e.what());
    }
  }
  if (!saw_end) throw io::ParseError(fname, lineno, "truncated score matrix (missing 'end')");
  ScoreMatrix m(words, clips);
  if (cells.size() != words.size() * clips.size()) {
    throw io::ParseError(fname, lineno, "score matrix is not dense");
  }
  for (size_t w = 0; w < words.size(); ++w) {
    for (size_t c = 0; c < clips.size(); ++c) {
      m.set(static_cast<int>(w), static_cast<int>(c), cells[{words[w], clips[c]}]);
    }
  }
  return m;
}

void RankedListFile::save(const std::filesystem::path& path) const {
  std::string out = "FSSRANKED v1\n";
  out += "direction\t" + direction + "\n";
  for (const auto& [query, list] : lists) {
    for (const ScoredItem& item : list) {
      out += "rank\t" + query + "\t" + item.id + "\t" + io::format_exact(item.score) + "\n";
    }
  }
  out += "end\n";
  io::write_file(path, out);
}

RankedListFile RankedListFile::load(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  const std::string fname = path.string();
  std::string line;
  int lineno = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    return true;
  };
  if (!next_line() || line != "FSSRANKED v1") {
    throw io::ParseError(fname, lineno, "bad ranked list header");
  }
  RankedListFile out;
  if (!next_line()) throw io::ParseError(fname, lineno, "missing direction record");
  {
    const auto fields = io::split(line, '\t');
    if (fields.size() != 2 || fields[0] != "direction" ||
        (fields[1] != "fws" && fields[1] != "fvs")) {
      throw io::ParseError(fname, lineno, "expected 'direction\\tfws|fvs'");
    }
    out.direction = fields[1];
  }
  bool saw_end = false;
  while (next_line()) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    const auto fields = io::split(line, '\t');
    if (fields.size() != 4 || fields[0] != "rank") {
      throw io::ParseError(fname, lineno, "expected 'rank' record with 4 fields");
    }
    double score = 0.0;
    try {
      score = std::stod(fields[3]);
    } catch (const std::exception& e) {
      throw io::ParseError(fname, lineno, e.what());
    }
    if (out.lists.empty() || out.lists.back().first != fields[1]) {
      out.lists.emplace_back(fields[1], RankedList{});
    }
    out.lists.back().second.push_back({fields[2], score});
  }
  if (!saw_end) throw io::ParseError(fname, lineno, "truncated ranked lists (missing 'end')");
  return out;
}

RankedListFile all_rankings(const ScoreMatrix& m, const std::string& direction) {
  RankedListFile out;
  out.direction = direction;
  if (direction == "fws") {
    for (const auto& clip_id : m.clip_ids()) out.lists.emplace_back(clip_id, m.fws(clip_id));
  } else if (direction == "fvs") {
    for (const auto& word : m.words()) out.lists.emplace_back(word, m.fvs(word));
  } else {
    throw std::invalid_argument("direction must be fws or fvs, got '" + direction + "'");
  }
  return out;
}

}  // namespace fss::search
