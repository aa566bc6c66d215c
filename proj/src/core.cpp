#include "fss/core.hpp"

#include <algorithm>
#include <cctype>

namespace fss {

Alphabet::Alphabet() {
  chars_ = "ABCDEFGHIJKLMNOPQRSTUVWXYZ '&.@";
  std::fill(std::begin(lookup_), std::end(lookup_), -1);
  for (int i = 0; i < static_cast<int>(chars_.size()); ++i) {
    lookup_[static_cast<unsigned char>(chars_[i])] = i;
  }
  for (char c = 'a'; c <= 'z'; ++c) {
    lookup_[static_cast<unsigned char>(c)] = lookup_[static_cast<unsigned char>(c - 'a' + 'A')];
  }
}

const Alphabet& Alphabet::instance() {
  static const Alphabet alphabet;
  return alphabet;
}

int Alphabet::index_of(char c) const {
  const int idx = lookup_[static_cast<unsigned char>(c)];
  if (idx < 0) {
    throw std::invalid_argument("Alphabet: unknown character '" + std::string(1, c) + "'");
  }
  return idx;
}

bool Alphabet::contains(char c) const {
  return lookup_[static_cast<unsigned char>(c)] >= 0;
}

char Alphabet::char_at(int index) const {
  if (index < 0 || index >= size()) {
    throw std::invalid_argument("Alphabet: character index " + std::to_string(index) +
                                " out of range [0, " + std::to_string(size()) + ")");
  }
  return chars_[index];
}

std::vector<int> Alphabet::encode(std::string_view text) const {
  std::vector<int> out;
  out.reserve(text.size());
  for (char c : text) out.push_back(index_of(c));
  return out;
}

std::string Alphabet::decode(const std::vector<int>& indices) const {
  std::string out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(char_at(i));
  return out;
}

std::string Alphabet::canonicalize(std::string_view text) const {
  std::string out;
  out.reserve(text.size());
  for (char c : text) out.push_back(char_at(index_of(c)));
  return out;
}

void validate_clip(const Clip& clip) {
  const int T = clip.n_frames();
  for (const auto& ls : clip.ground_truth) {
    if (ls.segment.t > T) {
      throw std::invalid_argument("Clip " + clip.id + ": ground-truth segment [" +
                                  std::to_string(ls.segment.s) + ", " +
                                  std::to_string(ls.segment.t) + ") exceeds clip length " +
                                  std::to_string(T));
    }
    if (ls.text.empty()) {
      throw std::invalid_argument("Clip " + clip.id + ": empty ground-truth text");
    }
    Alphabet::instance().encode(ls.text);
  }
  for (size_t i = 0; i < clip.ground_truth.size(); ++i) {
    for (size_t j = i + 1; j < clip.ground_truth.size(); ++j) {
      if (intersection(clip.ground_truth[i].segment, clip.ground_truth[j].segment) > 0) {
        throw std::invalid_argument("Clip " + clip.id + ": overlapping ground-truth segments");
      }
    }
  }
}

Query make_query(std::string_view text) {
  if (text.empty()) {
    throw std::invalid_argument("Query: empty text");
  }
  Query q;
  q.text = Alphabet::instance().canonicalize(text);
  q.chars = Alphabet::instance().encode(q.text);
  return q;
}

int levenshtein(std::string_view a, std::string_view b) {
  const size_t n = a.size(), m = b.size();
  if (n == 0) return static_cast<int>(m);
  if (m == 0) return static_cast<int>(n);
  // Two-row DP over the (n+1) x (m+1) edit matrix.
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double ler(std::string_view hyp, std::string_view ref) {
  if (ref.empty()) {
    throw std::invalid_argument("ler: empty reference");
  }
  return static_cast<double>(levenshtein(hyp, ref)) / static_cast<double>(ref.size());
}

double clamped_ler(std::string_view hyp, std::string_view ref) {
  return std::min(1.0, ler(hyp, ref));
}

}  // namespace fss
