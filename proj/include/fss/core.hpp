#pragma once

#include "fss/types.hpp"

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fss {

/// Character inventory for fingerspelled text: 26 uppercase letters plus
/// <space>, ', &, ., @.  Two extra symbol indices exist beyond the character
/// range: <x> (non-fingerspelling filler) and <blank> (CTC blank).  Indices
/// are dense and stable: characters occupy [0, size()), then x_index(),
/// then blank_index().
class Alphabet {
 public:
  static const Alphabet& instance();

  int size() const { return static_cast<int>(chars_.size()); }
  int total_symbols() const { return size() + 2; }
  int x_index() const { return size(); }
  int blank_index() const { return size() + 1; }

  /// Index of a character; lowercase ASCII letters are folded to uppercase.
  /// Throws std::invalid_argument for characters outside the inventory.
  int index_of(char c) const;
  bool contains(char c) const;
  char char_at(int index) const;

  /// Encode a text string into character indices (never <x>/<blank>).
  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& indices) const;

  /// Uppercased copy, throws on any character outside the inventory.
  std::string canonicalize(std::string_view text) const;

 private:
  Alphabet();
  std::string chars_;
  int lookup_[256];
};

/// Half-open frame interval [s, t).  Adjacent segments do not intersect and
/// length is always t - s.
struct Segment {
  int s = 0;
  int t = 1;

  Segment() = default;
  Segment(int start, int end) : s(start), t(end) {
    if (start < 0 || end <= start) {
      throw std::invalid_argument("Segment: require 0 <= s < t, got [" +
                                  std::to_string(start) + ", " +
                                  std::to_string(end) + ")");
    }
  }

  int length() const { return t - s; }
  bool operator==(const Segment& o) const { return s == o.s && t == o.t; }
};

struct LabeledSegment {
  Segment segment;
  std::string text;

  bool operator==(const LabeledSegment& o) const {
    return segment == o.segment && text == o.text;
  }
};

/// A frame-feature sequence (rows = frames) with its labeled fingerspelling
/// segments.  Ground-truth segments fit within the clip and never overlap.
struct Clip {
  std::string id;
  MatX frames;  // T x D
  std::vector<LabeledSegment> ground_truth;

  int n_frames() const { return static_cast<int>(frames.rows()); }
  int feature_dim() const { return static_cast<int>(frames.cols()); }
};

/// Throws std::invalid_argument if the clip violates its invariants.
void validate_clip(const Clip& clip);

/// Exact equality (features compared bitwise).
inline bool operator==(const Clip& a, const Clip& b) {
  return a.id == b.id && a.frames.rows() == b.frames.rows() &&
         a.frames.cols() == b.frames.cols() &&
         (a.frames.array() == b.frames.array()).all() && a.ground_truth == b.ground_truth;
}

/// A query word or phrase, decomposed into alphabet character indices.
struct Query {
  std::string text;
  std::vector<int> chars;
};

Query make_query(std::string_view text);

// Interval arithmetic on half-open segments.

inline int intersection(const Segment& a, const Segment& b) {
  return std::max(0, std::min(a.t, b.t) - std::max(a.s, b.s));
}

inline double iou(const Segment& a, const Segment& b) {
  const int inter = intersection(a, b);
  return static_cast<double>(inter) /
         static_cast<double>(a.length() + b.length() - inter);
}

/// Intersection over the length of `y` (asymmetric): how much of y is
/// covered by x.
inline double is_ratio(const Segment& x, const Segment& y) {
  return static_cast<double>(intersection(x, y)) /
         static_cast<double>(y.length());
}

/// Levenshtein edit distance (unit costs).
int levenshtein(std::string_view a, std::string_view b);

/// Edit distance normalized by reference length.  Throws on empty reference.
double ler(std::string_view hyp, std::string_view ref);

/// ler clamped to [0, 1], as used by decoders scoring against hypotheses.
double clamped_ler(std::string_view hyp, std::string_view ref);

}  // namespace fss
