#pragma once

#include "fss/nn/graph.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fss::nn {

/// Versioned flat record of named parameter tensors.  Values are serialized
/// as raw doubles, so a save/load round trip is bit exact.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::map<std::string, MatX> tensors;

  static Checkpoint from_params(const std::vector<Parameter*>& params);
  static Checkpoint load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Copies tensors into the given parameters by name; throws when a name is
  /// missing or any shape differs.
  void restore(const std::vector<Parameter*>& params) const;

  std::string meta_or(const std::string& key, const std::string& fallback) const {
    const auto it = meta.find(key);
    return it == meta.end() ? fallback : it->second;
  }
};

}  // namespace fss::nn
