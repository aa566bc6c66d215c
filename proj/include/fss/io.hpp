#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fss::io {

/// Parse failure with the 1-based line number of the offending record.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, int line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

std::string base64_encode(const unsigned char* data, size_t n);
std::vector<unsigned char> base64_decode(std::string_view text);

/// Doubles are serialized as raw little-endian IEEE-754 bytes, so encode /
/// decode round-trips are bit exact.
std::string encode_doubles(const double* data, size_t n);
std::vector<double> decode_doubles(std::string_view text);

uint64_t fnv1a64(const void* data, size_t n);
uint64_t fnv1a64(std::string_view s);
std::string hex64(uint64_t v);

/// FNV-1a hash of a file's bytes, as fixed-width hex. Throws on missing file.
std::string hash_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Fixed-format float used in all score/metric outputs (6 decimal places),
/// so identical runs produce identical bytes.
std::string format_score(double v);

/// Shortest round-trippable decimal for config echo and exact values.
std::string format_exact(double v);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, char sep);

/// Run manifest: ordered key/value lines written next to every CLI output.
struct Manifest {
  std::vector<std::pair<std::string, std::string>> entries;

  void add(std::string key, std::string value) {
    entries.emplace_back(std::move(key), std::move(value));
  }
  std::string render() const;
  void write(const std::filesystem::path& path) const;
};

}  // namespace fss::io
