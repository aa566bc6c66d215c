#include "fss/nn/checkpoint.hpp"

#include "fss/io.hpp"

#include <sstream>

namespace fss::nn {

namespace {
constexpr const char* kMagic = "FSSCKPT v1";
}

Checkpoint Checkpoint::from_params(const std::vector<Parameter*>& params) {
  Checkpoint ckpt;
  for (const Parameter* p : params) {
    if (ckpt.tensors.count(p->name)) {
      throw std::invalid_argument("checkpoint: duplicate parameter name '" + p->name + "'");
    }
    ckpt.tensors[p->name] = p->value;
  }
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::string out;
  out += kMagic;
  out += '\n';
  for (const auto& [k, v] : meta) {
    out += "meta\t" + k + "\t" + v + "\n";
  }
  for (const auto& [name, m] : tensors) {
    out += "tensor\t" + name + "\t" + std::to_string(m.rows()) + "\t" + std::to_string(m.cols()) +
           "\t" + io::encode_doubles(m.data(), static_cast<size_t>(m.size())) + "\n";
  }
  out += "end\n";
  io::write_file(path, out);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
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
    throw io::ParseError(fname, lineno, "bad checkpoint header (expected '" +
                                            std::string(kMagic) + "')");
  }
  Checkpoint ckpt;
  bool saw_end = false;
  while (next_line()) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    const auto fields = io::split(line, '\t');
    if (fields[0] == "meta") {
      if (fields.size() != 3) throw io::ParseError(fname, lineno, "meta record needs 3 fields");
      ckpt.meta[fields[1]] = fields[2];
    } else if (fields[0] == "tensor") {
      if (fields.size() != 5) throw io::ParseError(fname, lineno, "tensor record needs 5 fields");
      const int rows = std::stoi(fields[2]);
      const int cols = std::stoi(fields[3]);
      std::vector<double> data;
      try {
        data = io::decode_doubles(fields[4]);
      } catch (const std::exception& e) {
        throw io::ParseError(fname, lineno, e.what());
      }
      if (static_cast<long>(data.size()) != static_cast<long>(rows) * cols) {
        throw io::ParseError(fname, lineno, "tensor '" + fields[1] + "' payload has " +
                                                std::to_string(data.size()) + " values, header says " +
                                                std::to_string(rows) + "x" + std::to_string(cols));
      }
      ckpt.tensors[fields[1]] = Eigen::Map<const MatX>(data.data(), rows, cols);
    } else {
      throw io::ParseError(fname, lineno, "unknown record '" + fields[0] + "'");
    }
  }
  if (!saw_end) throw io::ParseError(fname, lineno, "truncated checkpoint (missing 'end')");
  return ckpt;
}

void Checkpoint::restore(const std::vector<Parameter*>& params) const {
  for (Parameter* p : params) {
    const auto it = tensors.find(p->name);
    if (it == tensors.end()) {
      throw std::runtime_error("checkpoint: missing tensor '" + p->name + "'");
    }
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
      throw std::runtime_error("checkpoint: tensor '" + p->name + "' is " +
                               std::to_string(it->second.rows()) + "x" +
                               std::to_string(it->second.cols()) + ", model expects " +
                               std::to_string(p->value.rows()) + "x" +
                               std::to_string(p->value.cols()));
    }
    p->value = it->second;
  }
}

}  // namespace fss::nn
