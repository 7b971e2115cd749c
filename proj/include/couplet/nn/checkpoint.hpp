#pragma once

// Checkpoint container:
//
//   CFKP1\n
//   <name> <rows> <cols>\n      one line per tensor, in name order
//   \n                          empty line ends the header
//   <binary>                    row-major little-endian IEEE-754 float32,
//                               tensors concatenated in header order
//
// Only parameter values are stored; optimizer moments are not.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "couplet/errors.hpp"
#include "couplet/nn/params.hpp"

namespace couplet::nn {

inline constexpr const char* kCheckpointMagic = "CFKP1";

template <class T>
void write_checkpoint(std::ostream& out, const ParamSet<T>& params) {
  out << kCheckpointMagic << '\n';
  for (const auto& [name, p] : params) {
    if (name.find_first_of(" \t\n") != std::string::npos)
      throw std::invalid_argument("checkpoint: tensor name contains whitespace: '" + name + "'");
    out << name << ' ' << p.value.rows << ' ' << p.value.cols << '\n';
  }
  out << '\n';
  for (const auto& [_, p] : params) {
    for (T x : p.value.values) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(x));
      const char bytes[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                             static_cast<char>((bits >> 16) & 0xFF), static_cast<char>((bits >> 24) & 0xFF)};
      out.write(bytes, 4);
    }
  }
}

template <class T>
ParamSet<T> read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) throw FormatError("checkpoint: missing CFKP1 magic", 1);
  struct Entry {
    std::string name;
    std::size_t rows, cols;
  };
  std::vector<Entry> header;
  std::size_t lineno = 1;
  while (true) {
    ++lineno;
    if (!std::getline(in, line)) throw FormatError("checkpoint: header not terminated", lineno);
    if (line.empty()) break;
    std::istringstream ls(line);
    Entry e;
    std::string extra;
    if (!(ls >> e.name >> e.rows >> e.cols) || (ls >> extra))
      throw FormatError("checkpoint: bad header line '" + line + "'", lineno);
    header.push_back(std::move(e));
  }
  ParamSet<T> params;
  for (const auto& e : header) {
    Tensor<T> t(e.rows, e.cols);
    for (auto& x : t.values) {
      unsigned char b[4];
      if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint: truncated data for '" + e.name + "'");
      const std::uint32_t bits = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
                                 (std::uint32_t(b[3]) << 24);
      x = static_cast<T>(std::bit_cast<float>(bits));
    }
    params.add(e.name, std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes after data");
  return params;
}

template <class T>
void save_checkpoint(const std::string& path, const ParamSet<T>& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, params);
  if (!out) throw IoError("write failed for checkpoint '" + path + "'");
}

template <class T>
ParamSet<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path + "'");
  return read_checkpoint<T>(in);
}

}  // namespace couplet::nn
