#include "partmotion/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace partmotion {

namespace {

constexpr char kMagic[4] = {'P', 'M', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& in) {
  const uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

}  // namespace

const ag::Tensor& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
  return it->second;
}

const std::vector<int64_t>& Checkpoint::counter(const std::string& name) const {
  auto it = counters.find(name);
  if (it == counters.end()) throw std::runtime_error("checkpoint: missing counter '" + name + "'");
  return it->second;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<uint32_t>(config.size()));
  for (const auto& [k, v] : config) {
    write_str(out, k);
    write_str(out, v);
  }
  write_u32(out, static_cast<uint32_t>(tensors.size() + counters.size()));
  for (const auto& [name, t] : tensors) {
    write_str(out, name);
    out.put(0);
    write_u32(out, static_cast<uint32_t>(t.rows()));
    write_u32(out, static_cast<uint32_t>(t.cols()));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  for (const auto& [name, c] : counters) {
    write_str(out, name);
    out.put(1);
    write_u32(out, static_cast<uint32_t>(c.size()));
    write_u32(out, 1);
    out.write(reinterpret_cast<const char*>(c.data()),
              static_cast<std::streamsize>(c.size() * sizeof(int64_t)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const uint32_t version = read_u32(in);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const uint32_t n_config = read_u32(in);
  for (uint32_t i = 0; i < n_config; ++i) {
    std::string k = read_str(in);
    ck.config[k] = read_str(in);
  }
  const uint32_t n_tensors = read_u32(in);
  for (uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = read_str(in);
    const int dtype = in.get();
    const uint32_t rows = read_u32(in);
    const uint32_t cols = read_u32(in);
    if (dtype == 0) {
      ag::Tensor t = ag::Tensor::zeros(static_cast<int>(rows), static_cast<int>(cols));
      in.read(reinterpret_cast<char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
      if (!in) throw std::runtime_error("checkpoint: truncated tensor '" + name + "'");
      ck.tensors[name] = t;
    } else if (dtype == 1) {
      std::vector<int64_t> c(static_cast<size_t>(rows) * cols);
      in.read(reinterpret_cast<char*>(c.data()),
              static_cast<std::streamsize>(c.size() * sizeof(int64_t)));
      if (!in) throw std::runtime_error("checkpoint: truncated counter '" + name + "'");
      ck.counters[name] = std::move(c);
    } else {
      throw std::runtime_error("checkpoint: unknown dtype in '" + name + "'");
    }
  }
  return ck;
}

}  // namespace partmotion
