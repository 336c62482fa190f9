#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "partmotion/tensor.hpp"

namespace partmotion {

// Versioned binary container for parameters, counters and a config echo.
// Layout (little-endian, see docs/formats.md):
//   magic "PMCK", u32 version,
//   u32 n_config  { u32 klen, key, u32 vlen, value }...
//   u32 n_tensors { u32 nlen, name, u8 dtype (0=f64, 1=i64),
//                   u32 rows, u32 cols, payload }...
struct Checkpoint {
  std::map<std::string, std::string> config;
  std::map<std::string, ag::Tensor> tensors;
  std::map<std::string, std::vector<int64_t>> counters;

  void put(const std::string& name, const ag::Tensor& t) { tensors[name] = t; }
  void put_counters(const std::string& name, const std::vector<int64_t>& c) { counters[name] = c; }

  const ag::Tensor& tensor(const std::string& name) const;
  const std::vector<int64_t>& counter(const std::string& name) const;
  bool has_tensor(const std::string& name) const { return tensors.count(name) > 0; }

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace partmotion
