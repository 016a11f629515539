#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kd/nn/param_store.hpp"

namespace kd::nn {

struct TensorData {
  std::vector<int> shape;
  std::vector<double> values;

  bool operator==(const TensorData&) const = default;
};

// Named parameter tensors plus the config that produced them.
//
// On disk:
//   {"format_version":1,"config":{...},"params":{name:{"shape":[...],"values":[...]}}}
// Keys are sorted and every float is written with 17 significant digits,
// so save/load is an exact 64-bit round trip and output is byte-stable.
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, TensorData> params;

  bool operator==(const Checkpoint&) const = default;
};

Checkpoint capture(const ParamStore& store, nlohmann::json config, const std::string& prefix_filter = "");

// Copies every tensor of `ckpt` whose name starts with `prefix_filter` into
// the store. Throws if a name is missing from the store or a shape differs.
void restore(const Checkpoint& ckpt, ParamStore& store, const std::string& prefix_filter = "");

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::string& text);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// "%.17g"
std::string format_double17(double v);

}  // namespace kd::nn
