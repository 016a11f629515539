#include "kd/nn/checkpoint.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace kd::nn {

std::string format_double17(double v) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument("checkpoint: cannot serialize a non-finite value");
  }
  return fmt::format("{:.17g}", v);
}

Checkpoint capture(const ParamStore& store, nlohmann::json config, const std::string& prefix_filter) {
  Checkpoint ckpt;
  ckpt.config = std::move(config);
  for (const auto& p : store.entries()) {
    if (p.name.rfind(prefix_filter, 0) != 0) {
      continue;
    }
    const Matrix& m = p.var.value();
    TensorData t;
    t.shape = {static_cast<int>(m.rows()), static_cast<int>(m.cols())};
    t.values.assign(m.data(), m.data() + m.size());
    ckpt.params.emplace(p.name, std::move(t));
  }
  return ckpt;
}

void restore(const Checkpoint& ckpt, ParamStore& store, const std::string& prefix_filter) {
  for (const auto& [name, tensor] : ckpt.params) {
    if (name.rfind(prefix_filter, 0) != 0) {
      continue;
    }
    if (!store.contains(name)) {
      throw std::invalid_argument(fmt::format("checkpoint tensor '{}' has no matching parameter", name));
    }
    Var var = store.get(name);
    Matrix& m = var.mutable_value();
    if (tensor.shape.size() != 2 || tensor.shape[0] != m.rows() || tensor.shape[1] != m.cols()) {
      throw std::invalid_argument(fmt::format("checkpoint tensor '{}' has shape [{}] but parameter is {}x{}",
                                              name, fmt::join(tensor.shape, ","), m.rows(), m.cols()));
    }
    std::copy(tensor.values.begin(), tensor.values.end(), m.data());
  }
}

std::string serialize(const Checkpoint& ckpt) {
  std::ostringstream out;
  out << "{\"format_version\":" << Checkpoint::kFormatVersion << ",\"config\":" << ckpt.config.dump()
      << ",\"params\":{";
  bool first = true;
  for (const auto& [name, tensor] : ckpt.params) {
    if (!first) out << ',';
    first = false;
    out << nlohmann::json(name).dump() << ":{\"shape\":[" << fmt::format("{}", fmt::join(tensor.shape, ","))
        << "],\"values\":[";
    for (std::size_t i = 0; i < tensor.values.size(); ++i) {
      if (i) out << ',';
      out << format_double17(tensor.values[i]);
    }
    out << "]}";
  }
  out << "}}\n";
  return out.str();
}

Checkpoint deserialize(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  const int version = doc.at("format_version").get<int>();
  if (version != Checkpoint::kFormatVersion) {
    throw std::runtime_error(fmt::format("unsupported checkpoint format_version {}", version));
  }
  Checkpoint ckpt;
  ckpt.config = doc.at("config");
  for (const auto& [name, entry] : doc.at("params").items()) {
    TensorData t;
    t.shape = entry.at("shape").get<std::vector<int>>();
    t.values = entry.at("values").get<std::vector<double>>();
    std::size_t expected = 1;
    for (int d : t.shape) expected *= static_cast<std::size_t>(d);
    if (expected != t.values.size()) {
      throw std::runtime_error(fmt::format("checkpoint tensor '{}': {} values for shape [{}]", name,
                                           t.values.size(), fmt::join(t.shape, ",")));
    }
    ckpt.params.emplace(name, std::move(t));
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot write checkpoint {}", path.string()));
  }
  out << serialize(ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error(fmt::format("cannot read checkpoint {}", path.string()));
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace kd::nn
