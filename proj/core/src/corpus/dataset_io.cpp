#include "kd/corpus/dataset_io.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <istream>
#include <optional>
#include <ostream>

namespace kd::corpus {

DatasetError::DatasetError(std::size_t line, std::string field, const std::string& what)
    : std::runtime_error(field.empty() ? fmt::format("line {}: {}", line, what)
                                       : fmt::format("line {}: field '{}': {}", line, field, what)),
      line_(line),
      field_(std::move(field)) {}

namespace {

using nlohmann::json;

const json& require(const json& obj, const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw DatasetError(line, field, "missing");
  }
  return *it;
}

std::string require_string(const json& obj, const char* field, std::size_t line, const std::string& context) {
  const auto& v = require(obj, field, line);
  if (!v.is_string() || v.get<std::string>().empty()) {
    throw DatasetError(line, context.empty() ? field : context + "." + field, "expected a non-empty string");
  }
  return v.get<std::string>();
}

ActionStep parse_step(const json& obj, std::size_t line, const std::string& context) {
  if (!obj.is_object()) {
    throw DatasetError(line, context, "expected an object with verb and object");
  }
  ActionStep step;
  step.verb = require_string(obj, "verb", line, context);
  step.object = require_string(obj, "object", line, context);
  return step;
}

Instance parse_instance(const json& doc, std::size_t line, std::optional<Eigen::Index>& dim) {
  if (!doc.is_object()) {
    throw DatasetError(line, "", "expected a JSON object");
  }
  Instance inst;
  inst.id = require_string(doc, "id", line, "");

  const auto& frames = require(doc, "frames", line);
  if (!frames.is_array() || frames.empty()) {
    throw DatasetError(line, "frames", "expected a non-empty array of frame vectors");
  }
  const auto t = static_cast<Eigen::Index>(frames.size());
  const auto d = static_cast<Eigen::Index>(frames.front().is_array() ? frames.front().size() : 0);
  if (d == 0) {
    throw DatasetError(line, "frames", "frame vectors must be non-empty arrays");
  }
  if (dim && *dim != d) {
    throw DatasetError(line, "frames", fmt::format("feature dim {} differs from earlier lines ({})", d, *dim));
  }
  dim = d;
  inst.frames.resize(t, d);
  for (Eigen::Index r = 0; r < t; ++r) {
    const auto& row = frames[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != d) {
      throw DatasetError(line, "frames", fmt::format("frame {} does not have dimension {}", r, d));
    }
    for (Eigen::Index c = 0; c < d; ++c) {
      const auto& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) {
        throw DatasetError(line, "frames", fmt::format("frame {} entry {} is not a number", r, c));
      }
      inst.frames(r, c) = v.get<double>();
    }
  }

  const auto& segments = require(doc, "segments", line);
  if (!segments.is_array() || segments.empty()) {
    throw DatasetError(line, "segments", "expected a non-empty array");
  }
  for (std::size_t i = 0; i < segments.size(); ++i) {
    inst.segments.steps.push_back(parse_step(segments[i], line, fmt::format("segments[{}]", i)));
  }
  inst.target = parse_step(require(doc, "target", line), line, "target");
  return inst;
}

}  // namespace

Dataset read_dataset(std::istream& in) {
  Dataset ds;
  std::optional<Eigen::Index> dim;
  std::optional<double> tau;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DatasetError(line, "", fmt::format("malformed JSON ({})", e.what()));
    }
    ds.instances.push_back(parse_instance(doc, line, dim));
    if (doc.contains("tau")) {
      const auto& v = doc.at("tau");
      if (!v.is_number()) throw DatasetError(line, "tau", "expected a number");
      const double this_tau = v.get<double>();
      if (tau && *tau != this_tau) throw DatasetError(line, "tau", "differs from earlier lines");
      tau = this_tau;
    }
  }
  if (ds.instances.empty()) {
    throw DatasetError(line, "", "no instances");
  }
  if (tau) ds.tau = *tau;
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error(fmt::format("cannot read dataset {}", path.string()));
  }
  return read_dataset(in);
}

void write_dataset(const Dataset& ds, std::ostream& out) {
  validate(ds);
  auto step = [](const ActionStep& s) {
    return fmt::format("{{\"verb\":{},\"object\":{}}}", json(s.verb).dump(), json(s.object).dump());
  };
  std::string buf;
  for (const auto& inst : ds.instances) {
    buf.clear();
    buf += "{\"id\":" + json(inst.id).dump() + ",\"frames\":[";
    for (Eigen::Index r = 0; r < inst.frames.rows(); ++r) {
      if (r) buf += ',';
      buf += '[';
      for (Eigen::Index c = 0; c < inst.frames.cols(); ++c) {
        if (c) buf += ',';
        buf += fmt::format("{}", inst.frames(r, c));
      }
      buf += ']';
    }
    buf += "],\"segments\":[";
    for (std::size_t i = 0; i < inst.segments.steps.size(); ++i) {
      if (i) buf += ',';
      buf += step(inst.segments.steps[i]);
    }
    buf += "],\"target\":" + step(inst.target) + fmt::format(",\"tau\":{}}}\n", ds.tau);
    out << buf;
  }
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot write dataset {}", path.string()));
  }
  write_dataset(ds, out);
}

}  // namespace kd::corpus
