#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "kd/corpus/types.hpp"

namespace kd::corpus {

// Schema violation in a dataset JSONL file. `line()` is 1-based; `field()`
// names the offending key (empty for whole-line problems).
class DatasetError : public std::runtime_error {
 public:
  DatasetError(std::size_t line, std::string field, const std::string& what);

  [[nodiscard]] std::size_t line() const { return line_; }
  [[nodiscard]] const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

// One Instance per line:
//   {"id":"...","frames":[[f,...],...],"segments":[{"verb":"cut","object":"onion"},...],
//    "target":{"verb":"...","object":"..."},"tau":1}
// Numbers use the shortest exact round-trip form. "tau" is optional on
// read and must agree across lines when present.
Dataset read_dataset(std::istream& in);
Dataset load_dataset(const std::filesystem::path& path);

void write_dataset(const Dataset& ds, std::ostream& out);
void write_dataset(const Dataset& ds, const std::filesystem::path& path);

}  // namespace kd::corpus
