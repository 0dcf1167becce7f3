#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "depflux/config.hpp"

namespace depflux {

/// Git-style object id: SHA-1 of "blob <size>\0<content>", lowercase hex.
std::string git_blob_hash(const std::string& content);

/// JSON manifest for a run: command, the canonical config text and its
/// hash, the parsed config and the files written.
std::string make_manifest(const std::string& command, const ExperimentConfig& config,
                          const std::vector<std::string>& outputs, double runtime_seconds);

/// Line-oriented CSV writer; fields with commas, quotes or newlines are quoted.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);
  void row(const std::vector<std::string>& fields);

 private:
  std::ofstream out_;
};

/// Writes text to a file, creating parent directories. Throws on failure.
void write_file(const std::filesystem::path& path, const std::string& text);

/// Shortest decimal that round-trips the double.
std::string format_double(double v);

}  // namespace depflux
