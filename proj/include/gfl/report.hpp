#pragma once

#include <filesystem>

#include "gfl/scenario.hpp"

namespace gfl {

// Provenance record written next to every CLI run's outputs.
struct RunManifest {
  std::string command;
  std::string config_hash;
  uint64_t seed = 0;
  std::string version;
  std::string started, finished;
  std::vector<std::string> outputs;
};

nlohmann::json manifest_json(const RunManifest& manifest);
std::string timestamp_utc();

// Write-to-temp-then-rename so readers never see a half-written file.
void atomic_write(const std::filesystem::path& path, const std::string& text);

// Renders experiment results under dir as <stem>.<format>.
//   csv : long format, one row per (experiment, metric)
//   json: the full result objects
//   md  : summary table plus one line per failed invariant with its defect
//         and tolerance
// Empty result lists still produce a header-only file. Returns the path.
std::filesystem::path emit_report(const std::vector<ExperimentResult>& results,
                                  const std::string& format,
                                  const std::filesystem::path& dir,
                                  const std::string& stem);

}  // namespace gfl
