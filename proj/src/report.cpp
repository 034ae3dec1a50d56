#include "gfl/report.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

namespace gfl {

namespace {

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Tolerance metrics are named "tolerance", "gate", or "*_tolerance"; the
// matching defect is the other numeric entry the experiment reports.
bool is_tolerance_key(const std::string& key) {
  return key == "tolerance" || key == "gate" ||
         (key.size() > 10 &&
          key.compare(key.size() - 10, 10, "_tolerance") == 0);
}

std::string render_csv(const std::vector<ExperimentResult>& results) {
  std::ostringstream os;
  os << "experiment,pass,metric,value\n";
  os.precision(17);
  for (const ExperimentResult& e : results) {
    for (const auto& [key, val] : e.metrics.items()) {
      if (key == "csv") continue;
      if (val.is_number())
        os << csv_quote(e.name) << ',' << (e.pass ? 1 : 0) << ','
           << csv_quote(key) << ',' << val.get<double>() << '\n';
      else if (val.is_boolean())
        os << csv_quote(e.name) << ',' << (e.pass ? 1 : 0) << ','
           << csv_quote(key) << ',' << (val.get<bool>() ? 1 : 0) << '\n';
    }
    os << csv_quote(e.name) << ',' << (e.pass ? 1 : 0) << ",seconds,"
       << e.seconds << '\n';
  }
  return os.str();
}

std::string render_json(const std::vector<ExperimentResult>& results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const ExperimentResult& e : results) {
    nlohmann::json metrics = e.metrics;
    if (metrics.contains("csv")) metrics.erase("csv");
    arr.push_back({{"name", e.name},
                   {"pass", e.pass},
                   {"metrics", metrics},
                   {"seconds", e.seconds},
                   {"note", e.note}});
  }
  return nlohmann::json{{"experiments", arr}}.dump(2) + "\n";
}

std::string render_md(const std::vector<ExperimentResult>& results) {
  std::ostringstream os;
  os.precision(6);
  os << "# Run report\n\n";
  os << "| experiment | status | seconds |\n|---|---|---|\n";
  for (const ExperimentResult& e : results)
    os << "| " << e.name << " | " << (e.pass ? "pass" : "FAIL") << " | "
       << e.seconds << " |\n";
  std::ostringstream fails;
  for (const ExperimentResult& e : results) {
    if (e.pass) continue;
    fails << "- `" << e.name << "`";
    if (!e.note.empty()) fails << ": " << e.note;
    double tol = -1.0;
    for (const auto& [key, val] : e.metrics.items())
      if (val.is_number() && is_tolerance_key(key))
        tol = std::max(tol, val.get<double>());
    for (const auto& [key, val] : e.metrics.items())
      if (val.is_number() && !is_tolerance_key(key) && key != "seconds")
        fails << "\n  - " << key << " = " << val.get<double>();
    if (tol >= 0.0) fails << "\n  - tolerance = " << tol;
    fails << '\n';
  }
  const std::string body = fails.str();
  if (!body.empty()) os << "\n## Failed invariants\n\n" << body;
  return os.str();
}

}  // namespace

std::string timestamp_utc() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

nlohmann::json manifest_json(const RunManifest& manifest) {
  return {{"command", manifest.command},
          {"config_hash", manifest.config_hash},
          {"seed", manifest.seed},
          {"version", manifest.version},
          {"started", manifest.started},
          {"finished", manifest.finished},
          {"outputs", manifest.outputs}};
}

void atomic_write(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

std::filesystem::path emit_report(const std::vector<ExperimentResult>& results,
                                  const std::string& format,
                                  const std::filesystem::path& dir,
                                  const std::string& stem) {
  std::string text;
  std::string ext = format;
  if (format == "csv")
    text = render_csv(results);
  else if (format == "json")
    text = render_json(results);
  else if (format == "md")
    text = render_md(results);
  else
    throw std::invalid_argument("emit_report: unknown format \"" + format +
                                "\"");
  const std::filesystem::path path = dir / (stem + "." + ext);
  atomic_write(path, text);
  return path;
}

}  // namespace gfl
