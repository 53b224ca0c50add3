#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace medrdf {

// One number of a result table, e.g. (MedRDF s.p. 0.1, MF, PGD-20, accuracy) -> 96.0.
// Accuracies and RM-breakdown cells are percentages.
struct ReportCell {
  std::string defense;
  std::string denoiser;
  std::string attack;
  std::string metric;
  double value = 0.0;

  bool operator==(const ReportCell&) const = default;
};

// Wall-clock measurements. Kept apart from the cells so that the main CSV
// is byte-identical across runs.
struct TimingRow {
  std::string defense;
  std::string denoiser;
  std::string attack;
  double seconds_per_image = 0.0;
  long images = 0;

  bool operator==(const TimingRow&) const = default;
};

enum class Layout {
  ByDefense,  // one Markdown row per (defense, denoiser)
  ByAttack,   // one Markdown row per attack
};

struct ReportTable {
  std::string name;  // file stem
  std::string title;
  Layout layout = Layout::ByDefense;
  std::vector<ReportCell> cells;
  std::vector<TimingRow> timings;
  bool complete = true;  // false when the run was interrupted

  void add(std::string defense, std::string denoiser, std::string attack, std::string metric,
           double value);
  // First cell matching the key; throws InvalidInput when absent.
  double value(std::string_view defense, std::string_view denoiser, std::string_view attack,
               std::string_view metric) const;
};

// Shortest decimal text that parses back to exactly `v`.
std::string format_exact(double v);

// defense,denoiser,attack,metric,value with RFC 4180 quoting.
std::string to_csv(const ReportTable& table);
std::vector<ReportCell> parse_report_csv(std::string_view text, std::string_view source = "csv");
std::string timings_to_csv(const ReportTable& table);
// Values with one decimal place; the column set is whatever varies beyond
// the row key.
std::string to_markdown(const ReportTable& table);

// Writes <dir>/<name>.csv and <dir>/<name>.md, plus <dir>/<name>_timing.csv
// when the table has timings. Returns the paths written.
std::vector<std::filesystem::path> emit_report(const ReportTable& table,
                                               const std::filesystem::path& dir);

}  // namespace medrdf
