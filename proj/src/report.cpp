#include "medrdf/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "medrdf/error.hpp"

namespace medrdf {
namespace fs = std::filesystem;

void ReportTable::add(std::string defense, std::string denoiser, std::string attack,
                      std::string metric, double v) {
  cells.push_back({std::move(defense), std::move(denoiser), std::move(attack), std::move(metric), v});
}

double ReportTable::value(std::string_view defense, std::string_view denoiser,
                          std::string_view attack, std::string_view metric) const {
  for (const auto& c : cells) {
    if (c.defense == defense && c.denoiser == denoiser && c.attack == attack && c.metric == metric) {
      return c.value;
    }
  }
  throw InvalidInput("table '" + name + "' has no cell (" + std::string(defense) + ", " +
                     std::string(denoiser) + ", " + std::string(attack) + ", " +
                     std::string(metric) + ")");
}

std::string format_exact(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// RFC 4180 records; fields keep embedded separators and doubled quotes.
std::vector<std::vector<std::string>> split_csv(std::string_view text, std::string_view source) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, in_field = false;
  std::size_t line = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      quoted = in_field = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      in_field = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      in_field = false;
      ++line;
    } else {
      field += c;
      in_field = true;
    }
  }
  if (quoted) throw ParseError(std::string(source) + ": unterminated quoted field at line " + std::to_string(line));
  if (in_field || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

constexpr const char* kHeader = "defense,denoiser,attack,metric,value";

std::string format_one_decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

template <class T>
void remember(std::vector<T>& order, const T& key) {
  if (std::find(order.begin(), order.end(), key) == order.end()) order.push_back(key);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace

std::string to_csv(const ReportTable& table) {
  std::string out = kHeader;
  out += '\n';
  for (const auto& c : table.cells) {
    out += quote(c.defense) + ',' + quote(c.denoiser) + ',' + quote(c.attack) + ',' + quote(c.metric) +
           ',' + format_exact(c.value) + '\n';
  }
  return out;
}

std::vector<ReportCell> parse_report_csv(std::string_view text, std::string_view source) {
  const auto rows = split_csv(text, source);
  if (rows.empty()) throw ParseError(std::string(source) + ": missing header row");
  const std::vector<std::string> header{"defense", "denoiser", "attack", "metric", "value"};
  if (rows.front() != header) throw ParseError(std::string(source) + ": unexpected header at line 1");
  std::vector<ReportCell> cells;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != 5) {
      throw ParseError(std::string(source) + ": line " + std::to_string(r + 1) + " has " +
                       std::to_string(f.size()) + " fields, expected 5");
    }
    double v = 0.0;
    const auto res = std::from_chars(f[4].data(), f[4].data() + f[4].size(), v);
    if (res.ec != std::errc() || res.ptr != f[4].data() + f[4].size()) {
      throw ParseError(std::string(source) + ": bad number '" + f[4] + "' on line " + std::to_string(r + 1));
    }
    cells.push_back({f[0], f[1], f[2], f[3], v});
  }
  return cells;
}

std::string timings_to_csv(const ReportTable& table) {
  std::string out = "defense,denoiser,attack,seconds_per_image,images\n";
  for (const auto& t : table.timings) {
    out += quote(t.defense) + ',' + quote(t.denoiser) + ',' + quote(t.attack) + ',' +
           format_exact(t.seconds_per_image) + ',' + std::to_string(t.images) + '\n';
  }
  return out;
}

std::string to_markdown(const ReportTable& table) {
  const bool by_defense = table.layout == Layout::ByDefense;
  auto row_key = [&](const ReportCell& c) {
    return by_defense ? std::vector<std::string>{c.defense, c.denoiser} : std::vector<std::string>{c.attack};
  };

  // Which non-row fields vary across the table decides the column label.
  std::set<std::string> defenses, denoisers, attacks, metrics;
  for (const auto& c : table.cells) {
    defenses.insert(c.defense);
    denoisers.insert(c.denoiser);
    attacks.insert(c.attack);
    metrics.insert(c.metric);
  }
  auto col_key = [&](const ReportCell& c) {
    std::vector<std::string> parts;
    if (!by_defense) {
      if (defenses.size() > 1) parts.push_back(c.defense);
      if (denoisers.size() > 1) parts.push_back(c.denoiser);
    } else if (attacks.size() > 1) {
      parts.push_back(c.attack);
    }
    if (metrics.size() > 1 || parts.empty()) parts.push_back(c.metric);
    std::string label;
    for (const auto& p : parts) label += (label.empty() ? "" : " / ") + p;
    return label;
  };

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> cols;
  std::map<std::pair<std::vector<std::string>, std::string>, double> grid;
  for (const auto& c : table.cells) {
    remember(rows, row_key(c));
    remember(cols, col_key(c));
    grid.emplace(std::make_pair(row_key(c), col_key(c)), c.value);
  }

  std::string out;
  if (!table.title.empty()) out += "## " + table.title + "\n\n";
  if (!table.complete) out += "_Interrupted: partial results._\n\n";
  const std::vector<std::string> head =
      by_defense ? std::vector<std::string>{"Defense", "Denoiser"} : std::vector<std::string>{"Attack"};
  out += "|";
  for (const auto& h : head) out += " " + h + " |";
  for (const auto& c : cols) out += " " + c + " |";
  out += "\n|";
  for (std::size_t i = 0; i < head.size() + cols.size(); ++i) out += (i < head.size() ? " --- |" : " ---: |");
  out += "\n";
  for (const auto& r : rows) {
    out += "|";
    for (const auto& k : r) out += " " + k + " |";
    for (const auto& c : cols) {
      const auto it = grid.find({r, c});
      out += " " + (it == grid.end() ? std::string("-") : format_one_decimal(it->second)) + " |";
    }
    out += "\n";
  }
  if (!table.timings.empty()) {
    out += "\n| Defense | Denoiser | Attack | Time per image (s) |\n| --- | --- | --- | ---: |\n";
    for (const auto& t : table.timings) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.4f", t.seconds_per_image);
      out += "| " + t.defense + " | " + t.denoiser + " | " + t.attack + " | " + buf + " |\n";
    }
  }
  return out;
}

std::vector<fs::path> emit_report(const ReportTable& table, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  std::vector<fs::path> written{dir / (table.name + ".csv"), dir / (table.name + ".md")};
  write_file(written[0], to_csv(table));
  write_file(written[1], to_markdown(table));
  if (!table.timings.empty()) {
    written.push_back(dir / (table.name + "_timing.csv"));
    write_file(written.back(), timings_to_csv(table));
  }
  return written;
}

}  // namespace medrdf
