#include "mfsb/results_table.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <sstream>

#include "mfsb/error.hpp"

namespace mfsb {

void ResultsTable::add(ResultRow row) {
  if (row.method.empty()) fail(ErrorKind::Config, "result rows need a method label");
  rows.push_back(std::move(row));
}

std::optional<TableFormat> parse_table_format(std::string_view text) {
  if (text == "csv") return TableFormat::Csv;
  if (text == "markdown") return TableFormat::Markdown;
  return std::nullopt;
}

std::string format_percent(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", ratio * 100.0);
  return buf;
}

std::string emit_results_table(const ResultsTable& table, TableFormat format) {
  std::ostringstream out;
  if (format == TableFormat::Csv) {
    out << "method,world,S,U,HM,AUC\n";
    for (const auto& r : table.rows) {
      out << csv_field(r.method) << ',' << to_string(table.world) << ',' << format_percent(r.seen) << ','
          << format_percent(r.unseen) << ',' << format_percent(r.hm) << ',' << format_percent(r.auc) << '\n';
    }
    return out.str();
  }
  out << "| Method (" << to_string(table.world) << " world) | S | U | HM | AUC |\n";
  out << "|---|---:|---:|---:|---:|\n";
  for (const auto& r : table.rows) {
    out << "| " << r.method << " | " << format_percent(r.seen) << " | " << format_percent(r.unseen) << " | "
        << format_percent(r.hm) << " | " << format_percent(r.auc) << " |\n";
  }
  return out.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') fields.back() += '"', ++i;
      else if (c == '"') quoted = false;
      else fields.back() += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) fail(ErrorKind::Io, "results line " + std::to_string(line_no) + ": unterminated quote");
  return fields;
}

double parse_percent(const std::string& text, std::size_t line_no) {
  double v = 0.0;
  auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc{} || r.ptr != text.data() + text.size()) {
    fail(ErrorKind::Io, "results line " + std::to_string(line_no) + ": bad value '" + text + "'");
  }
  return v / 100.0;
}

}  // namespace

ResultsTable parse_results_csv(std::istream& in) {
  ResultsTable table;
  std::string line;
  std::size_t line_no = 0;
  bool world_set = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "method,world,S,U,HM,AUC") fail(ErrorKind::Io, "results CSV has an unexpected header");
      continue;
    }
    if (line.empty()) continue;
    auto f = split_csv_line(line, line_no);
    if (f.size() != 6) fail(ErrorKind::Io, "results line " + std::to_string(line_no) + ": expected 6 fields");
    if (f[1] != "open" && f[1] != "closed") {
      fail(ErrorKind::Io, "results line " + std::to_string(line_no) + ": bad world '" + f[1] + "'");
    }
    const World w = f[1] == "open" ? World::Open : World::Closed;
    if (world_set && w != table.world) fail(ErrorKind::Io, "results CSV mixes worlds");
    table.world = w;
    world_set = true;
    table.add({f[0], parse_percent(f[2], line_no), parse_percent(f[3], line_no), parse_percent(f[4], line_no),
               parse_percent(f[5], line_no)});
  }
  if (line_no == 0) fail(ErrorKind::Io, "empty results CSV");
  return table;
}

}  // namespace mfsb
