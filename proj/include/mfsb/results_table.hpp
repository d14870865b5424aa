#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mfsb/metrics.hpp"

namespace mfsb {

struct ResultRow {
  std::string method;
  double seen = 0.0, unseen = 0.0, hm = 0.0, auc = 0.0;  // ratios in [0, 1]
};

/// Method | S | U | HM | AUC for one evaluation world.
struct ResultsTable {
  World world = World::Open;
  std::vector<ResultRow> rows;

  /// Rejects an empty method label.
  void add(ResultRow row);
};

enum class TableFormat { Csv, Markdown };
std::optional<TableFormat> parse_table_format(std::string_view text);

/// Ratio times 100 with two decimals: 0.4933 -> "49.33".
std::string format_percent(double ratio);

/// CSV uses the report column contract `method,world,S,U,HM,AUC`; both
/// formats print values as format_percent.
std::string emit_results_table(const ResultsTable& table, TableFormat format);

/// Reads emit_results_table's CSV back. Values stay in percent units as
/// printed, divided by 100.
ResultsTable parse_results_csv(std::istream& in);

}  // namespace mfsb
