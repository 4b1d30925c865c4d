#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dct/records.hpp"

namespace dct {

/// Mean and standard error across seeds of one table cell. Rows sharing a
/// seed are averaged first.
struct SummaryRow {
  std::string experiment;
  std::string generator;
  std::string conditioning;
  std::string regime;
  std::size_t K = 0;
  std::string split;
  std::string metric;
  std::string mu_inf_bucket;
  std::size_t n_seeds = 0;
  std::size_t n_rows = 0;
  double mean = 0.0;
  double stderr_ = 0.0;  // sample sd / sqrt(n_seeds); 0 for one seed
};

/// Groups rows on every column except value and seed. Output is sorted by
/// the group key.
std::vector<SummaryRow> aggregate(const std::vector<MetricsRecord>& rows);

/// One-hot minus any-to-any mean per (experiment, generator, K, split, metric).
struct GapRow {
  std::string experiment;
  std::string generator;
  std::size_t K = 0;
  std::string split;
  std::string metric;
  double onehot = 0.0;
  double any_to_any = 0.0;
  double gap = 0.0;
  double stderr_ = 0.0;
};

std::vector<GapRow> onehot_gaps(const std::vector<SummaryRow>& summary);

enum ReportStatus { report_ok = 0, report_empty = 2 };

/// Reads <dir>/metrics.csv (and reports.jsonl when present) and writes
/// <dir>/report/{summary,fig2_grid,fig3_gap,fig5_semisup}.csv plus
/// alignment.csv and scaling.csv from the diagnostic records. Returns
/// report_empty when there is neither a CSV row nor a diagnostic record.
/// Throws on a missing or malformed CSV.
ReportStatus write_report(const std::filesystem::path& dir);

}  // namespace dct
