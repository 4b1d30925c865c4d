#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dct/rng.hpp"
#include "dct/sample_set.hpp"

namespace dct {

/// One evaluation row of the metrics CSV.
struct MetricsRecord {
  std::string experiment;
  std::string generator;
  std::string conditioning;
  std::string regime;
  std::size_t K = 0;
  std::string split;  // "IID" or "OOD"
  std::string metric;
  double value = 0.0;
  std::uint64_t seed = 0;
  std::string mu_inf_bucket;  // empty outside semi-supervised runs

  bool operator==(const MetricsRecord&) const = default;
};

inline constexpr const char* kCsvHeader =
    "experiment,generator,conditioning,regime,K,split,metric,value,seed,mu_inf_bucket";

enum class MetricKind { energy, swd, mmd_rbf, gaussian_w2 };

std::string to_string(MetricKind m);
MetricKind parse_metric(const std::string& s);
const std::vector<MetricKind>& all_metrics();

/// Distance between a generated set and a reference set. SWD uses 100
/// projections drawn from `rng`.
double compute_metric(MetricKind m, const SampleSet& generated,
                      const SampleSet& reference, Rng& rng);

/// Bucket label "[lo,hi)" of width 0.5 containing x >= 0.
std::string mu_inf_bucket(double x);

void write_csv(std::ostream& os, const std::vector<MetricsRecord>& rows);
/// Throws std::runtime_error on a header or field mismatch.
std::vector<MetricsRecord> read_csv(std::istream& is);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace dct
