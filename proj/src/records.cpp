#include "dct/records.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "dct/metrics.hpp"

namespace dct {

std::string to_string(MetricKind m) {
  switch (m) {
    case MetricKind::energy: return "energy";
    case MetricKind::swd: return "swd";
    case MetricKind::mmd_rbf: return "mmd_rbf";
    case MetricKind::gaussian_w2: return "gaussian_w2";
  }
  return "?";
}

MetricKind parse_metric(const std::string& s) {
  for (MetricKind m : all_metrics())
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown metric '" + s + "'");
}

const std::vector<MetricKind>& all_metrics() {
  static const std::vector<MetricKind> v{MetricKind::energy, MetricKind::swd,
                                         MetricKind::mmd_rbf, MetricKind::gaussian_w2};
  return v;
}

double compute_metric(MetricKind m, const SampleSet& generated,
                      const SampleSet& reference, Rng& rng) {
  switch (m) {
    case MetricKind::energy: return energy_distance(generated, reference);
    case MetricKind::swd: return sliced_wasserstein(generated, reference, 100, rng);
    case MetricKind::mmd_rbf: return mmd_rbf(generated, reference);
    case MetricKind::gaussian_w2:
      return gaussian_w2(fit_gaussian(generated).params, fit_gaussian(reference).params);
  }
  throw std::invalid_argument("compute_metric: unknown metric");
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string mu_inf_bucket(double x) {
  if (!(x >= 0.0)) throw std::invalid_argument("mu_inf_bucket: negative norm");
  const double lo = 0.5 * std::floor(x / 0.5);
  return "[" + format_double(lo) + "," + format_double(lo + 0.5) + ")";
}

namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

template <typename T>
T parse_number(const std::string& s, const char* field) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::runtime_error(std::string("CSV: bad ") + field + " '" + s + "'");
  return v;
}

}  // namespace

void write_csv(std::ostream& os, const std::vector<MetricsRecord>& rows) {
  os << kCsvHeader << '\n';
  for (const auto& r : rows) {
    if (!std::isfinite(r.value))
      throw std::invalid_argument("write_csv: non-finite value for " + r.metric);
    os << quote(r.experiment) << ',' << quote(r.generator) << ','
       << quote(r.conditioning) << ',' << quote(r.regime) << ',' << r.K << ','
       << r.split << ',' << r.metric << ',' << format_double(r.value) << ','
       << r.seed << ',' << quote(r.mu_inf_bucket) << '\n';
  }
}

std::vector<MetricsRecord> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("CSV: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw std::runtime_error("CSV: unexpected header '" + line + "'");
  std::vector<MetricsRecord> rows;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != 10)
      throw std::runtime_error("CSV: expected 10 fields, got " + std::to_string(f.size()));
    MetricsRecord r;
    r.experiment = f[0];
    r.generator = f[1];
    r.conditioning = f[2];
    r.regime = f[3];
    r.K = parse_number<std::size_t>(f[4], "K");
    r.split = f[5];
    r.metric = f[6];
    r.value = parse_number<double>(f[7], "value");
    r.seed = parse_number<std::uint64_t>(f[8], "seed");
    r.mu_inf_bucket = f[9];
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace dct
