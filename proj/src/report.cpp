#include "dct/report.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "dct/io.hpp"

namespace dct {

namespace fs = std::filesystem;

namespace {

using Key = std::tuple<std::string, std::string, std::string, std::string, std::size_t,
                       std::string, std::string, std::string>;

Key key_of(const MetricsRecord& r) {
  return {r.experiment, r.generator, r.conditioning, r.regime,
          r.K,          r.split,     r.metric,       r.mu_inf_bucket};
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  if (v.empty()) return out;
  double s = 0.0;
  for (double x : v) s += x;
  out.mean = s / static_cast<double>(v.size());
  if (v.size() < 2) return out;
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / static_cast<double>(v.size() - 1)) /
           std::sqrt(static_cast<double>(v.size()));
  return out;
}

std::string num(double v) { return format_double(v); }

std::string table(const std::string& header, const std::vector<std::string>& lines) {
  std::string s = header + "\n";
  for (const auto& l : lines) s += l + "\n";
  return s;
}

}  // namespace

std::vector<SummaryRow> aggregate(const std::vector<MetricsRecord>& rows) {
  // key -> seed -> (sum, count)
  std::map<Key, std::map<std::uint64_t, std::pair<double, std::size_t>>> groups;
  for (const auto& r : rows) {
    auto& cell = groups[key_of(r)][r.seed];
    cell.first += r.value;
    ++cell.second;
  }
  std::vector<SummaryRow> out;
  for (const auto& [k, seeds] : groups) {
    SummaryRow s;
    std::tie(s.experiment, s.generator, s.conditioning, s.regime, s.K, s.split, s.metric,
             s.mu_inf_bucket) = k;
    std::vector<double> per_seed;
    for (const auto& [seed, sc] : seeds) {
      per_seed.push_back(sc.first / static_cast<double>(sc.second));
      s.n_rows += sc.second;
    }
    const MeanSe m = mean_se(per_seed);
    s.n_seeds = per_seed.size();
    s.mean = m.mean;
    s.stderr_ = m.se;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<GapRow> onehot_gaps(const std::vector<SummaryRow>& summary) {
  using GapKey = std::tuple<std::string, std::string, std::size_t, std::string, std::string>;
  std::map<GapKey, std::pair<const SummaryRow*, const SummaryRow*>> pairs;
  for (const auto& s : summary) {
    if (!s.mu_inf_bucket.empty()) continue;
    const GapKey k{s.experiment, s.generator, s.K, s.split, s.metric};
    if (s.conditioning == "onehot") pairs[k].first = &s;
    if (s.conditioning == "stc") pairs[k].second = &s;
  }
  std::vector<GapRow> out;
  for (const auto& [k, p] : pairs) {
    if (!p.first || !p.second) continue;
    GapRow g;
    std::tie(g.experiment, g.generator, g.K, g.split, g.metric) = k;
    g.onehot = p.first->mean;
    g.any_to_any = p.second->mean;
    g.gap = g.onehot - g.any_to_any;
    g.stderr_ = std::hypot(p.first->stderr_, p.second->stderr_);
    out.push_back(std::move(g));
  }
  return out;
}

ReportStatus write_report(const fs::path& dir) {
  const fs::path csv = dir / "metrics.csv";
  if (!fs::exists(csv)) throw std::runtime_error("report: " + csv.string() + " not found");
  std::ifstream in(csv);
  const std::vector<MetricsRecord> rows = read_csv(in);
  const auto summary = aggregate(rows);
  const fs::path out = dir / "report";
  fs::create_directories(out);

  std::vector<std::string> lines, fig2, fig5;
  for (const auto& s : summary) {
    std::ostringstream l;
    l << s.experiment << ',' << s.generator << ',' << s.conditioning << ',' << s.regime
      << ',' << s.K << ',' << s.split << ',' << s.metric << ','
      << (s.mu_inf_bucket.empty() ? "" : "\"" + s.mu_inf_bucket + "\"") << ','
      << s.n_seeds << ',' << s.n_rows << ',' << num(s.mean) << ',' << num(s.stderr_);
    lines.push_back(l.str());

    const auto at = s.experiment.rfind('@');
    if (at != std::string::npos) {
      const std::string cell = s.experiment.substr(at + 1);
      const auto us = cell.find('_');
      std::ostringstream f;
      f << s.experiment.substr(0, at) << ',' << cell.substr(0, us) << ','
        << cell.substr(us + 1) << ',' << s.generator << ',' << s.conditioning << ','
        << s.K << ',' << s.metric << ',' << num(s.mean) << ',' << num(s.stderr_);
      fig2.push_back(f.str());
    }
    if (!s.mu_inf_bucket.empty()) {
      std::ostringstream f;
      f << s.experiment << ',' << s.generator << ',' << s.regime << ',' << s.metric << ",\""
        << s.mu_inf_bucket << "\"," << num(s.mean) << ',' << num(s.stderr_);
      fig5.push_back(f.str());
    }
  }
  std::vector<std::string> fig3;
  for (const auto& g : onehot_gaps(summary)) {
    std::ostringstream f;
    f << g.experiment << ',' << g.generator << ',' << g.K << ',' << g.split << ','
      << g.metric << ',' << num(g.onehot) << ',' << num(g.any_to_any) << ',' << num(g.gap)
      << ',' << num(g.stderr_);
    fig3.push_back(f.str());
  }
  write_file(out / "summary.csv",
             table("experiment,generator,conditioning,regime,K,split,metric,mu_inf_bucket,"
                   "n_seeds,n_rows,mean,stderr",
                   lines));
  write_file(out / "fig2_grid.csv",
             table("experiment,i,j,generator,conditioning,K,metric,mean,stderr", fig2));
  write_file(out / "fig3_gap.csv",
             table("experiment,generator,K,split,metric,onehot,any_to_any,gap,stderr", fig3));
  write_file(out / "fig5_semisup.csv",
             table("experiment,generator,regime,metric,mu_inf_bucket,mean,stderr", fig5));

  std::size_t records = 0;
  const fs::path jl = dir / "reports.jsonl";
  if (fs::exists(jl)) {
    using Json = nlohmann::ordered_json;
    std::map<std::pair<std::string, std::string>, std::vector<Json>> align, scaling;
    std::ifstream rin(jl);
    std::string line;
    while (std::getline(rin, line)) {
      if (line.empty()) continue;
      const Json j = Json::parse(line);
      ++records;
      const std::string kind = j.value("kind", "");
      const auto k = std::make_pair(j.value("experiment", ""), j.value("generator", ""));
      if (kind == "alignment_summary") align[k].push_back(j);
      if (kind == "clt" || kind == "plugin" || kind == "trajectory")
        scaling[{k.first + "," + k.second, kind}].push_back(j);
    }
    auto field = [](const std::vector<Json>& js, const char* f) {
      std::vector<double> v;
      for (const auto& j : js)
        if (j.contains(f) && j.at(f).is_number()) v.push_back(j.at(f).get<double>());
      return v;
    };
    std::vector<std::string> a;
    for (const auto& [k, js] : align) {
      const MeanSe r = mean_se(field(js, "ratio"));
      const MeanSe rho = mean_se(field(js, "spearman_rho"));
      a.push_back(k.first + "," + k.second + "," + std::to_string(js.size()) + "," +
                  num(r.mean) + "," + num(r.se) + "," + num(rho.mean) + "," + num(rho.se));
    }
    write_file(out / "alignment.csv",
               table("experiment,generator,n_seeds,ratio,ratio_stderr,rho,rho_stderr", a));
    std::vector<std::string> sc;
    for (const auto& [k, js] : scaling) {
      const char* f = k.second == "trajectory" ? "mean_gap" : "slope";
      const MeanSe m = mean_se(field(js, f));
      sc.push_back(k.first + "," + k.second + "," + f + "," + std::to_string(js.size()) +
                   "," + num(m.mean) + "," + num(m.se));
    }
    write_file(out / "scaling.csv",
               table("experiment,generator,kind,statistic,n,mean,stderr", sc));
  }
  return rows.empty() && records == 0 ? report_empty : report_ok;
}

}  // namespace dct
