#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "dct/datagen.hpp"
#include "dct/records.hpp"
#include "dct/training.hpp"

namespace dct {

using Json = nlohmann::ordered_json;

enum class ExperimentKind { k_scaling, semisup_curve, fig2_grid, alignment_table, clt_report };
enum class Scale { desk, paper };
enum class Family { mvn, gmm };

std::string to_string(ExperimentKind k);
std::string to_string(Scale s);
std::string to_string(Family f);
ExperimentKind parse_experiment(const std::string& s);
Scale parse_scale(const std::string& s);
Family parse_family(const std::string& s);

/// Every size parameter of a run. A scale preset fills all of them; the
/// config file may override individual entries.
struct ScaleSizes {
  std::size_t n_sets = 0;
  Eigen::Index set_size = 0;
  std::size_t batch_pairs = 0;
  Eigen::Index subsample = 0;
  int epochs = 0;
  double learning_rate = 2e-4;
  Eigen::Index hidden = 0;
  Eigen::Index latent = 0;
  int pool_blocks = 2;
  int swd_projections = 100;
  double fm_sigma = 0.5;
  std::size_t eval_pairs = 0;  // IID pairs per cell
  int ood_grid = 0;            // OOD targets: ood_grid^2
  std::size_t n_pairs = 0;     // supervised pairs (semi-supervised runs)
  std::size_t test_pairs = 0;  // semi-supervised test pairs
  std::size_t align_K = 0;
  int align_pairs = 20;
  int align_n = 200;
  int align_perm = 50;
  std::vector<int> clt_m;
  int clt_reps = 100;
  std::vector<int> plugin_m;
  int plugin_reps = 100;
  int trajectory_steps = 10;
  int trajectory_pairs = 5;
  Eigen::Index trajectory_points = 1000;
};

ScaleSizes preset_sizes(Scale s, Family f);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::k_scaling;
  std::string id;  // experiment column; defaults to the kind name
  Scale scale = Scale::desk;
  Family family = Family::mvn;
  std::vector<GeneratorKind> generators;
  std::vector<Conditioning> conditionings;
  std::vector<std::size_t> K_values;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<MetricKind> metrics;
  bool bidirectional = true;
  ScaleSizes sizes;

  void validate() const;
  Json to_json() const;
  /// Accepts a config object or a manifest (its "config" member). Fields
  /// absent from the file take the defaults of the experiment kind and the
  /// sizes of the scale preset (`scale_override` wins over the file).
  static ExperimentConfig from_json(const Json& j,
                                    std::optional<Scale> scale_override = std::nullopt);
  static ExperimentConfig load(const std::filesystem::path& p,
                               std::optional<Scale> scale_override = std::nullopt);
};

/// Source of a training pool, fully determined by its fields.
struct DataSpec {
  bool paired = false;
  Family family = Family::mvn;
  std::size_t K = 0;       // unsupervised only
  std::size_t n = 0;       // sets (unsupervised) or pairs (paired)
  Eigen::Index set_size = 0;
  std::uint64_t seed = 0;
  double support_hi = 2.5;  // paired: source means in [0, support_hi]^d

  Json to_json() const;
  std::string tag() const;
};

Prior family_prior(Family f);
Dataset build_dataset(const DataSpec& spec);
PairedDataset build_paired(const DataSpec& spec);
TrainingPool build_pool(const DataSpec& spec);

struct ModelJob {
  DataSpec data;
  TrainConfig train;

  /// Readable prefix plus a hash of the full job description.
  std::string file_stem() const;
  Json to_json() const;
};

struct CellResult {
  std::string cell;
  bool ok = true;
  std::string error;
  std::vector<MetricsRecord> rows;
  std::vector<Json> reports;
};

struct RunOptions {
  std::filesystem::path out = "out";
  std::filesystem::path models_dir;  // empty: <out>/models
  int workers = 1;
  bool train_missing = true;  // train models absent from <out>/models
  bool evaluate = true;
};

struct RunSummary {
  std::vector<CellResult> cells;
  std::size_t failures = 0;
  std::vector<MetricsRecord> rows;  // all cells, cell order
};

/// Models the experiment needs, deduplicated, in a fixed order.
std::vector<ModelJob> plan_models(const ExperimentConfig& cfg);

/// Writes every planned dataset to <out>/data.
void generate_data(const ExperimentConfig& cfg, const RunOptions& opt);

/// Trains (or loads) every planned model, then evaluates all cells; writes
/// metrics.csv, reports.jsonl, manifest.json, logs/ and models/ under
/// opt.out. Cell failures are recorded and the run continues.
RunSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& opt);

/// Runs `fn(i)` for i in [0, n) on `workers` threads. Exceptions are
/// captured per index: entry i holds its message, empty when it succeeded.
std::vector<std::string> parallel_for(std::size_t n, int workers,
                                      const std::function<void(std::size_t)>& fn);

}  // namespace dct
