#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dct/datagen.hpp"
#include "dct/encoder.hpp"
#include "dct/transport.hpp"

namespace dct {

enum class GeneratorKind { swd, energy, fm, stochastic_energy };
enum class Conditioning { sc, stc, onehot };

std::string to_string(GeneratorKind g);
std::string to_string(Conditioning c);
GeneratorKind parse_generator(const std::string& s);
Conditioning parse_conditioning(const std::string& s);

struct ModelConfig {
  GeneratorKind generator = GeneratorKind::energy;
  Conditioning conditioning = Conditioning::stc;
  EncoderConfig encoder;          // input_dim is the data dimension
  Eigen::Index map_hidden = 64;
  std::size_t onehot_K = 0;       // table size for one-hot conditioning
  int swd_projections = 100;
  double fm_sigma = 0.5;
  Eigen::Index noise_dim = 2;     // stochastic energy sampler only
  ODESolverConfig ode;

  Eigen::Index data_dim() const { return encoder.input_dim; }
  Eigen::Index cond_dim() const;
  void validate() const;
};

struct LogEntry {
  long step = 0;
  int epoch = 0;
  double loss = 0.0;
  double wall_seconds = 0.0;
};

/// Encoder (deep-set or one-hot) plus generator (regression map or velocity
/// field) under one conditioning mode.
class TransportModel {
 public:
  TransportModel() = default;
  TransportModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  bool is_flow() const { return cfg_.generator == GeneratorKind::fm; }
  bool is_onehot() const { return cfg_.conditioning == Conditioning::onehot; }
  bool has_target_slot() const { return cfg_.conditioning != Conditioning::sc; }

  /// Deep-set embedding of a set (not available for one-hot models).
  Embedding embed(const SampleSet& s);
  /// One-hot embedding of training label `k`.
  Embedding embed_label(std::size_t k) const;
  /// One-hot label of the nearest training centroid.
  std::size_t assign_label(const SampleSet& s) const;

  /// Transports every point of `src`. The rng is used for the sampler noise
  /// of the stochastic generator only.
  SampleSet transport(const SampleSet& src, const Embedding& z_src,
                      const std::optional<Embedding>& z_tgt, Rng& rng);

  std::vector<Parameter*> parameters();
  std::size_t parameter_count();

  DeepSetEncoder encoder;
  OneHotEncoder onehot;
  RegressionMap map;
  VelocityField field;
  std::vector<LogEntry> log;

 private:
  ModelConfig cfg_;
};

/// Training sets with their pairing metadata.
struct TrainingPool {
  std::vector<SampleSet> sets;
  std::vector<std::size_t> labels;  // one-hot label per set
  std::vector<long> partner;        // designated target index, -1 if none
  std::vector<TimeTag> tags;
  std::size_t n_labels = 0;

  std::size_t size() const { return sets.size(); }
  /// Labels are the unique-draw ids; no partners.
  static TrainingPool from(const Dataset& d);
  /// Sources first, then targets; source i is partnered with target i and
  /// every set has its own label.
  static TrainingPool from(const PairedDataset& d);
};

enum class PairingKind {
  supervised_pairs,
  any_to_any_uniform,
  forward_time_only,
  semi_supervised_mixture,
};

struct PairingPolicy {
  PairingKind kind = PairingKind::any_to_any_uniform;
  double p = 0.25;  // true-pair probability of the mixture

  void validate() const;
};

struct PairDraw {
  std::size_t u = 0;
  std::size_t v = 0;
  bool supervised = false;  // drawn as a designated pair
};

PairDraw sample_pair(const PairingPolicy& policy, const TrainingPool& pool,
                     Rng& rng);

struct TrainConfig {
  ModelConfig model;
  PairingPolicy policy;
  std::size_t batch_pairs = 256;
  Eigen::Index subsample = 100;
  double learning_rate = 2e-4;
  int epochs = 200;
  std::uint64_t seed = 0;
  bool bidirectional = true;

  void validate() const;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One pair of point blocks in a training batch.
struct PairBatch {
  std::vector<std::size_t> u, v;
  Eigen::MatrixXd source;  // stacked subsamples, rows grouped by segs
  Eigen::MatrixXd target;
  Segments segs;
};

/// Draws `batch_pairs` pairs and an m-point subsample of each set.
PairBatch draw_batch(const TrainConfig& cfg, const TrainingPool& pool,
                     Rng& rng);

/// Differentiable training objective on a batch. Noise (projections,
/// FM times, sampler inputs) is drawn from `rng`.
Var batch_loss(Graph& g, TransportModel& model, const PairBatch& batch,
               const TrainingPool& pool, bool bidirectional, Rng& rng);

/// Forward, backward and one Adam update. Throws TrainingError on a
/// non-finite loss.
double train_step(TransportModel& model, const PairBatch& batch,
                  const TrainingPool& pool, bool bidirectional,
                  AdamState& adam, double lr, Rng& rng);

/// Algorithm 1. Appends one log line per step to `log_stream` when given.
TransportModel train(const TrainConfig& cfg, const TrainingPool& pool,
                     std::ostream* log_stream = nullptr);

std::size_t steps_per_epoch(const TrainConfig& cfg, const TrainingPool& pool);

}  // namespace dct
