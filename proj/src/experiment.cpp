#include "dct/experiment.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "dct/diagnostics.hpp"
#include "dct/io.hpp"
#include "dct/semisup.hpp"

namespace dct {

namespace fs = std::filesystem;

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::k_scaling: return "k_scaling";
    case ExperimentKind::semisup_curve: return "semisup_curve";
    case ExperimentKind::fig2_grid: return "fig2_grid";
    case ExperimentKind::alignment_table: return "alignment_table";
    case ExperimentKind::clt_report: return "clt_report";
  }
  return "?";
}

std::string to_string(Scale s) { return s == Scale::desk ? "desk" : "paper"; }
std::string to_string(Family f) { return f == Family::mvn ? "mvn" : "gmm"; }

ExperimentKind parse_experiment(const std::string& s) {
  for (auto k : {ExperimentKind::k_scaling, ExperimentKind::semisup_curve,
                 ExperimentKind::fig2_grid, ExperimentKind::alignment_table,
                 ExperimentKind::clt_report})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown experiment kind '" + s + "'");
}

Scale parse_scale(const std::string& s) {
  if (s == "desk") return Scale::desk;
  if (s == "paper") return Scale::paper;
  throw std::invalid_argument("unknown scale '" + s + "' (expected desk or paper)");
}

Family parse_family(const std::string& s) {
  if (s == "mvn") return Family::mvn;
  if (s == "gmm") return Family::gmm;
  throw std::invalid_argument("unknown family '" + s + "' (expected mvn or gmm)");
}

ScaleSizes preset_sizes(Scale s, Family f) {
  ScaleSizes z;
  const bool gmm = f == Family::gmm;
  if (s == Scale::paper) {
    z.n_sets = 50000;
    z.set_size = gmm ? 1000 : 100;
    z.batch_pairs = 256;
    z.subsample = z.set_size;
    z.epochs = 200;
    z.hidden = gmm ? 256 : 64;
    z.latent = gmm ? 128 : 16;
    z.eval_pairs = 200;
    z.ood_grid = 21;
    z.n_pairs = 5000;
    z.test_pairs = 2000;
    z.align_K = 1000;
  } else {
    z.n_sets = 1000;
    z.set_size = gmm ? 200 : 100;
    z.batch_pairs = 16;
    z.subsample = gmm ? 64 : 32;
    z.epochs = 50;
    z.hidden = 64;
    z.latent = gmm ? 32 : 16;
    z.eval_pairs = 30;
    z.ood_grid = 7;
    z.n_pairs = 500;
    z.test_pairs = 200;
    z.align_K = 1000;
  }
  z.clt_m = {32, 64, 128, 256, 512, 1024, 2048};
  z.plugin_m = {16, 32, 64, 128, 256, 512};
  return z;
}

namespace {

Json sizes_to_json(const ScaleSizes& z) {
  return Json{{"n_sets", z.n_sets},
              {"set_size", z.set_size},
              {"batch_pairs", z.batch_pairs},
              {"subsample", z.subsample},
              {"epochs", z.epochs},
              {"learning_rate", z.learning_rate},
              {"hidden", z.hidden},
              {"latent", z.latent},
              {"pool_blocks", z.pool_blocks},
              {"swd_projections", z.swd_projections},
              {"fm_sigma", z.fm_sigma},
              {"eval_pairs", z.eval_pairs},
              {"ood_grid", z.ood_grid},
              {"n_pairs", z.n_pairs},
              {"test_pairs", z.test_pairs},
              {"align_K", z.align_K},
              {"align_pairs", z.align_pairs},
              {"align_n", z.align_n},
              {"align_perm", z.align_perm},
              {"clt_m", z.clt_m},
              {"clt_reps", z.clt_reps},
              {"plugin_m", z.plugin_m},
              {"plugin_reps", z.plugin_reps},
              {"trajectory_steps", z.trajectory_steps},
              {"trajectory_pairs", z.trajectory_pairs},
              {"trajectory_points", z.trajectory_points}};
}

template <typename T>
void override_field(const Json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void sizes_from_json(const Json& j, ScaleSizes& z) {
  static const std::set<std::string> known = {
      "n_sets", "set_size", "batch_pairs", "subsample", "epochs", "learning_rate",
      "hidden", "latent", "pool_blocks", "swd_projections", "fm_sigma",
      "eval_pairs", "ood_grid", "n_pairs", "test_pairs", "align_K",
      "align_pairs", "align_n", "align_perm", "clt_m", "clt_reps", "plugin_m",
      "plugin_reps", "trajectory_steps", "trajectory_pairs", "trajectory_points"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw std::invalid_argument("config: unknown size '" + k + "'");
  override_field(j, "n_sets", z.n_sets);
  override_field(j, "set_size", z.set_size);
  override_field(j, "batch_pairs", z.batch_pairs);
  override_field(j, "subsample", z.subsample);
  override_field(j, "epochs", z.epochs);
  override_field(j, "learning_rate", z.learning_rate);
  override_field(j, "hidden", z.hidden);
  override_field(j, "latent", z.latent);
  override_field(j, "pool_blocks", z.pool_blocks);
  override_field(j, "swd_projections", z.swd_projections);
  override_field(j, "fm_sigma", z.fm_sigma);
  override_field(j, "eval_pairs", z.eval_pairs);
  override_field(j, "ood_grid", z.ood_grid);
  override_field(j, "n_pairs", z.n_pairs);
  override_field(j, "test_pairs", z.test_pairs);
  override_field(j, "align_K", z.align_K);
  override_field(j, "align_pairs", z.align_pairs);
  override_field(j, "align_n", z.align_n);
  override_field(j, "align_perm", z.align_perm);
  override_field(j, "clt_m", z.clt_m);
  override_field(j, "clt_reps", z.clt_reps);
  override_field(j, "plugin_m", z.plugin_m);
  override_field(j, "plugin_reps", z.plugin_reps);
  override_field(j, "trajectory_steps", z.trajectory_steps);
  override_field(j, "trajectory_pairs", z.trajectory_pairs);
  override_field(j, "trajectory_points", z.trajectory_points);
}

void apply_kind_defaults(ExperimentConfig& c) {
  using G = GeneratorKind;
  using C = Conditioning;
  switch (c.kind) {
    case ExperimentKind::k_scaling:
    case ExperimentKind::fig2_grid:
      c.generators = {G::swd, G::energy, G::fm};
      c.conditionings = {C::onehot, C::stc};
      c.K_values = c.scale == Scale::paper
                       ? std::vector<std::size_t>{10, 100, 1000, 10000}
                       : std::vector<std::size_t>{10, 100};
      c.metrics = c.kind == ExperimentKind::fig2_grid
                      ? std::vector<MetricKind>{MetricKind::gaussian_w2}
                      : std::vector<MetricKind>{MetricKind::energy, MetricKind::swd,
                                                MetricKind::mmd_rbf};
      break;
    case ExperimentKind::semisup_curve:
      c.generators = {G::swd, G::energy, G::fm};
      c.conditionings = {C::sc, C::stc};
      c.metrics = {MetricKind::energy, MetricKind::swd, MetricKind::mmd_rbf};
      break;
    case ExperimentKind::alignment_table:
      c.generators = {G::fm, G::energy, G::swd, G::stochastic_energy};
      c.conditionings = {C::stc};
      break;
    case ExperimentKind::clt_report:
      c.generators = {G::energy};
      c.conditionings = {C::stc};
      break;
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw std::invalid_argument("config: seed list is empty");
  if (generators.empty()) throw std::invalid_argument("config: no generators");
  const auto& z = sizes;
  if (z.n_sets < 1 || z.set_size < 2 || z.batch_pairs < 1 || z.subsample < 1 ||
      z.epochs < 0 || z.hidden < 1 || z.latent < 1 || !(z.learning_rate > 0.0))
    throw std::invalid_argument("config: training sizes must be positive");
  if (kind == ExperimentKind::k_scaling || kind == ExperimentKind::fig2_grid) {
    if (K_values.empty()) throw std::invalid_argument("config: no K values");
    for (auto K : K_values)
      if (K < 1 || K > z.n_sets)
        throw std::invalid_argument("config: K must lie in [1, n_sets]");
    if (conditionings.empty()) throw std::invalid_argument("config: no conditionings");
    for (auto c : conditionings)
      if (c == Conditioning::sc)
        throw std::invalid_argument("config: K-scaling compares onehot and stc only");
    if (z.ood_grid < 2) throw std::invalid_argument("config: ood_grid < 2");
  }
  if (kind == ExperimentKind::semisup_curve) {
    if (z.n_pairs < 5) throw std::invalid_argument("config: n_pairs < 5");
    for (auto g : generators)
      if (g == GeneratorKind::stochastic_energy)
        throw std::invalid_argument("config: semi-supervised runs use deterministic generators");
  }
  if (kind == ExperimentKind::alignment_table || kind == ExperimentKind::clt_report) {
    if (z.align_K < 2 || z.align_K > z.n_sets)
      throw std::invalid_argument("config: align_K must lie in [2, n_sets]");
  }
  if (kind != ExperimentKind::alignment_table && kind != ExperimentKind::clt_report &&
      metrics.empty())
    throw std::invalid_argument("config: no metrics");
}

Json ExperimentConfig::to_json() const {
  Json j;
  j["experiment"] = to_string(kind);
  j["id"] = id;
  j["scale"] = to_string(scale);
  j["family"] = to_string(family);
  j["generators"] = Json::array();
  for (auto g : generators) j["generators"].push_back(to_string(g));
  j["conditionings"] = Json::array();
  for (auto c : conditionings) j["conditionings"].push_back(to_string(c));
  j["K"] = K_values;
  j["seeds"] = seeds;
  j["metrics"] = Json::array();
  for (auto m : metrics) j["metrics"].push_back(to_string(m));
  j["bidirectional"] = bidirectional;
  j["sizes"] = sizes_to_json(sizes);
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const Json& root,
                                             std::optional<Scale> scale_override) {
  const Json& j = root.contains("config") ? root.at("config") : root;
  static const std::set<std::string> known = {
      "experiment", "id", "scale", "family", "generators", "conditionings",
      "K", "seeds", "metrics", "bidirectional", "sizes"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw std::invalid_argument("config: unknown key '" + k + "'");
  ExperimentConfig c;
  c.kind = parse_experiment(j.at("experiment").get<std::string>());
  c.id = j.value("id", to_string(c.kind));
  if (c.id.empty()) c.id = to_string(c.kind);
  c.scale = scale_override ? *scale_override
                           : parse_scale(j.value("scale", std::string("desk")));
  c.family = parse_family(j.value("family", std::string("mvn")));
  apply_kind_defaults(c);
  c.sizes = preset_sizes(c.scale, c.family);
  if (j.contains("generators")) {
    c.generators.clear();
    for (const auto& g : j.at("generators")) c.generators.push_back(parse_generator(g));
  }
  if (j.contains("conditionings")) {
    c.conditionings.clear();
    for (const auto& s : j.at("conditionings")) c.conditionings.push_back(parse_conditioning(s));
  }
  if (j.contains("K")) c.K_values = j.at("K").get<std::vector<std::size_t>>();
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("metrics")) {
    c.metrics.clear();
    for (const auto& m : j.at("metrics")) c.metrics.push_back(parse_metric(m));
  }
  c.bidirectional = j.value("bidirectional", true);
  // A manifest records resolved sizes for its own scale; an explicit
  // override of the scale starts again from that preset.
  if (j.contains("sizes") &&
      !(scale_override && j.contains("scale") &&
        parse_scale(j.at("scale").get<std::string>()) != *scale_override))
    sizes_from_json(j.at("sizes"), c.sizes);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& p,
                                        std::optional<Scale> scale_override) {
  Json j;
  try {
    j = Json::parse(read_file(p));
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument("config " + p.string() + ": " + e.what());
  }
  return from_json(j, scale_override);
}

Json DataSpec::to_json() const {
  Json j{{"paired", paired}, {"family", to_string(family)}, {"K", K},
         {"n", n}, {"set_size", set_size}, {"seed", seed}};
  if (paired) j["support_hi"] = support_hi;
  return j;
}

std::string DataSpec::tag() const {
  std::ostringstream s;
  s << to_string(family) << (paired ? "-paired" : "") << "-K" << K << "-n" << n
    << "-m" << set_size << "-s" << seed;
  return s.str();
}

Prior family_prior(Family f) {
  if (f == Family::mvn) return MVNPrior{};
  return GMMPrior{};
}

Dataset build_dataset(const DataSpec& spec) {
  if (spec.paired) throw std::invalid_argument("build_dataset: spec is paired");
  return build_unsupervised_dataset(family_prior(spec.family), spec.K, spec.n,
                                    spec.set_size, spec.seed);
}

PairedDataset build_paired(const DataSpec& spec) {
  if (!spec.paired) throw std::invalid_argument("build_paired: spec is not paired");
  PairSpec ps;
  ps.kind = spec.family == Family::mvn ? PairKind::mvn_shift : PairKind::gmm_bimodal;
  const Prior prior = family_prior(spec.family);
  const Eigen::Index d = std::visit([](const auto& p) { return p.dim(); }, prior);
  return build_supervised_pairs(ps, prior, Box::square(d, 0.0, spec.support_hi),
                                spec.n, spec.set_size, spec.seed);
}

TrainingPool build_pool(const DataSpec& spec) {
  return spec.paired ? TrainingPool::from(build_paired(spec))
                     : TrainingPool::from(build_dataset(spec));
}

namespace {

std::string policy_name(PairingKind k) {
  switch (k) {
    case PairingKind::supervised_pairs: return "supervised_pairs";
    case PairingKind::any_to_any_uniform: return "any_to_any_uniform";
    case PairingKind::forward_time_only: return "forward_time_only";
    case PairingKind::semi_supervised_mixture: return "semi_supervised_mixture";
  }
  return "?";
}

}  // namespace

Json ModelJob::to_json() const {
  const ModelConfig& m = train.model;
  return Json{
      {"data", data.to_json()},
      {"model",
       {{"generator", to_string(m.generator)},
        {"conditioning", to_string(m.conditioning)},
        {"data_dim", m.encoder.input_dim},
        {"hidden", m.encoder.hidden},
        {"latent", m.encoder.latent},
        {"pool_blocks", m.encoder.pool_blocks},
        {"normalize", m.encoder.normalize},
        {"map_hidden", m.map_hidden},
        {"onehot_K", m.onehot_K},
        {"swd_projections", m.swd_projections},
        {"fm_sigma", m.fm_sigma},
        {"noise_dim", m.noise_dim},
        {"ode", {{"atol", m.ode.atol}, {"rtol", m.ode.rtol},
                 {"initial_step", m.ode.initial_step}, {"max_steps", m.ode.max_steps}}}}},
      {"train",
       {{"policy", policy_name(train.policy.kind)},
        {"p", train.policy.p},
        {"batch_pairs", train.batch_pairs},
        {"subsample", train.subsample},
        {"learning_rate", train.learning_rate},
        {"epochs", train.epochs},
        {"seed", train.seed},
        {"bidirectional", train.bidirectional}}}};
}

std::string ModelJob::file_stem() const {
  const ModelConfig& m = train.model;
  std::ostringstream s;
  s << to_string(m.generator) << '-' << to_string(m.conditioning) << '-'
    << data.tag() << '-' << sha256_hex(to_json().dump()).substr(0, 10);
  return s.str();
}

namespace {

ModelJob make_job(const ExperimentConfig& cfg, const DataSpec& data,
                  GeneratorKind g, Conditioning c, std::uint64_t seed) {
  const ScaleSizes& z = cfg.sizes;
  ModelJob job;
  job.data = data;
  TrainConfig& t = job.train;
  t.model.generator = g;
  t.model.conditioning = c;
  t.model.encoder.input_dim = 2;
  t.model.encoder.hidden = z.hidden;
  t.model.encoder.latent = z.latent;
  t.model.encoder.pool_blocks = z.pool_blocks;
  t.model.map_hidden = z.hidden;
  t.model.swd_projections = z.swd_projections;
  t.model.fm_sigma = z.fm_sigma;
  if (c == Conditioning::onehot) t.model.onehot_K = data.K;
  t.policy.kind = data.paired ? PairingKind::supervised_pairs
                              : PairingKind::any_to_any_uniform;
  t.batch_pairs = z.batch_pairs;
  t.subsample = z.subsample;
  t.learning_rate = z.learning_rate;
  t.epochs = z.epochs;
  t.seed = seed;
  t.bidirectional = !data.paired && cfg.bidirectional;
  return job;
}

DataSpec unsup_spec(const ExperimentConfig& cfg, std::size_t K, std::uint64_t seed) {
  DataSpec d;
  d.family = cfg.family;
  d.K = K;
  d.n = cfg.sizes.n_sets;
  d.set_size = cfg.sizes.set_size;
  d.seed = seed;
  return d;
}

DataSpec paired_spec(const ExperimentConfig& cfg, std::uint64_t seed) {
  DataSpec d;
  d.paired = true;
  d.family = cfg.family;
  d.n = cfg.sizes.n_pairs;
  d.set_size = cfg.sizes.set_size;
  d.seed = seed;
  return d;
}

/// One evaluation unit and the jobs it reads.
struct Cell {
  std::string name;
  std::uint64_t seed = 0;
  std::size_t K = 0;
  GeneratorKind generator = GeneratorKind::energy;
  Conditioning conditioning = Conditioning::stc;
  std::vector<std::size_t> jobs;  // indices into the job list
};

struct Plan {
  std::vector<ModelJob> jobs;
  std::vector<Cell> cells;
};

Plan make_plan(const ExperimentConfig& cfg) {
  Plan plan;
  std::map<std::string, std::size_t> index;
  auto add = [&](const ModelJob& j) {
    const std::string stem = j.file_stem();
    auto it = index.find(stem);
    if (it != index.end()) return it->second;
    plan.jobs.push_back(j);
    index.emplace(stem, plan.jobs.size() - 1);
    return plan.jobs.size() - 1;
  };
  const auto& z = cfg.sizes;
  switch (cfg.kind) {
    case ExperimentKind::k_scaling:
    case ExperimentKind::fig2_grid:
      for (auto K : cfg.K_values)
        for (auto seed : cfg.seeds)
          for (auto g : cfg.generators)
            for (auto c : cfg.conditionings) {
              Cell cell{"K" + std::to_string(K) + ".s" + std::to_string(seed) + "." +
                            to_string(g) + "." + to_string(c),
                        seed, K, g, c, {}};
              cell.jobs.push_back(add(make_job(cfg, unsup_spec(cfg, K, seed), g, c, seed)));
              plan.cells.push_back(cell);
            }
      break;
    case ExperimentKind::semisup_curve:
      for (auto seed : cfg.seeds)
        for (auto g : cfg.generators) {
          Cell cell{"s" + std::to_string(seed) + "." + to_string(g), seed, z.n_sets, g,
                    Conditioning::stc, {}};
          cell.jobs.push_back(add(make_job(cfg, unsup_spec(cfg, z.n_sets, seed), g,
                                           Conditioning::stc, seed)));
          cell.jobs.push_back(add(make_job(cfg, paired_spec(cfg, seed), g,
                                           Conditioning::sc, seed)));
          plan.cells.push_back(cell);
        }
      break;
    case ExperimentKind::alignment_table:
    case ExperimentKind::clt_report:
      for (auto seed : cfg.seeds)
        for (auto g : cfg.generators) {
          Cell cell{"s" + std::to_string(seed) + "." + to_string(g), seed, z.align_K, g,
                    Conditioning::stc, {}};
          cell.jobs.push_back(add(make_job(cfg, unsup_spec(cfg, z.align_K, seed), g,
                                           Conditioning::stc, seed)));
          plan.cells.push_back(cell);
        }
      break;
  }
  return plan;
}

/// Parameters of the K unique draws, indexed by unique id.
std::vector<DistributionParams> unique_params(const Dataset& d) {
  std::vector<DistributionParams> out(d.K);
  std::vector<bool> seen(d.K, false);
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!seen[d.unique_id[i]]) {
      out[d.unique_id[i]] = d.params[i];
      seen[d.unique_id[i]] = true;
    }
  return out;
}

Embedding condition_on(TransportModel& m, const SampleSet& s) {
  return m.is_onehot() ? m.embed_label(m.assign_label(s)) : m.embed(s);
}

MetricsRecord base_record(const ExperimentConfig& cfg, const Cell& cell) {
  MetricsRecord r;
  r.experiment = cfg.id;
  r.generator = to_string(cell.generator);
  r.conditioning = to_string(cell.conditioning);
  r.regime = "unsupervised";
  r.K = cell.K;
  r.seed = cell.seed;
  return r;
}

/// Transports a fresh source set towards the target law (conditioning on
/// one draw) and scores against an independent draw.
void score_pair(TransportModel& model, const DistributionParams& src_law,
                const DistributionParams& tgt_law, Eigen::Index n,
                const std::vector<MetricKind>& metrics, MetricsRecord base,
                Rng& rng, std::vector<MetricsRecord>& out) {
  const SampleSet src = draw_set(src_law, n, rng);
  const SampleSet view = draw_set(tgt_law, n, rng);
  const SampleSet ref = draw_set(tgt_law, n, rng);
  const Embedding zs = condition_on(model, src);
  const Embedding zt = condition_on(model, view);
  const SampleSet gen = model.transport(src, zs, zt, rng);
  for (MetricKind k : metrics) {
    MetricsRecord r = base;
    r.metric = to_string(k);
    r.value = compute_metric(k, gen, ref, rng);
    out.push_back(std::move(r));
  }
}

std::vector<DistributionParams> ood_targets(const ExperimentConfig& cfg,
                                            std::uint64_t seed) {
  std::vector<DistributionParams> out;
  const int res = cfg.sizes.ood_grid;
  if (cfg.family == Family::mvn) {
    for (auto& g : ood_target_grid(res, MVNPrior{}, seed)) out.emplace_back(std::move(g));
  } else {
    const Prior prior = family_prior(cfg.family);
    for (int j = 0; j < res * res; ++j) {
      Rng r(seed, "eval.ood.params", static_cast<std::uint64_t>(j));
      out.push_back(sample_params(prior, r));
    }
  }
  return out;
}

CellResult eval_scaling_cell(const ExperimentConfig& cfg, const Cell& cell,
                             TransportModel& model) {
  CellResult res;
  const Dataset ds = build_dataset(unsup_spec(cfg, cell.K, cell.seed));
  const auto laws = unique_params(ds);
  const Eigen::Index n = cfg.sizes.set_size;
  const MetricsRecord base = base_record(cfg, cell);

  if (cfg.kind == ExperimentKind::k_scaling) {
    for (std::size_t i = 0; i < cfg.sizes.eval_pairs; ++i) {
      Rng r(cell.seed, "eval.iid", i);
      const std::size_t u = r.index(laws.size());
      const std::size_t v = r.index(laws.size());
      MetricsRecord b = base;
      b.split = "IID";
      score_pair(model, laws[u], laws[v], n, cfg.metrics, b, r, res.rows);
    }
  }
  const auto targets = ood_targets(cfg, cell.seed);
  Rng pick(cell.seed, "eval.ood.source");
  const DistributionParams& src_law = laws[pick.index(laws.size())];
  const int res_grid = cfg.sizes.ood_grid;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    Rng r(cell.seed, "eval.ood", j);
    MetricsRecord b = base;
    b.split = "OOD";
    if (cfg.kind == ExperimentKind::fig2_grid)
      b.experiment = cfg.id + "@" + std::to_string(j / static_cast<std::size_t>(res_grid)) +
                     "_" + std::to_string(j % static_cast<std::size_t>(res_grid));
    score_pair(model, src_law, targets[j], n, cfg.metrics, b, r, res.rows);
  }
  return res;
}

CellResult eval_semisup_cell(const ExperimentConfig& cfg, const Cell& cell,
                             TransportModel& stc, TransportModel& sc) {
  CellResult res;
  const ScaleSizes& z = cfg.sizes;
  const PairedDataset pairs = build_paired(paired_spec(cfg, cell.seed));
  Eigen::MatrixXd X(static_cast<Eigen::Index>(pairs.size()), z.latent);
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(pairs.size()), z.latent);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = stc.embed(pairs.sources[i]).z.transpose();
    Y.row(static_cast<Eigen::Index>(i)) = stc.embed(pairs.targets[i]).z.transpose();
  }
  const RidgePredictor ridge = fit_ridge_cv(X, Y, 5, default_alpha_grid(), cell.seed);
  res.reports.push_back(Json{{"experiment", cfg.id}, {"kind", "ridge"},
                             {"generator", to_string(cell.generator)},
                             {"seed", cell.seed}, {"alpha", ridge.alpha}});

  const Prior prior = family_prior(cfg.family);
  const PairSpec spec = pairs.spec;
  std::vector<TestPair> tests;
  for (std::size_t i = 0; i < z.test_pairs; ++i) {
    Rng r(cell.seed, "semisup.test", i);
    const DistributionParams law = sample_params(prior, r);
    const DistributionParams tgt_law = paired_target_params(spec, law);
    TestPair t;
    t.source = draw_set(law, z.set_size, r);
    t.target = draw_set(tgt_law, z.set_size, r);
    t.oracle_view = draw_set(tgt_law, z.set_size, r);
    t.source_mean = distribution_mean(law);
    tests.push_back(std::move(t));
  }
  MetricsRecord base = base_record(cfg, cell);
  base.conditioning = "sc";
  base.K = z.n_pairs;
  auto rows = evaluate_regime({Regime::supervised_sc, &sc, nullptr}, tests, cfg.metrics, base);
  res.rows.insert(res.rows.end(), rows.begin(), rows.end());
  base.conditioning = "stc";
  base.K = z.n_sets;
  rows = evaluate_regime({Regime::semi_supervised_stc, &stc, &ridge}, tests, cfg.metrics, base);
  res.rows.insert(res.rows.end(), rows.begin(), rows.end());
  rows = evaluate_regime({Regime::oracle_stc, &stc, nullptr}, tests, cfg.metrics, base);
  res.rows.insert(res.rows.end(), rows.begin(), rows.end());
  return res;
}

Json report_json(const AlignmentReport& a) {
  return Json{{"d_pair", a.d_pair}, {"d_rand", a.d_rand}, {"ratio", a.ratio},
              {"spearman_rho", a.spearman_rho}, {"rho_defined", a.rho_defined},
              {"n_samples", a.n_samples}, {"n_permutations", a.n_permutations}};
}

std::pair<std::size_t, std::size_t> distinct_pair(std::size_t K, Rng& r) {
  const std::size_t u = r.index(K);
  std::size_t v = r.index(K - 1);
  if (v >= u) ++v;
  return {u, v};
}

CellResult eval_alignment_cell(const ExperimentConfig& cfg, const Cell& cell,
                               TransportModel& model) {
  CellResult res;
  const auto laws = unique_params(build_dataset(unsup_spec(cfg, cell.K, cell.seed)));
  const ScaleSizes& z = cfg.sizes;
  Rng pick(cell.seed, "align.pairs");
  std::vector<AlignmentReport> reports;
  for (int p = 0; p < z.align_pairs; ++p) {
    const auto [u, v] = distinct_pair(laws.size(), pick);
    Rng r(cell.seed, "align.pair", static_cast<std::uint64_t>(p));
    reports.push_back(alignment_diagnostic(model, laws[u], laws[v], z.align_n, z.align_perm, r));
    Json j{{"experiment", cfg.id}, {"kind", "alignment"},
           {"generator", to_string(cell.generator)}, {"seed", cell.seed},
           {"pair", p}, {"u", u}, {"v", v}};
    j.update(report_json(reports.back()));
    res.reports.push_back(std::move(j));
  }
  Json s{{"experiment", cfg.id}, {"kind", "alignment_summary"},
         {"generator", to_string(cell.generator)}, {"seed", cell.seed},
         {"pairs", z.align_pairs}};
  s.update(report_json(average_reports(reports)));
  res.reports.push_back(std::move(s));
  return res;
}

Json scaling_json(const ScalingReport& r) {
  return Json{{"m", r.m}, {"value", r.value}, {"slope", r.slope},
              {"slope_defined", r.slope_defined}};
}

CellResult eval_clt_cell(const ExperimentConfig& cfg, const Cell& cell,
                         TransportModel& model) {
  CellResult res;
  const auto laws = unique_params(build_dataset(unsup_spec(cfg, cell.K, cell.seed)));
  const ScaleSizes& z = cfg.sizes;
  const Json head{{"experiment", cfg.id}, {"generator", to_string(cell.generator)},
                  {"seed", cell.seed}};

  Rng pick(cell.seed, "clt.law");
  const std::size_t law = pick.index(laws.size());
  Rng rc(cell.seed, "clt.draws");
  const ScalingReport clt = clt_scaling(
      [&](const SampleSet& s) { return Eigen::VectorXd(model.embed(s).z); },
      laws[law], z.clt_m, z.clt_reps, rc);
  Json j = head;
  j["kind"] = "clt";
  j["law"] = law;
  j.update(scaling_json(clt));
  res.reports.push_back(std::move(j));

  if (!model.is_flow() && cell.generator != GeneratorKind::stochastic_energy) {
    const auto [u, v] = distinct_pair(laws.size(), pick);
    Rng rp(cell.seed, "plugin.draws");
    const ScalingReport plug =
        plugin_loss_convergence(model, laws[u], laws[v], z.plugin_m, z.plugin_reps, rp);
    Json p = head;
    p["kind"] = "plugin";
    p["u"] = u;
    p["v"] = v;
    p.update(scaling_json(plug));
    res.reports.push_back(std::move(p));
  }

  for (int k = 0; k < z.trajectory_pairs; ++k) {
    const auto [u, v] = distinct_pair(laws.size(), pick);
    Rng rt(cell.seed, "trajectory", static_cast<std::uint64_t>(k));
    const SampleSet su = draw_set(laws[u], z.trajectory_points, rt);
    const SampleSet sv = draw_set(laws[v], z.trajectory_points, rt);
    const TrajectoryReport tr = latent_interpolation_path(model, su, sv, z.trajectory_steps, rt);
    Json t = head;
    t["kind"] = "trajectory";
    t["u"] = u;
    t["v"] = v;
    t["t"] = tr.t;
    t["w2_gap"] = tr.w2_gap;
    t["endpoint_w2"] = tr.endpoint_w2;
    t["mean_gap"] = tr.mean_gap();
    res.reports.push_back(std::move(t));
  }
  return res;
}

fs::path models_dir(const RunOptions& opt) {
  return opt.models_dir.empty() ? opt.out / "models" : opt.models_dir;
}

}  // namespace

std::vector<ModelJob> plan_models(const ExperimentConfig& cfg) {
  cfg.validate();
  return make_plan(cfg).jobs;
}

std::vector<std::string> parallel_for(std::size_t n, int workers,
                                      const std::function<void(std::size_t)>& fn) {
  std::vector<std::string> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
        if (errors[i].empty()) errors[i] = "unknown error";
      }
    }
  };
  const int w = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (w <= 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < w; ++t) threads.emplace_back(work);
    for (auto& t : threads) t.join();
  }
  return errors;
}

void generate_data(const ExperimentConfig& cfg, const RunOptions& opt) {
  cfg.validate();
  std::set<std::string> done;
  std::vector<DataSpec> specs;
  for (const auto& job : make_plan(cfg).jobs)
    if (done.insert(job.data.tag()).second) specs.push_back(job.data);
  const auto errors = parallel_for(specs.size(), opt.workers, [&](std::size_t i) {
    const DataSpec& s = specs[i];
    const fs::path p = opt.out / "data" / (s.tag() + ".bin");
    write_file(p, s.paired ? serialize_paired(build_paired(s))
                           : serialize_dataset(build_dataset(s)));
  });
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty())
      throw std::runtime_error("gen-data " + specs[i].tag() + ": " + errors[i]);
}

RunSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& opt) {
  cfg.validate();
  const Plan plan = make_plan(cfg);
  fs::create_directories(opt.out);
  fs::create_directories(models_dir(opt));
  fs::create_directories(opt.out / "logs");

  // Models: load when present, otherwise train.
  std::vector<std::unique_ptr<TransportModel>> models(plan.jobs.size());
  std::vector<std::string> origin(plan.jobs.size());
  const auto model_errors = parallel_for(plan.jobs.size(), opt.workers, [&](std::size_t i) {
    const ModelJob& job = plan.jobs[i];
    const fs::path path = models_dir(opt) / (job.file_stem() + ".bin");
    if (fs::exists(path)) {
      models[i] = std::make_unique<TransportModel>(load_model(path));
      origin[i] = "loaded";
      return;
    }
    if (!opt.train_missing) throw std::runtime_error("model file missing: " + path.string());
    const TrainingPool pool = build_pool(job.data);
    std::ofstream log(opt.out / "logs" / (job.file_stem() + ".jsonl"), std::ios::trunc);
    models[i] = std::make_unique<TransportModel>(train(job.train, pool, &log));
    save_model(*models[i], path);
    origin[i] = "trained";
  });

  RunSummary summary;
  if (opt.evaluate) {
    summary.cells.resize(plan.cells.size());
    const auto cell_errors = parallel_for(plan.cells.size(), opt.workers, [&](std::size_t i) {
      const Cell& cell = plan.cells[i];
      for (std::size_t j : cell.jobs)
        if (!models[j])
          throw std::runtime_error("model " + plan.jobs[j].file_stem() +
                                   " unavailable: " + model_errors[j]);
      CellResult r;
      switch (cfg.kind) {
        case ExperimentKind::k_scaling:
        case ExperimentKind::fig2_grid:
          r = eval_scaling_cell(cfg, cell, *models[cell.jobs[0]]);
          break;
        case ExperimentKind::semisup_curve:
          r = eval_semisup_cell(cfg, cell, *models[cell.jobs[0]], *models[cell.jobs[1]]);
          break;
        case ExperimentKind::alignment_table:
          r = eval_alignment_cell(cfg, cell, *models[cell.jobs[0]]);
          break;
        case ExperimentKind::clt_report:
          r = eval_clt_cell(cfg, cell, *models[cell.jobs[0]]);
          break;
      }
      summary.cells[i] = std::move(r);
    });
    for (std::size_t i = 0; i < plan.cells.size(); ++i) {
      CellResult& c = summary.cells[i];
      c.cell = plan.cells[i].name;
      if (!cell_errors[i].empty()) {
        c = CellResult{plan.cells[i].name, false, cell_errors[i], {}, {}};
        ++summary.failures;
      }
      summary.rows.insert(summary.rows.end(), c.rows.begin(), c.rows.end());
    }

    std::ostringstream csv;
    write_csv(csv, summary.rows);
    write_file(opt.out / "metrics.csv", csv.str());
    std::string reports;
    for (const auto& c : summary.cells)
      for (const auto& j : c.reports) reports += j.dump() + "\n";
    write_file(opt.out / "reports.jsonl", reports);
  } else {
    for (const auto& e : model_errors)
      if (!e.empty()) ++summary.failures;
  }

  Json manifest;
  manifest["format"] = "dct-manifest/1";
  manifest["config"] = cfg.to_json();
  manifest["seeds"] = cfg.seeds;
  manifest["models"] = Json::array();
  for (std::size_t i = 0; i < plan.jobs.size(); ++i) {
    Json m{{"file", plan.jobs[i].file_stem() + ".bin"}, {"job", plan.jobs[i].to_json()}};
    const fs::path path = models_dir(opt) / (plan.jobs[i].file_stem() + ".bin");
    if (models[i]) {
      m["sha256"] = sha256_file(path);
      m["status"] = "ok";
    } else {
      m["status"] = "failed";
      m["error"] = model_errors[i];
    }
    manifest["models"].push_back(std::move(m));
  }
  manifest["cells"] = Json::array();
  for (const auto& c : summary.cells) {
    Json j{{"cell", c.cell}, {"status", c.ok ? "ok" : "failed"}, {"rows", c.rows.size()}};
    if (!c.ok) j["error"] = c.error;
    manifest["cells"].push_back(std::move(j));
  }
  if (opt.evaluate) {
    manifest["outputs"] = {{"metrics.csv", sha256_file(opt.out / "metrics.csv")},
                           {"reports.jsonl", sha256_file(opt.out / "reports.jsonl")}};
  }
  write_file(opt.out / "manifest.json", manifest.dump(2) + "\n");
  return summary;
}

}  // namespace dct
