#include "dct/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "dct/metrics.hpp"

namespace dct {

std::string to_string(GeneratorKind g) {
  switch (g) {
    case GeneratorKind::swd: return "swd";
    case GeneratorKind::energy: return "energy";
    case GeneratorKind::fm: return "fm";
    case GeneratorKind::stochastic_energy: return "stochastic_energy";
  }
  return "?";
}

std::string to_string(Conditioning c) {
  switch (c) {
    case Conditioning::sc: return "sc";
    case Conditioning::stc: return "stc";
    case Conditioning::onehot: return "onehot";
  }
  return "?";
}

GeneratorKind parse_generator(const std::string& s) {
  if (s == "swd") return GeneratorKind::swd;
  if (s == "energy") return GeneratorKind::energy;
  if (s == "fm") return GeneratorKind::fm;
  if (s == "stochastic_energy") return GeneratorKind::stochastic_energy;
  throw std::invalid_argument("unknown generator '" + s + "'");
}

Conditioning parse_conditioning(const std::string& s) {
  if (s == "sc") return Conditioning::sc;
  if (s == "stc") return Conditioning::stc;
  if (s == "onehot") return Conditioning::onehot;
  throw std::invalid_argument("unknown conditioning '" + s + "'");
}

Eigen::Index ModelConfig::cond_dim() const {
  return conditioning == Conditioning::sc ? encoder.latent : 2 * encoder.latent;
}

void ModelConfig::validate() const {
  if (encoder.input_dim < 1 || encoder.hidden < 1 || encoder.latent < 1 ||
      map_hidden < 1)
    throw std::invalid_argument("ModelConfig: sizes must be positive");
  if (conditioning == Conditioning::onehot && onehot_K == 0)
    throw std::invalid_argument("ModelConfig: one-hot conditioning needs K > 0");
  if (generator == GeneratorKind::swd && swd_projections < 1)
    throw std::invalid_argument("ModelConfig: swd_projections < 1");
  if (generator == GeneratorKind::stochastic_energy && noise_dim < 1)
    throw std::invalid_argument("ModelConfig: noise_dim < 1");
  if (fm_sigma < 0.0) throw std::invalid_argument("ModelConfig: fm_sigma < 0");
  ode.validate();
}

TransportModel::TransportModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed, "init");
  if (is_onehot())
    onehot = OneHotEncoder(cfg_.onehot_K, cfg_.encoder.latent, rng);
  else
    encoder = DeepSetEncoder(cfg_.encoder, rng);
  const Eigen::Index d = cfg_.data_dim();
  if (is_flow())
    field = VelocityField(d, cfg_.cond_dim(), cfg_.map_hidden, rng);
  else
    map = RegressionMap(d, cfg_.cond_dim(), cfg_.map_hidden,
                        cfg_.generator == GeneratorKind::stochastic_energy
                            ? cfg_.noise_dim
                            : 0,
                        rng);
}

Embedding TransportModel::embed(const SampleSet& s) {
  if (is_onehot())
    throw std::logic_error("one-hot models cannot embed sample sets");
  return encoder.encode(s);
}

Embedding TransportModel::embed_label(std::size_t k) const {
  if (!is_onehot()) throw std::logic_error("model has no label table");
  return onehot.encode(k);
}

std::size_t TransportModel::assign_label(const SampleSet& s) const {
  if (!is_onehot()) throw std::logic_error("model has no label table");
  return nearest_training_distribution(s, onehot.centroids);
}

SampleSet TransportModel::transport(const SampleSet& src, const Embedding& z_src,
                                    const std::optional<Embedding>& z_tgt,
                                    Rng& rng) {
  if (has_target_slot() != z_tgt.has_value())
    throw std::invalid_argument(
        has_target_slot() ? "transport: model needs a target embedding"
                          : "transport: source-conditioned model takes no target");
  switch (cfg_.generator) {
    case GeneratorKind::fm: {
      const auto c = condition_vector(field.net.cond_dim(), z_src, z_tgt);
      return SampleSet(fm_integrate(field, src.points(), c, cfg_.ode).state);
    }
    case GeneratorKind::stochastic_energy: {
      const Eigen::MatrixXd xi = rng.normal_matrix(src.size(), map.noise_dim);
      return SampleSet(stochastic_energy_sample(map, src.points(), xi, z_src, z_tgt));
    }
    default:
      return transport_apply(map, src, z_src, z_tgt);
  }
}

std::vector<Parameter*> TransportModel::parameters() {
  std::vector<Parameter*> p = is_onehot() ? onehot.parameters() : encoder.parameters();
  auto gen = is_flow() ? field.net.parameters() : map.net.parameters();
  p.insert(p.end(), gen.begin(), gen.end());
  return p;
}

std::size_t TransportModel::parameter_count() {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

TrainingPool TrainingPool::from(const Dataset& d) {
  d.validate();
  TrainingPool pool;
  pool.sets = d.sets;
  pool.labels = d.unique_id;
  pool.partner.assign(d.size(), -1);
  pool.tags = d.tags;
  pool.n_labels = d.K;
  return pool;
}

TrainingPool TrainingPool::from(const PairedDataset& d) {
  d.validate();
  TrainingPool pool;
  const std::size_t n = d.size();
  pool.sets = d.sources;
  pool.sets.insert(pool.sets.end(), d.targets.begin(), d.targets.end());
  pool.labels.resize(2 * n);
  pool.partner.assign(2 * n, -1);
  pool.tags.assign(2 * n, TimeTag::none);
  for (std::size_t i = 0; i < 2 * n; ++i) pool.labels[i] = i;
  for (std::size_t i = 0; i < n; ++i) {
    pool.partner[i] = static_cast<long>(n + i);
    pool.tags[i] = TimeTag::early;
    pool.tags[n + i] = TimeTag::late;
  }
  pool.n_labels = 2 * n;
  return pool;
}

void PairingPolicy::validate() const {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("PairingPolicy: p must lie in [0, 1]");
}

namespace {

std::vector<std::size_t> indices_where(const TrainingPool& pool,
                                       auto&& predicate) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (predicate(i)) out.push_back(i);
  return out;
}

PairDraw draw_supervised(const TrainingPool& pool, Rng& rng) {
  // Rejection keeps the draw uniform over partnered sets without an index.
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const std::size_t u = rng.index(pool.size());
    if (pool.partner[u] >= 0)
      return {u, static_cast<std::size_t>(pool.partner[u]), true};
  }
  const auto src = indices_where(pool, [&](std::size_t i) { return pool.partner[i] >= 0; });
  if (src.empty())
    throw std::invalid_argument("sample_pair: supervised policy needs a paired dataset");
  const std::size_t u = src[rng.index(src.size())];
  return {u, static_cast<std::size_t>(pool.partner[u]), true};
}

PairDraw draw_uniform(const TrainingPool& pool, Rng& rng) {
  const std::size_t u = rng.index(pool.size());
  const std::size_t v = rng.index(pool.size());
  return {u, v, false};
}

}  // namespace

PairDraw sample_pair(const PairingPolicy& policy, const TrainingPool& pool,
                     Rng& rng) {
  policy.validate();
  if (pool.size() == 0) throw std::invalid_argument("sample_pair: empty dataset");
  switch (policy.kind) {
    case PairingKind::supervised_pairs:
      return draw_supervised(pool, rng);
    case PairingKind::any_to_any_uniform:
      return draw_uniform(pool, rng);
    case PairingKind::forward_time_only: {
      const auto early = indices_where(pool, [&](std::size_t i) { return pool.tags[i] == TimeTag::early; });
      const auto late = indices_where(pool, [&](std::size_t i) { return pool.tags[i] == TimeTag::late; });
      if (early.empty() || late.empty())
        throw std::invalid_argument("sample_pair: forward policy needs early and late sets");
      const std::size_t u = early[rng.index(early.size())];
      const std::size_t v = late[rng.index(late.size())];
      return {u, v, false};
    }
    case PairingKind::semi_supervised_mixture:
      if (rng.uniform() < policy.p) return draw_supervised(pool, rng);
      return draw_uniform(pool, rng);
  }
  throw std::invalid_argument("sample_pair: unknown policy");
}

void TrainConfig::validate() const {
  model.validate();
  policy.validate();
  if (batch_pairs < 1 || subsample < 1 || epochs < 0 || !(learning_rate > 0.0))
    throw std::invalid_argument("TrainConfig: sizes must be positive");
}

std::size_t steps_per_epoch(const TrainConfig& cfg, const TrainingPool& pool) {
  return std::max<std::size_t>(1, pool.size() / cfg.batch_pairs);
}

PairBatch draw_batch(const TrainConfig& cfg, const TrainingPool& pool, Rng& rng) {
  PairBatch b;
  std::vector<std::size_t> rows_u, rows_v;
  std::vector<Eigen::Index> sizes;
  Eigen::Index total = 0;
  for (std::size_t i = 0; i < cfg.batch_pairs; ++i) {
    const PairDraw d = sample_pair(cfg.policy, pool, rng);
    b.u.push_back(d.u);
    b.v.push_back(d.v);
    const Eigen::Index m = std::min({cfg.subsample, pool.sets[d.u].size(),
                                     pool.sets[d.v].size()});
    sizes.push_back(m);
    total += m;
  }
  const Eigen::Index dim = pool.sets[b.u[0]].dim();
  b.source.resize(total, dim);
  b.target.resize(total, dim);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < b.u.size(); ++i) {
    const auto& su = pool.sets[b.u[i]].points();
    const auto& sv = pool.sets[b.v[i]].points();
    const Eigen::Index m = sizes[i];
    const auto iu = rng.sample_without_replacement(static_cast<std::size_t>(su.rows()),
                                                   static_cast<std::size_t>(m));
    const auto iv = rng.sample_without_replacement(static_cast<std::size_t>(sv.rows()),
                                                   static_cast<std::size_t>(m));
    for (Eigen::Index j = 0; j < m; ++j) {
      b.source.row(row + j) = su.row(static_cast<Eigen::Index>(iu[j]));
      b.target.row(row + j) = sv.row(static_cast<Eigen::Index>(iv[j]));
    }
    b.segs.push(m);
    row += m;
  }
  return b;
}

namespace {

Segments doubled(const Segments& s) {
  Segments out = s;
  for (Eigen::Index i = 0; i < s.count(); ++i) out.push(s.size(i));
  return out;
}

Eigen::MatrixXd stack(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

}  // namespace

Var batch_loss(Graph& g, TransportModel& model, const PairBatch& batch,
               const TrainingPool& pool, bool bidirectional, Rng& rng) {
  const auto B = static_cast<Eigen::Index>(batch.u.size());
  const ModelConfig& cfg = model.config();
  Var zs, zt;
  if (model.is_onehot()) {
    std::vector<std::size_t> lu, lv;
    for (std::size_t i = 0; i < batch.u.size(); ++i) {
      lu.push_back(pool.labels[batch.u[i]]);
      lv.push_back(pool.labels[batch.v[i]]);
    }
    zs = model.onehot.forward(g, lu);
    zt = model.onehot.forward(g, lv);
  } else {
    Var z = model.encoder.forward(g, g.constant(stack(batch.source, batch.target)),
                                  doubled(batch.segs));
    zs = g.slice_rows(z, 0, B);
    zt = g.slice_rows(z, B, B);
  }
  auto cond_of = [&](Var a, Var b) {
    if (!model.has_target_slot()) return a;
    const Var parts[] = {a, b};
    return g.concat_cols(parts);
  };
  Var cond = cond_of(zs, zt);
  Eigen::MatrixXd x = batch.source;
  Eigen::MatrixXd y = batch.target;
  Segments segs = batch.segs;
  if (bidirectional) {
    const Var both[] = {cond, cond_of(zt, zs)};
    cond = g.concat_rows(both);
    x = stack(batch.source, batch.target);
    y = stack(batch.target, batch.source);
    segs = doubled(batch.segs);
  }

  Var loss;
  switch (cfg.generator) {
    case GeneratorKind::fm:
      loss = fm_loss(g, model.field, x, y, cond, segs, cfg.fm_sigma, rng);
      break;
    case GeneratorKind::swd: {
      Var pred = model.map.net.forward(g, g.constant(x), cond, segs);
      loss = swd_loss(g, pred, y, segs,
                      random_projections(x.cols(), cfg.swd_projections, rng));
      break;
    }
    case GeneratorKind::energy: {
      Var pred = model.map.net.forward(g, g.constant(x), cond, segs);
      loss = energy_loss(g, pred, y, segs);
      break;
    }
    case GeneratorKind::stochastic_energy: {
      Eigen::MatrixXd in(x.rows(), x.cols() + cfg.noise_dim);
      in << x, rng.normal_matrix(x.rows(), cfg.noise_dim);
      Var pred = model.map.net.forward(g, g.constant(std::move(in)), cond, segs);
      loss = energy_loss(g, pred, y, segs);
      break;
    }
  }
  // Both directions are averaged over their own pairs and then summed.
  return bidirectional ? g.scale(loss, 2.0) : loss;
}

double train_step(TransportModel& model, const PairBatch& batch,
                  const TrainingPool& pool, bool bidirectional,
                  AdamState& adam, double lr, Rng& rng) {
  const auto params = model.parameters();
  zero_grad(params);
  Graph g;
  Var loss;
  try {
    loss = batch_loss(g, model, batch, pool, bidirectional, rng);
  } catch (const NonFiniteError& e) {
    throw TrainingError(std::string("non-finite value in forward pass: ") + e.what());
  }
  const double value = g.value(loss)(0, 0);
  if (!std::isfinite(value)) throw TrainingError("non-finite training loss");
  try {
    g.backward(loss);
  } catch (const NonFiniteError& e) {
    throw TrainingError(std::string("non-finite gradient: ") + e.what());
  }
  for (const Parameter* p : params)
    if (!p->grad.allFinite())
      throw TrainingError("non-finite gradient for parameter " + p->name);
  adam_step(params, adam, lr);
  return value;
}

TransportModel train(const TrainConfig& cfg_in, const TrainingPool& pool,
                     std::ostream* log_stream) {
  TrainConfig cfg = cfg_in;
  if (pool.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (cfg.model.conditioning == Conditioning::onehot) {
    if (cfg.model.onehot_K == 0) cfg.model.onehot_K = pool.n_labels;
    if (cfg.model.onehot_K < pool.n_labels)
      throw std::invalid_argument("train: one-hot table smaller than label count");
  }
  cfg.validate();
  TransportModel model(cfg.model, cfg.seed);
  if (model.is_onehot()) {
    std::vector<Eigen::VectorXd> sums(cfg.model.onehot_K,
                                      Eigen::VectorXd::Zero(cfg.model.data_dim()));
    std::vector<double> counts(cfg.model.onehot_K, 0.0);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      sums[pool.labels[i]] += pool.sets[i].mean();
      counts[pool.labels[i]] += 1.0;
    }
    for (std::size_t k = 0; k < sums.size(); ++k)
      model.onehot.centroids.push_back(
          counts[k] > 0 ? Eigen::VectorXd(sums[k] / counts[k])
                        : Eigen::VectorXd::Constant(cfg.model.data_dim(),
                                                    std::numeric_limits<double>::infinity()));
  }

  const bool bidirectional =
      cfg.bidirectional && cfg.policy.kind != PairingKind::supervised_pairs;
  Rng rng(cfg.seed, "train");
  AdamState adam;
  const std::size_t steps = steps_per_epoch(cfg, pool);
  const auto t0 = std::chrono::steady_clock::now();
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < steps; ++s, ++step) {
      const PairBatch batch = draw_batch(cfg, pool, rng);
      double loss;
      try {
        loss = train_step(model, batch, pool, bidirectional, adam,
                          cfg.learning_rate, rng);
      } catch (const TrainingError& e) {
        throw TrainingError("step " + std::to_string(step) + " (epoch " +
                            std::to_string(epoch) + "): " + e.what());
      }
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      model.log.push_back({step, epoch, loss, wall});
      if (log_stream) {
        nlohmann::json line{{"step", step}, {"epoch", epoch}, {"loss", loss},
                            {"wall_time", wall}};
        *log_stream << line.dump() << '\n';
      }
    }
  }
  return model;
}

}  // namespace dct
