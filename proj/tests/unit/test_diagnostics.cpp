#include <doctest.h>

#include <cmath>

#include "dct/diagnostics.hpp"
#include "dct/metrics.hpp"

using namespace dct;

namespace {

GaussianParams random_gaussian(Rng& rng, Eigen::Index d = 2) {
  const Eigen::MatrixXd A = rng.normal_matrix(d, d);
  return GaussianParams{rng.normal_matrix(d, 1).col(0) * 2.0,
                        A * A.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d)};
}

TransportModel small_model(Conditioning c, std::uint64_t seed) {
  ModelConfig m;
  m.conditioning = c;
  m.encoder.hidden = 8;
  m.encoder.latent = 4;
  m.map_hidden = 8;
  return TransportModel(m, seed);
}

}  // namespace

TEST_CASE("spearman") {
  Eigen::VectorXd a(5), b(5);
  a << 1, 2, 3, 4, 5;
  b << 10, 20, 30, 40, 50;
  CHECK(spearman(a, b) == doctest::Approx(1.0));
  CHECK(spearman(a, -b) == doctest::Approx(-1.0));
  b << 1, 3, 2, 5, 4;
  // 1 - 6 sum d^2 / (n (n^2 - 1)) with sum d^2 = 4.
  CHECK(spearman(a, b) == doctest::Approx(0.8));
  // Ties take average ranks: (1, 2.5, 2.5, 4) against (1, 2, 3, 4), centered dot 4.5.
  Eigen::VectorXd c(4), d(4);
  c << 1, 2, 2, 3;
  d << 1, 2, 3, 4;
  CHECK(spearman(c, d) == doctest::Approx(4.5 / std::sqrt(4.5 * 5.0)));
  CHECK(std::isnan(spearman(Eigen::VectorXd::Ones(4), d)));
}

TEST_CASE("identity transport has zero paired cost") {
  Rng rng(1);
  const Eigen::MatrixXd X = rng.normal_matrix(200, 2).array() + 1.0;
  // Target samples from the same law: the same points in another order.
  const auto perm = rng.permutation(200);
  Eigen::MatrixXd Y(200, 2);
  for (Eigen::Index i = 0; i < 200; ++i) Y.row(i) = X.row(static_cast<Eigen::Index>(perm[i]));
  const AlignmentReport r = alignment_from_samples(X, X, Y, 50, rng);
  CHECK(r.d_pair < 1e-12);
  CHECK(r.d_rand > 0.5);
  CHECK(r.n_samples == 200);
  CHECK(r.n_permutations == 50);
}

TEST_CASE("an input-ignoring sampler has ratio near one") {
  const GaussianParams p = GaussianParams{Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity()};
  const GaussianParams q{Eigen::Vector2d(3, 1), Eigen::Matrix2d{{2.0, 0.3}, {0.3, 0.5}}};
  auto ratio = [&](Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    const SampleSet X = draw_mvn_set(p, n, rng);
    const SampleSet Yhat = draw_mvn_set(q, n, rng);  // independent of X
    const SampleSet Y = draw_mvn_set(q, n, rng);
    return alignment_from_samples(X.points(), Yhat.points(), Y.points(), 50, rng);
  };
  for (std::uint64_t s = 0; s < 5; ++s) {
    const AlignmentReport r = ratio(200, s);
    CHECK(r.ratio >= 0.9);
    CHECK(r.ratio <= 1.1);
  }
  const AlignmentReport big = ratio(10000, 99);
  CHECK(big.ratio >= 0.97);
  CHECK(big.ratio <= 1.03);
  CHECK(std::abs(big.spearman_rho) < 0.05);
}

TEST_CASE("alignment is invariant to shifting the target side") {
  Rng rng(2);
  const Eigen::MatrixXd X = rng.normal_matrix(100, 2);
  const Eigen::MatrixXd Yhat = rng.normal_matrix(100, 2).array() + 2.0;
  const Eigen::MatrixXd Y = rng.normal_matrix(100, 2).array() + 2.0;
  const Eigen::RowVector2d shift(5.0, -3.0);
  Rng a(3), b(3);
  const AlignmentReport r0 = alignment_from_samples(X, Yhat, Y, 20, a);
  const AlignmentReport r1 = alignment_from_samples(X, Yhat.rowwise() + shift, Y.rowwise() + shift, 20, b);
  CHECK(std::abs(r0.d_pair - r1.d_pair) < 1e-9);
  CHECK(std::abs(r0.d_rand - r1.d_rand) < 1e-9);
  CHECK(std::abs(r0.ratio - r1.ratio) < 1e-9);
}

TEST_CASE("monotone transport has rank correlation one") {
  Rng rng(4);
  const Eigen::MatrixXd X = rng.normal_matrix(100, 2);
  const Eigen::MatrixXd Yhat = (2.0 * X).rowwise() + Eigen::RowVector2d(4, 4);
  const Eigen::MatrixXd Y = (2.0 * rng.normal_matrix(100, 2)).rowwise() + Eigen::RowVector2d(4, 4);
  const AlignmentReport r = alignment_from_samples(X, Yhat, Y, 10, rng);
  CHECK(r.rho_defined);
  CHECK(r.spearman_rho == doctest::Approx(1.0));
  CHECK(r.ratio < 1.0);
  // Equal empirical means leave the projection direction undefined.
  const AlignmentReport flat = alignment_from_samples(X, X, X, 5, rng);
  CHECK_FALSE(flat.rho_defined);
}

TEST_CASE("average_reports skips undefined correlations") {
  AlignmentReport a, b;
  a.d_pair = 1, a.d_rand = 2, a.ratio = 0.5, a.spearman_rho = 0.9, a.rho_defined = true;
  b.d_pair = 3, b.d_rand = 2, b.ratio = 1.5, b.spearman_rho = NAN, b.rho_defined = false;
  const AlignmentReport m = average_reports({a, b});
  CHECK(m.d_pair == 2.0);
  CHECK(m.ratio == 1.0);
  CHECK(m.spearman_rho == 0.9);
  CHECK_THROWS(average_reports({}));
}

TEST_CASE("loglog slope") {
  CHECK(loglog_slope({1, 2, 4, 8}, {1, 0.5, 0.25, 0.125}) == doctest::Approx(-1.0));
  CHECK(loglog_slope({1, 4, 16}, {3, 6, 12}) == doctest::Approx(0.5));
  CHECK(std::isnan(loglog_slope({1, 2, 3}, {0, 0, 0})));
}

TEST_CASE("clt scaling with reference encoders") {
  const DistributionParams law = GaussianParams{Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity()};
  const std::vector<int> m_list{32, 64, 128, 256, 512, 1024, 2048};
  SUBCASE("constant encoder") {
    Rng rng(5);
    const ScalingReport r = clt_scaling([](const SampleSet&) { return Eigen::VectorXd::Ones(3).eval(); },
                                        law, m_list, 30, rng);
    for (double v : r.value) CHECK(v == 0.0);
    CHECK_FALSE(r.slope_defined);
  }
  SUBCASE("sample mean encoder") {
    Rng rng(6);
    const ScalingReport r = clt_scaling([](const SampleSet& s) { return s.mean(); }, law, m_list, 400, rng);
    CHECK(r.slope == doctest::Approx(-0.5).epsilon(0.1));
    for (std::size_t i = 0; i < r.m.size(); ++i)
      CHECK(r.value[i] * std::sqrt(static_cast<double>(r.m[i])) == doctest::Approx(1.0).epsilon(0.15));
    REQUIRE(r.covariance.rows() == 2);
    CHECK((r.covariance * 2048.0 - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 0.3);
  }
  SUBCASE("precondition errors") {
    Rng rng(7);
    auto e = [](const SampleSet& s) { return s.mean(); };
    CHECK_THROWS(clt_scaling(e, law, {32, 64}, 30, rng));
    CHECK_THROWS(clt_scaling(e, law, m_list, 10, rng));
  }
}

TEST_CASE("plug-in gap vanishes at full size") {
  TransportModel m = small_model(Conditioning::stc, 8);
  const DistributionParams u = GaussianParams{Eigen::Vector2d(1, 1), Eigen::Matrix2d::Identity()};
  const DistributionParams v = GaussianParams{Eigen::Vector2d(3, 2), 0.5 * Eigen::Matrix2d::Identity()};
  PluginConfig cfg;
  cfg.pool_size = 512;
  cfg.eval_size = 64;
  Rng rng(9);
  const ScalingReport r = plugin_loss_convergence(m, u, v, {16, 64, 512}, 4, rng, cfg);
  REQUIRE(r.value.size() == 3);
  CHECK(r.value[2] < 1e-9);
  CHECK(r.value[0] > r.value[2]);
  TransportModel sc = small_model(Conditioning::sc, 9);
  CHECK_THROWS(plugin_loss_convergence(sc, u, v, {16}, 1, rng, cfg));
}

TEST_CASE("gaussian OT displacement") {
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const GaussianParams p = random_gaussian(rng);
    const GaussianParams q = random_gaussian(rng);
    const GaussianParams g0 = gaussian_ot_displacement(p, q, 0.0);
    const GaussianParams g1 = gaussian_ot_displacement(p, q, 1.0);
    CHECK(g0.mean == p.mean);
    CHECK(g0.cov == p.cov);
    CHECK(g1.mean == q.mean);
    CHECK(g1.cov == q.cov);
    const double w = gaussian_w2(p, q);
    for (double t : {0.1, 0.37, 0.5, 0.9}) {
      const GaussianParams gt = gaussian_ot_displacement(p, q, t);
      CHECK(std::abs(gaussian_w2(p, gt) - t * w) < 1e-8);
      CHECK(std::abs(gaussian_w2(p, gt) + gaussian_w2(gt, q) - w) < 1e-8);
    }
  }
  // Equal covariances: the mean moves and the covariance stays.
  const GaussianParams p = random_gaussian(rng);
  GaussianParams q = p;
  q.mean = Eigen::Vector2d(7, -3);
  const GaussianParams mid = gaussian_ot_displacement(p, q, 0.25);
  CHECK((mid.mean - (0.75 * p.mean + 0.25 * q.mean)).norm() < 1e-12);
  CHECK((mid.cov - p.cov).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS(gaussian_ot_displacement(p, q, 1.5));
  GaussianParams bad = p;
  bad.cov(0, 0) = -1.0;
  CHECK_THROWS(gaussian_ot_displacement(bad, q, 0.5));
}

TEST_CASE("latent interpolation path") {
  TransportModel m = small_model(Conditioning::stc, 11);
  Rng rng(12);
  const SampleSet su = draw_mvn_set(GaussianParams{Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity()}, 100, rng);
  const SampleSet sv = draw_mvn_set(GaussianParams{Eigen::Vector2d(2, 2), Eigen::Matrix2d::Identity()}, 100, rng);
  SUBCASE("one step equals direct transport") {
    Rng r(13);
    const TrajectoryReport tr = latent_interpolation_path(m, su, sv, 1, r);
    REQUIRE(tr.sets.size() == 2);
    CHECK(tr.sets[0].points() == su.points());
    Rng r2(13);
    const SampleSet direct = m.transport(su, m.embed(su), m.embed(sv), r2);
    CHECK(tr.sets[1].points() == direct.points());
  }
  SUBCASE("grid times") {
    Rng r(14);
    const TrajectoryReport tr = latent_interpolation_path(m, su, sv, 10, r);
    REQUIRE(tr.t.size() == 11);
    CHECK(tr.t.front() == 0.0);
    CHECK(tr.t.back() == 1.0);
    for (std::size_t k = 1; k < tr.t.size(); ++k) CHECK(tr.t[k] > tr.t[k - 1]);
    CHECK(tr.w2_gap[0] < 1e-9);
    CHECK(tr.endpoint_w2 > 0.0);
  }
  SUBCASE("source-conditioned models are rejected") {
    TransportModel sc = small_model(Conditioning::sc, 15);
    Rng r(16);
    CHECK_THROWS(latent_interpolation_path(sc, su, sv, 3, r));
    CHECK_THROWS(latent_interpolation_path(m, su, sv, 0, r));
  }
}
