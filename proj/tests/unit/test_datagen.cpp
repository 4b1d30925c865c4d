#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "dct/datagen.hpp"
#include "dct/linalg.hpp"
#include "dct/metrics.hpp"

using namespace dct;

TEST_CASE("prior defaults follow the Gaussian protocol") {
  const MVNPrior p;
  CHECK(p.dim() == 2);
  CHECK(p.mean_box.lo == Eigen::Vector2d(0.0, 0.0));
  CHECK(p.mean_box.hi == Eigen::Vector2d(5.0, 5.0));
  CHECK(p.iw_dof == 10.0);
  CHECK(p.iw_scale == Eigen::Matrix2d::Identity());
  const GMMPrior g;
  CHECK(g.components == 3);
  CHECK(g.dirichlet_alpha == 1.0);
  const PairSpec s;
  CHECK(s.shift == Eigen::Vector2d(1.0, 1.0));
  CHECK(s.offaxis == Eigen::Vector2d(-0.1, 0.1));
}

TEST_CASE("inverse Wishart draws are SPD with the analytic mean") {
  Rng rng(1);
  const int n = 100000;
  Eigen::Matrix2d sum = Eigen::Matrix2d::Zero(), sq = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::MatrixXd s = sample_inverse_wishart(10.0, Eigen::Matrix2d::Identity(), rng);
    REQUIRE(s.llt().info() == Eigen::Success);
    sum += s;
    sq += s.cwiseProduct(s);
  }
  const Eigen::Matrix2d mean = sum / n;
  const Eigen::Matrix2d var = sq / n - mean.cwiseProduct(mean);
  const Eigen::Matrix2d expect = Eigen::Matrix2d::Identity() / 7.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(std::abs(mean(i, j) - expect(i, j)) < 3.0 * std::sqrt(var(i, j) / n));
}

TEST_CASE("fixed seed reproduces draws bit-identically") {
  Rng a(2), b(2);
  for (int i = 0; i < 50; ++i)
    CHECK(sample_inverse_wishart(10.0, Eigen::Matrix2d::Identity(), a) ==
          sample_inverse_wishart(10.0, Eigen::Matrix2d::Identity(), b));
  const Dataset d1 = build_unsupervised_dataset(MVNPrior{}, 7, 40, 20, 5);
  const Dataset d2 = build_unsupervised_dataset(MVNPrior{}, 7, 40, 20, 5);
  for (std::size_t i = 0; i < d1.size(); ++i) CHECK(d1.sets[i] == d2.sets[i]);
}

TEST_CASE("MVN draws") {
  Rng rng(3);
  SUBCASE("near-zero covariance collapses onto the mean") {
    const GaussianParams p{Eigen::Vector2d(1.0, 2.0), 1e-18 * Eigen::Matrix2d::Identity()};
    const SampleSet s = draw_mvn_set(p, 50, rng);
    CHECK((s.points().rowwise() - p.mean.transpose()).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("moments") {
    GaussianParams p{Eigen::Vector2d(-1.0, 3.0), Eigen::Matrix2d()};
    p.cov << 1.5, -0.4, -0.4, 0.8;
    const std::size_t n = 100000;
    const GaussianFit f = fit_gaussian(draw_mvn_set(p, n, rng));
    for (int i = 0; i < 2; ++i)
      CHECK(std::abs(f.params.mean(i) - p.mean(i)) < 3 * std::sqrt(p.cov(i, i) / n));
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        CHECK(std::abs(f.params.cov(i, j) - p.cov(i, j)) <
              3 * std::sqrt((p.cov(i, j) * p.cov(i, j) + p.cov(i, i) * p.cov(j, j)) / n));
  }
  SUBCASE("one dimension") {
    const GaussianParams p{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 4.0)};
    const std::size_t n = 100000;
    const double v = fit_gaussian(draw_mvn_set(p, n, rng)).params.cov(0, 0);
    CHECK(std::abs(v - 4.0) < 3 * 4.0 * std::sqrt(2.0 / n));
  }
}

TEST_CASE("GMM draws") {
  Rng rng(4);
  const GaussianParams c0{Eigen::Vector2d(0.0, 0.0), Eigen::Matrix2d::Identity() * 1e-6};
  const GaussianParams c1{Eigen::Vector2d(10.0, 0.0), Eigen::Matrix2d::Identity() * 1e-6};
  const GaussianParams c2{Eigen::Vector2d(0.0, 10.0), Eigen::Matrix2d::Identity() * 1e-6};
  SUBCASE("degenerate weights use one component") {
    const GMMParams g{Eigen::Vector3d(1.0, 0.0, 0.0), {c0, c1, c2}};
    const SampleSet s = draw_gmm_set(g, 500, rng);
    CHECK(s.points().cwiseAbs().maxCoeff() < 0.1);
  }
  SUBCASE("component frequencies") {
    const Eigen::Vector3d w(0.2, 0.5, 0.3);
    const GMMParams g{w, {c0, c1, c2}};
    const int n = 100000;
    const SampleSet s = draw_gmm_set(g, n, rng);
    Eigen::Vector3d count = Eigen::Vector3d::Zero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto r = s.row(i);
      count(r(0) > 5 ? 1 : (r(1) > 5 ? 2 : 0)) += 1;
    }
    for (int k = 0; k < 3; ++k)
      CHECK(std::abs(count(k) / n - w(k)) < 3 * std::sqrt(w(k) * (1 - w(k)) / n));
  }
  SUBCASE("single component agrees with the MVN sampler in distribution") {
    GaussianParams p{Eigen::Vector2d(1.0, 1.0), Eigen::Matrix2d()};
    p.cov << 1.0, 0.3, 0.3, 0.5;
    const GMMParams g{Eigen::VectorXd::Ones(1), {p}};
    const SampleSet a = draw_gmm_set(g, 300, rng);
    const SampleSet b = draw_mvn_set(p, 300, rng);
    // Permutation test on the energy statistic.
    const double observed = energy_distance(a, b);
    Eigen::MatrixXd pooled(600, 2);
    pooled << a.points(), b.points();
    int exceed = 0;
    const int perms = 200;
    for (int k = 0; k < perms; ++k) {
      const auto idx = rng.permutation(600);
      Eigen::MatrixXd x(300, 2), y(300, 2);
      for (int i = 0; i < 300; ++i) {
        x.row(i) = pooled.row(static_cast<Eigen::Index>(idx[i]));
        y.row(i) = pooled.row(static_cast<Eigen::Index>(idx[300 + i]));
      }
      if (energy_distance(SampleSet(x), SampleSet(y)) >= observed) ++exceed;
    }
    CHECK(static_cast<double>(exceed) / perms > 0.01);
  }
}

TEST_CASE("unsupervised dataset repetition rule") {
  SUBCASE("K = n_sets gives distinct records") {
    const Dataset d = build_unsupervised_dataset(MVNPrior{}, 30, 30, 10, 1);
    std::set<std::size_t> ids(d.unique_id.begin(), d.unique_id.end());
    CHECK(ids.size() == 30);
    for (std::size_t i = 1; i < d.size(); ++i)
      CHECK(std::get<GaussianParams>(d.params[i]).mean !=
            std::get<GaussianParams>(d.params[0]).mean);
  }
  SUBCASE("K = 1 shares one record") {
    const Dataset d = build_unsupervised_dataset(MVNPrior{}, 1, 12, 10, 1);
    for (std::size_t i = 0; i < d.size(); ++i) {
      CHECK(d.unique_id[i] == 0);
      CHECK(std::get<GaussianParams>(d.params[i]).cov ==
            std::get<GaussianParams>(d.params[0]).cov);
    }
  }
  SUBCASE("K = 10, n = 50,000: each id occurs n / K = 5,000 times") {
    const Dataset d = build_unsupervised_dataset(MVNPrior{}, 10, 50000, 2, 1);
    std::map<std::size_t, int> count;
    for (auto id : d.unique_id) ++count[id];
    CHECK(count.size() == 10);
    for (const auto& [id, c] : count) CHECK(c == 5000);
    CHECK_FALSE(d.truncated);
  }
  SUBCASE("indivisible K truncates the last block") {
    const Dataset d = build_unsupervised_dataset(MVNPrior{}, 3, 10, 2, 1);
    CHECK(d.truncated);
    CHECK(d.size() == 10);
  }
  SUBCASE("GMM sets have the requested size") {
    const Dataset d = build_unsupervised_dataset(GMMPrior{}, 4, 8, 50, 1);
    for (const auto& s : d.sets) CHECK(s.size() == 50);
    for (const auto& p : d.params) CHECK(std::get<GMMParams>(p).components.size() == 3);
  }
}

TEST_CASE("supervised pairs") {
  const MVNPrior prior;
  const Box support = Box::square(2, 0.0, 2.5);
  SUBCASE("zero shift permutes the source") {
    PairSpec spec;
    spec.shift = Eigen::Vector2d::Zero();
    const PairedDataset d = build_supervised_pairs(spec, prior, support, 5, 30, 2);
    for (std::size_t i = 0; i < d.size(); ++i) {
      std::vector<std::pair<double, double>> a, b;
      for (Eigen::Index k = 0; k < 30; ++k) {
        a.emplace_back(d.sources[i].points()(k, 0), d.sources[i].points()(k, 1));
        b.emplace_back(d.targets[i].points()(k, 0), d.targets[i].points()(k, 1));
      }
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      CHECK(a == b);
    }
  }
  SUBCASE("shift moves the mean by (1, 1)") {
    const PairedDataset d = build_supervised_pairs(PairSpec{}, prior, support, 20, 100, 3);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const Eigen::VectorXd diff = d.targets[i].mean() - d.sources[i].mean();
      CHECK((diff - Eigen::Vector2d(1.0, 1.0)).norm() < 1e-12);
      const auto& p = std::get<GaussianParams>(d.source_params[i]);
      CHECK(p.mean.maxCoeff() <= 2.5);
      CHECK(p.mean.minCoeff() >= 0.0);
    }
  }
  SUBCASE("targets lose pointwise correspondence") {
    const PairedDataset d = build_supervised_pairs(PairSpec{}, prior, support, 200, 8, 4);
    int identity = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const Eigen::MatrixXd shifted =
          d.sources[i].points().rowwise() + Eigen::RowVector2d(1.0, 1.0);
      if ((shifted - d.targets[i].points()).cwiseAbs().maxCoeff() < 1e-12) ++identity;
    }
    CHECK(identity < 200 / 24);
  }
  SUBCASE("bimodal target of a point mass") {
    PairSpec spec;
    spec.kind = PairKind::gmm_bimodal;
    const Eigen::RowVector2d x(0.7, 1.2);
    const SampleSet src(Eigen::MatrixXd(x.replicate(40, 1)));
    Rng rng(5);
    const SampleSet t = paired_target_set(spec, src, rng);
    std::set<std::pair<double, double>> support_pts;
    for (Eigen::Index k = 0; k < t.size(); ++k) support_pts.emplace(t.row(k)(0), t.row(k)(1));
    const Eigen::RowVector2d plus = x + (Eigen::RowVector2d(1.0, 1.0) + Eigen::RowVector2d(-0.1, 0.1));
    const Eigen::RowVector2d minus = x + (Eigen::RowVector2d(1.0, 1.0) - Eigen::RowVector2d(-0.1, 0.1));
    const std::set<std::pair<double, double>> expect{{plus(0), plus(1)}, {minus(0), minus(1)}};
    CHECK(support_pts == expect);
    CHECK(t.size() == 40);
  }
}

TEST_CASE("OOD target grid") {
  const MVNPrior prior;
  const auto corners = ood_target_grid(2, prior, 1);
  REQUIRE(corners.size() == 4);
  CHECK(corners[0].mean == Eigen::Vector2d(0.0, 0.0));
  CHECK(corners[1].mean == Eigen::Vector2d(0.0, 5.0));
  CHECK(corners[2].mean == Eigen::Vector2d(5.0, 0.0));
  CHECK(corners[3].mean == Eigen::Vector2d(5.0, 5.0));
  const auto grid = ood_target_grid(21, prior, 1);
  CHECK(grid.size() == 441);
  for (const auto& g : grid) CHECK(linalg::is_spd(g.cov));
  CHECK(grid[0].cov != grid[1].cov);
}
