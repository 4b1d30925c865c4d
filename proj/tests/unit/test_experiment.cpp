#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <set>

#include "dct/experiment.hpp"
#include "dct/io.hpp"

using namespace dct;
namespace fs = std::filesystem;

namespace {

Json tiny_json() {
  return Json::parse(R"({
    "experiment": "k_scaling",
    "id": "tiny",
    "generators": ["energy", "swd"],
    "conditionings": ["stc", "onehot"],
    "K": [2],
    "seeds": [0, 1],
    "metrics": ["energy", "mmd_rbf"],
    "sizes": {"n_sets": 8, "set_size": 12, "batch_pairs": 2, "subsample": 6, "epochs": 1,
              "hidden": 6, "latent": 3, "eval_pairs": 2, "ood_grid": 2}
  })");
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dct-unit-" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("enum names round trip") {
  for (auto k : {ExperimentKind::k_scaling, ExperimentKind::semisup_curve, ExperimentKind::fig2_grid,
                 ExperimentKind::alignment_table, ExperimentKind::clt_report})
    CHECK(parse_experiment(to_string(k)) == k);
  for (auto s : {Scale::desk, Scale::paper}) CHECK(parse_scale(to_string(s)) == s);
  for (auto f : {Family::mvn, Family::gmm}) CHECK(parse_family(to_string(f)) == f);
  for (auto g : {GeneratorKind::swd, GeneratorKind::energy, GeneratorKind::fm,
                 GeneratorKind::stochastic_energy})
    CHECK(parse_generator(to_string(g)) == g);
  CHECK_THROWS(parse_scale("huge"));
  CHECK_THROWS(parse_generator("gan"));
}

TEST_CASE("scale presets") {
  const ScaleSizes paper = preset_sizes(Scale::paper, Family::mvn);
  CHECK(paper.n_sets == 50000);
  CHECK(paper.batch_pairs == 256);
  CHECK(paper.epochs == 200);
  CHECK(paper.learning_rate == 2e-4);
  CHECK(paper.set_size == 100);
  CHECK(paper.align_pairs == 20);
  CHECK(paper.align_n == 200);
  CHECK(paper.align_perm == 50);
  const ScaleSizes gmm = preset_sizes(Scale::paper, Family::gmm);
  CHECK(gmm.set_size == 1000);
  CHECK(gmm.hidden == 256);
  const ScaleSizes desk = preset_sizes(Scale::desk, Family::mvn);
  CHECK(desk.n_sets < paper.n_sets);
  CHECK(desk.epochs < paper.epochs);
}

TEST_CASE("config parsing") {
  const ExperimentConfig c = ExperimentConfig::from_json(tiny_json());
  CHECK(c.kind == ExperimentKind::k_scaling);
  CHECK(c.id == "tiny");
  CHECK(c.generators.size() == 2);
  CHECK(c.K_values == std::vector<std::size_t>{2});
  CHECK(c.sizes.n_sets == 8);
  // Unspecified sizes come from the preset.
  CHECK(c.sizes.align_pairs == preset_sizes(Scale::desk, Family::mvn).align_pairs);
  // Round trip through JSON, and through a manifest wrapper.
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  Json manifest;
  manifest["format"] = "dct-manifest/1";
  manifest["config"] = c.to_json();
  CHECK(ExperimentConfig::from_json(manifest).to_json() == c.to_json());
  // Kind defaults fill the grid.
  const ExperimentConfig d = ExperimentConfig::from_json(Json::parse(R"({"experiment":"k_scaling"})"));
  CHECK(d.generators.size() == 3);
  CHECK(d.conditionings.size() == 2);
  CHECK_FALSE(d.metrics.empty());
  const ExperimentConfig p = ExperimentConfig::from_json(Json::parse(R"({"experiment":"k_scaling"})"), Scale::paper);
  CHECK(p.K_values == std::vector<std::size_t>{10, 100, 1000, 10000});
}

TEST_CASE("config validation") {
  Json j = tiny_json();
  j["colour"] = "blue";
  CHECK_THROWS(ExperimentConfig::from_json(j));
  j = tiny_json();
  j["sizes"]["nsets"] = 3;
  CHECK_THROWS(ExperimentConfig::from_json(j));
  j = tiny_json();
  j["K"] = Json::array({100});  // larger than n_sets
  CHECK_THROWS(ExperimentConfig::from_json(j));
  j = tiny_json();
  j["generators"] = Json::array({"gan"});
  CHECK_THROWS(ExperimentConfig::from_json(j));
  j = tiny_json();
  j["seeds"] = Json::array();
  CHECK_THROWS(ExperimentConfig::from_json(j));
  CHECK_THROWS(ExperimentConfig::from_json(Json::parse(R"({"id":"x"})")));
}

TEST_CASE("model plan is deduplicated and stable") {
  const ExperimentConfig c = ExperimentConfig::from_json(tiny_json());
  const auto jobs = plan_models(c);
  // 2 generators x 2 conditionings x 1 K x 2 seeds.
  CHECK(jobs.size() == 8);
  std::set<std::string> stems;
  for (const auto& j : jobs) stems.insert(j.file_stem());
  CHECK(stems.size() == jobs.size());
  const auto again = plan_models(c);
  for (std::size_t i = 0; i < jobs.size(); ++i) CHECK(again[i].file_stem() == jobs[i].file_stem());
}

TEST_CASE("parallel_for visits every index and captures failures") {
  std::vector<std::atomic<int>> hits(50);
  const auto errors = parallel_for(50, 4, [&](std::size_t i) {
    hits[i].fetch_add(1);
    if (i == 7) throw std::runtime_error("boom");
  });
  for (const auto& h : hits) CHECK(h.load() == 1);
  REQUIRE(errors.size() == 50);
  for (std::size_t i = 0; i < errors.size(); ++i)
    CHECK(errors[i].empty() == (i != 7));
  CHECK(errors[7].find("boom") != std::string::npos);
  CHECK(parallel_for(0, 3, [](std::size_t) {}).empty());
}

TEST_CASE("tiny run writes all artifacts and is worker-count invariant") {
  const ExperimentConfig c = ExperimentConfig::from_json(tiny_json());
  RunOptions a;
  a.out = fresh_dir("run-a");
  a.workers = 1;
  RunOptions b;
  b.out = fresh_dir("run-b");
  b.workers = 3;
  const RunSummary ra = run_experiment(c, a);
  const RunSummary rb = run_experiment(c, b);
  CHECK(ra.failures == 0);
  CHECK(rb.failures == 0);
  CHECK_FALSE(ra.rows.empty());
  CHECK(read_file(a.out / "metrics.csv") == read_file(b.out / "metrics.csv"));
  CHECK(fs::exists(a.out / "manifest.json"));
  const Json m = Json::parse(read_file(a.out / "manifest.json"));
  CHECK(m.at("format") == "dct-manifest/1");
  CHECK(m.at("models").size() == plan_models(c).size());
  for (const auto& job : plan_models(c)) {
    CHECK(fs::exists(a.out / "models" / (job.file_stem() + ".bin")));
    CHECK(fs::exists(a.out / "logs" / (job.file_stem() + ".jsonl")));
    CHECK(read_file(a.out / "models" / (job.file_stem() + ".bin")) ==
          read_file(b.out / "models" / (job.file_stem() + ".bin")));
  }
  // A second run reuses the stored models and reproduces the metrics.
  const std::string first = read_file(a.out / "metrics.csv");
  run_experiment(ExperimentConfig::from_json(m), a);
  CHECK(read_file(a.out / "metrics.csv") == first);
  for (const auto& r : ra.rows) {
    CHECK(r.experiment == "tiny");
    CHECK((r.split == "IID" || r.split == "OOD"));
    CHECK(std::isfinite(r.value));
  }
}
