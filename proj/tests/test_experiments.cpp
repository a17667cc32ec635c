#include "experiments.hpp"

#include "lcnet/lme.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lcnet;
using namespace lcnet::bench;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  std::string path;
  explicit TempDir(const std::string& name) : path("/tmp/lcnet_exp_" + name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny_frequency_config(const std::string& out) {
  ExperimentConfig c;
  c.experiment = "base";
  c.dataset.generator = "frequency";
  c.dataset.tasks = 8;
  c.dataset.n_train = 480;
  c.dataset.n_test = 240;
  c.dataset.sigma = 0.1;
  c.models = {"lc", "lme"};
  c.train.peak_lr = 0.02;
  c.train.epochs = 80;
  c.train.batches = 2;
  c.train.hidden = 16;
  c.train.blocks = 2;
  c.train.d_beta = 2;
  c.use_hpo = false;
  c.seed = 5;
  c.out_dir = out;
  return c;
}

}  // namespace

TEST_CASE("config json round trip with overrides") {
  const std::string text = R"({
    "experiment": "datasize",
    "dataset": {"generator": "sineline", "tasks": 10, "train": 500, "test": 200, "sigma": 0.2},
    "models": ["lc", "ll"],
    "train": {"peak_lr": 0.07, "epochs": 123, "hidden": 32, "d_beta": 3},
    "fractions": [1.0, 0.25],
    "seed": 42,
    "jobs": 2,
    "out_dir": "/tmp/somewhere"
  })";
  const ExperimentConfig c = config_from_json_text(text);
  CHECK(c.experiment == "datasize");
  CHECK(c.dataset.generator == "sineline");
  CHECK(c.dataset.tasks == 10);
  CHECK(c.models == std::vector<std::string>{"lc", "ll"});
  CHECK(c.train.peak_lr == 0.07);
  CHECK(c.train.epochs == 123);
  CHECK(c.train.d_beta == 3);
  CHECK(c.fractions == std::vector<double>{1.0, 0.25});
  CHECK(c.seed == 42);
  CHECK(c.jobs == 2);

  TempDir dir("snapshot");
  save_config_snapshot(c, dir.path + "/snap.json");
  const ExperimentConfig back = load_experiment_config(dir.path + "/snap.json");
  CHECK(back.dataset.tasks == c.dataset.tasks);
  CHECK(back.train.peak_lr == c.train.peak_lr);
  CHECK(back.fractions == c.fractions);
}

TEST_CASE("paper-scale defaults follow the dataset size") {
  ExperimentConfig c;
  c.paper_scale = true;
  apply_scale_defaults(c, 50000);
  CHECK(c.train.epochs == 10000);
  CHECK(c.train.batches == 2);
  apply_scale_defaults(c, 200000);
  CHECK(c.train.epochs == 1000);
  CHECK(c.train.batches == 20);
  ExperimentConfig desk;
  desk.paper_scale = false;
  const int epochs = desk.train.epochs;
  apply_scale_defaults(desk, 200000);
  CHECK(desk.train.epochs == epochs);
}

TEST_CASE("base experiment writes the full artifact set and is rerun-identical") {
  TempDir a("base_a"), b("base_b");
  ExperimentConfig ca = tiny_frequency_config(a.path);
  ExperimentConfig cb = tiny_frequency_config(b.path);

  const ExperimentOutcome ra = run_base(ca);
  const ExperimentOutcome rb = run_base(cb);
  REQUIRE(ra.runs.size() == 2);

  for (const char* f : {"/results.csv", "/config_snapshot.json", "/diagnostics.json",
                        "/loss_history_lc.csv", "/model_lc.json"})
    CHECK(fs::exists(a.path + f));

  // Bit-identical result tables on rerun from the same config.
  CHECK(slurp(a.path + "/results.csv") == slurp(b.path + "/results.csv"));
  CHECK(slurp(a.path + "/loss_history_lc.csv") == slurp(b.path + "/loss_history_lc.csv"));
  CHECK(slurp(a.path + "/model_lc.json") == slurp(b.path + "/model_lc.json"));

  // Normalization bookkeeping: normalized * denominator = raw.
  for (const auto& r : ra.runs) {
    const PreparedData data = prepare_data(ca.dataset, ca.seed);
    CHECK(std::abs(r.normalized_rmse * data.response_std - r.test_rmse) <= 1e-12);
  }
}

TEST_CASE("single-task dataset: the LME column equals plain OLS") {
  ExperimentConfig c = tiny_frequency_config("/tmp/lcnet_exp_lme1");
  TempDir dir("lme1");
  c.out_dir = dir.path;
  c.dataset.tasks = 1;
  c.dataset.n_train = 160;
  c.dataset.n_test = 80;
  c.models = {"lme"};
  const ExperimentOutcome out = run_base(c);
  REQUIRE(out.runs.size() == 1);

  const PreparedData data = prepare_data(c.dataset, c.seed);
  const LMEModel direct = lme_fit(data.train_scaled);
  CHECK(direct.sigma_beta2 == 0.0);
  MultiTaskDataset test_scaled = data.test_raw;
  test_scaled.x = scale_features(data.scaler, data.test_raw.x);
  Vector pred(test_scaled.size());
  for (long i = 0; i < test_scaled.size(); ++i)
    pred(i) = invert_target(data.scaler, lme_predict(direct, test_scaled.x.col(i), 1));
  const double want =
      std::sqrt((pred - data.test_raw.y).squaredNorm() / double(data.test_raw.size()));
  CHECK(out.runs[0].test_rmse == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("repeat experiment: deterministic report, parallel equals serial") {
  TempDir s("rep_serial"), p("rep_parallel");
  ExperimentConfig cs = tiny_frequency_config(s.path);
  cs.experiment = "repeat";
  cs.models = {"lc"};
  cs.repeats = 3;
  cs.jobs = 1;
  ExperimentConfig cp = cs;
  cp.out_dir = p.path;
  cp.jobs = 2;

  run_repeat(cs);
  run_repeat(cp);
  CHECK(slurp(s.path + "/results.csv") == slurp(p.path + "/results.csv"));

  const std::string table = slurp(s.path + "/results.csv");
  CHECK(table.find("model,min_rmse,max_rmse,min_relative,max_relative,max_over_min,divergent_runs") == 0);
  CHECK(table.find("lc,") != std::string::npos);
}

TEST_CASE("datasize experiment: full fraction reproduces base, counts halve") {
  TempDir base_dir("ds_base"), ds_dir("ds_frac");
  ExperimentConfig cb = tiny_frequency_config(base_dir.path);
  cb.models = {"lc"};
  const ExperimentOutcome base = run_base(cb);

  ExperimentConfig cd = tiny_frequency_config(ds_dir.path);
  cd.experiment = "datasize";
  cd.models = {"lc"};
  cd.fractions = {1.0, 0.5};
  const ExperimentOutcome sized = run_datasize(cd);
  REQUIRE(sized.runs.size() == 2);
  CHECK(sized.runs[0].test_rmse == base.runs[0].test_rmse);

  const PreparedData full = prepare_data(cd.dataset, cd.seed);
  const MultiTaskDataset half =
      subsample_balanced(full.train_raw, 0.5, cd.seed ^ std::uint64_t(0.5 * 1e6));
  const auto counts = half.task_counts();
  for (long n : counts) CHECK(n == 30);  // 60 per task at full size
}

TEST_CASE("dbeta sweep writes one row per (dim, kind)") {
  TempDir dir("dbeta");
  ExperimentConfig c = tiny_frequency_config(dir.path);
  c.experiment = "dbeta";
  c.dims = {1, 2};
  run_dbeta_sweep(c);
  const std::string table = slurp(dir.path + "/dbeta_curve.csv");
  CHECK(table.find("d_beta,model,") == 0);
  int rows = -1;  // header
  for (char ch : table)
    if (ch == '\n') ++rows;
  CHECK(rows == 4);  // {1,2} x {lc,ll}
}

TEST_CASE("holdout experiment produces the rotation grid") {
  TempDir dir("holdout");
  ExperimentConfig c = tiny_frequency_config(dir.path);
  c.experiment = "holdout";
  c.dataset.tasks = 9;
  c.dataset.n_train = 540;
  c.dataset.n_test = 270;
  c.train.epochs = 60;
  c.train.hidden = 12;
  c.dims = {1};
  c.holdout_fractions = {0.5, 1.0};
  c.holdout_groups = 3;
  const ExperimentOutcome out = run_holdout(c);
  CHECK(out.runs.size() == 2);  // one per fraction
  const std::string grid = slurp(dir.path + "/holdout_grid.csv");
  CHECK(grid.find("d_beta,fraction,mean_normalized_rmse,base_rmse_denominator") == 0);
  const std::string fits = slurp(dir.path + "/holdout_fits.json");
  CHECK(fits.find("beta_hat") != std::string::npos);
  CHECK(fits.find("evaluations") != std::string::npos);
  CHECK(fits.find("test_rmse") != std::string::npos);
  for (const auto& r : out.runs) {
    CHECK(std::isfinite(r.normalized_rmse));
    CHECK(r.normalized_rmse > 0.0);
  }
}

TEST_CASE("scan experiment emits normalized curves per point count") {
  TempDir dir("scan");
  ExperimentConfig c = tiny_frequency_config(dir.path);
  c.experiment = "scan";
  c.dataset.tasks = 10;
  c.dataset.n_train = 800;
  c.dataset.n_test = 300;
  c.train.epochs = 120;
  c.train.hidden = 16;
  c.scan_points = 2;
  c.scan_grid = 101;
  run_scan(c);
  for (int k = 0; k <= 2; ++k) {
    const std::string curve = slurp(dir.path + "/scan_" + std::to_string(k) + "points.csv");
    CHECK(curve.find("beta1,density") == 0);
    // Normalized to unit maximum.
    double maxd = 0.0;
    std::stringstream ss(curve);
    std::string line;
    std::getline(ss, line);
    while (std::getline(ss, line)) {
      const auto comma = line.find(',');
      maxd = std::max(maxd, std::stod(line.substr(comma + 1)));
    }
    CHECK(maxd == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("construct verification exits zero and reports every check") {
  TempDir dir("construct");
  ExperimentConfig c;
  c.experiment = "construct";
  c.out_dir = dir.path;
  const ExperimentOutcome out = run_construct_verify(c);
  CHECK(out.exit_code == 0);
  const std::string report = slurp(dir.path + "/construct_report.json");
  for (const char* name :
       {"pyramid_anchor_points", "pyramid_translation_identity", "pyramid_dilation_identity",
        "selector_one_hot_integer_beta", "selector_composition_100_inputs",
        "perturbation_sensitivity"})
    CHECK(report.find(name) != std::string::npos);
  CHECK(report.find("tolerance") != std::string::npos);
}

TEST_CASE("csv pipeline: prepare from files with a held-out split") {
  TempDir dir("csvpipe");
  const auto gen = gen_sine_line(6, 300, 100, 0.2, 9);
  save_csv(gen.train, dir.path + "/data.csv");
  CsvSchema schema;
  schema.task_column = "task";
  schema.target_column = "y";
  schema.features = {{"x", false}};
  save_schema(schema, dir.path + "/schema.json");

  DatasetSpec spec;
  spec.csv_path = dir.path + "/data.csv";
  spec.schema_path = dir.path + "/schema.json";
  spec.test_fraction = 0.25;
  const PreparedData data = prepare_data(spec, 3);
  CHECK(data.train_raw.size() + data.test_raw.size() == 300);
  CHECK(data.train_raw.num_tasks == 6);
  CHECK(std::abs(data.train_scaled.y.mean()) <= 1e-9);
}
