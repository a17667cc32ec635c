#include "experiments.hpp"

#include "lcnet/constructions.hpp"
#include "lcnet/holdout.hpp"
#include "lcnet/lme.hpp"
#include "lcnet/parallel.hpp"
#include "lcnet/serialize.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

namespace lcnet::bench {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void bench_error(const std::string& what) {
  throw std::runtime_error("lcnet::bench: " + what);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) bench_error("cannot create directory " + dir);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) bench_error("cannot write " + path);
  return out;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

DatasetSpec dataset_from_json(const json& j) {
  DatasetSpec d;
  d.generator = j.value("generator", "");
  d.tasks = j.value("tasks", 0);
  d.n_train = j.value("train", 0L);
  d.n_test = j.value("test", 0L);
  d.sigma = j.value("sigma", -1.0);
  d.csv_path = j.value("csv", "");
  d.schema_path = j.value("schema", "");
  d.test_csv_path = j.value("test_csv", "");
  d.test_fraction = j.value("test_fraction", 0.25);
  return d;
}

json dataset_to_json(const DatasetSpec& d) {
  return json{{"generator", d.generator}, {"tasks", d.tasks},     {"train", d.n_train},
              {"test", d.n_test},         {"sigma", d.sigma},     {"csv", d.csv_path},
              {"schema", d.schema_path},  {"test_csv", d.test_csv_path},
              {"test_fraction", d.test_fraction}};
}

TrainSpec train_from_json(const json& j, TrainSpec base) {
  base.peak_lr = j.value("peak_lr", base.peak_lr);
  base.momentum = j.value("momentum", base.momentum);
  base.lambda_alpha = j.value("lambda_alpha", base.lambda_alpha);
  base.lambda_beta = j.value("lambda_beta", base.lambda_beta);
  base.epochs = j.value("epochs", base.epochs);
  base.batches = j.value("batches", base.batches);
  base.hidden = j.value("hidden", base.hidden);
  base.blocks = j.value("blocks", base.blocks);
  base.d_beta = j.value("d_beta", base.d_beta);
  return base;
}

json train_to_json(const TrainSpec& t) {
  return json{{"peak_lr", t.peak_lr},   {"momentum", t.momentum},
              {"lambda_alpha", t.lambda_alpha}, {"lambda_beta", t.lambda_beta},
              {"epochs", t.epochs},     {"batches", t.batches},
              {"hidden", t.hidden},     {"blocks", t.blocks},
              {"d_beta", t.d_beta}};
}

TrainConfig to_train_config(const TrainSpec& spec, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.peak_lr = spec.peak_lr;
  cfg.momentum = spec.momentum;
  cfg.lambda_alpha = spec.lambda_alpha;
  cfg.lambda_beta = spec.lambda_beta;
  cfg.max_epochs = spec.epochs;
  cfg.batches_per_epoch = spec.batches;
  cfg.seed = seed;
  return cfg;
}

double response_std_of(const MultiTaskDataset& data) {
  const double mean = data.y.mean();
  return std::sqrt((data.y.array() - mean).square().sum() / double(data.size()));
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
  const json j = json::parse(text);
  ExperimentConfig c;
  c.experiment = j.value("experiment", "base");
  if (j.contains("dataset")) c.dataset = dataset_from_json(j.at("dataset"));
  if (j.contains("models")) c.models = j.at("models").get<std::vector<std::string>>();
  if (j.contains("train")) c.train = train_from_json(j.at("train"), c.train);
  c.use_hpo = j.value("hpo", c.use_hpo);
  c.hidden_cap = j.value("hidden_cap", c.hidden_cap);
  c.repeats = j.value("repeats", c.repeats);
  if (j.contains("fractions")) c.fractions = j.at("fractions").get<std::vector<double>>();
  if (j.contains("dims")) c.dims = j.at("dims").get<std::vector<int>>();
  if (j.contains("holdout_fractions"))
    c.holdout_fractions = j.at("holdout_fractions").get<std::vector<double>>();
  c.holdout_groups = j.value("holdout_groups", c.holdout_groups);
  c.scan_points = j.value("scan_points", c.scan_points);
  c.scan_grid = j.value("scan_grid", c.scan_grid);
  c.jobs = j.value("jobs", c.jobs);
  c.paper_scale = j.value("paper_scale", c.paper_scale);
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) bench_error("cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json_text(text);
}

void save_config_snapshot(const ExperimentConfig& c, const std::string& path) {
  json j{{"experiment", c.experiment},
         {"dataset", dataset_to_json(c.dataset)},
         {"models", c.models},
         {"train", train_to_json(c.train)},
         {"hpo", c.use_hpo},
         {"hidden_cap", c.hidden_cap},
         {"repeats", c.repeats},
         {"fractions", c.fractions},
         {"dims", c.dims},
         {"holdout_fractions", c.holdout_fractions},
         {"holdout_groups", c.holdout_groups},
         {"scan_points", c.scan_points},
         {"scan_grid", c.scan_grid},
         {"jobs", c.jobs},
         {"paper_scale", c.paper_scale},
         {"seed", c.seed},
         {"out_dir", c.out_dir},
         {"validation_split", "80/20 stratified per task"}};
  open_out(path) << j.dump(2) << "\n";
}

void apply_scale_defaults(ExperimentConfig& config, long n_train) {
  if (!config.paper_scale) return;
  if (n_train < 100000) {
    config.train.epochs = 10000;
    config.train.batches = 2;
  } else {
    config.train.epochs = 1000;
    config.train.batches = 20;
  }
  config.hidden_cap = 500;
}

PreparedData prepare_data(const DatasetSpec& spec, std::uint64_t seed) {
  PreparedData out;
  if (spec.generator == "frequency") {
    const int tasks = spec.tasks > 0 ? spec.tasks : 250;
    const long ntr = spec.n_train > 0 ? spec.n_train : 30000;
    const long nte = spec.n_test > 0 ? spec.n_test : 25000;
    const double sigma = spec.sigma >= 0 ? spec.sigma : 0.1;
    auto data = gen_frequency(tasks, ntr, nte, sigma, seed);
    out.train_raw = std::move(data.train);
    out.test_raw = std::move(data.test);
    out.frequency_params = std::move(data.params);
  } else if (spec.generator == "sineline") {
    const int tasks = spec.tasks > 0 ? spec.tasks : 100;
    const long ntr = spec.n_train > 0 ? spec.n_train : 6000;
    const long nte = spec.n_test > 0 ? spec.n_test : 10000;
    const double sigma = spec.sigma >= 0 ? spec.sigma : 0.3;
    auto data = gen_sine_line(tasks, ntr, nte, sigma, seed);
    out.train_raw = std::move(data.train);
    out.test_raw = std::move(data.test);
    out.sine_line_params = std::move(data.params);
  } else if (!spec.csv_path.empty()) {
    if (spec.schema_path.empty()) bench_error("csv dataset needs a schema");
    const CsvSchema schema = load_schema(spec.schema_path);
    const MultiTaskDataset all = load_csv(spec.csv_path, schema);
    if (!spec.test_csv_path.empty()) {
      out.train_raw = all;
      out.test_raw = load_csv(spec.test_csv_path, schema);
    } else {
      auto [train_part, test_part] = split_stratified(all, 1.0 - spec.test_fraction, seed ^ 0xfeed);
      out.train_raw = std::move(train_part);
      out.test_raw = std::move(test_part);
    }
  } else {
    bench_error("dataset spec needs a generator or a csv path");
  }
  out.scaler = fit_scaler(out.train_raw);
  out.train_scaled = apply_scaler(out.scaler, out.train_raw);
  out.response_std = response_std_of(out.train_raw);
  return out;
}

namespace {

ModelRun run_lme(const PreparedData& data) {
  ModelRun run;
  run.kind = "lme";
  const auto t0 = std::chrono::steady_clock::now();
  const LMEModel fit = lme_fit(data.train_scaled);
  // Predictions back in original units.
  MultiTaskDataset test_scaled = data.test_raw;
  test_scaled.x = scale_features(data.scaler, data.test_raw.x);
  Vector pred(test_scaled.size());
  for (long i = 0; i < test_scaled.size(); ++i)
    pred(i) = invert_target(data.scaler,
                            lme_predict(fit, test_scaled.x.col(i),
                                        test_scaled.task[static_cast<std::size_t>(i)]));
  run.test_rmse =
      std::sqrt((pred - data.test_raw.y).squaredNorm() / double(data.test_raw.size()));
  run.stop_reason = fit.converged ? "converged" : "max_iterations";
  run.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

}  // namespace

ModelRun run_model(const ExperimentConfig& config, const PreparedData& data,
                   const std::string& kind, std::uint64_t seed, const std::string& out_dir) {
  ModelRun run;
  run.kind = kind;
  run.resolved = config.train;

  if (kind == "lme") {
    run = run_lme(data);
    run.resolved = config.train;
    run.normalized_rmse = run.test_rmse / data.response_std;
    return run;
  }

  const ModelKind mk = model_kind_from_string(kind);
  const int m = data.train_raw.num_tasks;
  const int dx = data.train_raw.dim();

  TrainResult result;
  if (config.use_hpo) {
    HyperBox box = default_hyper_box(m, config.hidden_cap);
    TrainConfig base = to_train_config(config.train, seed);
    HpoResult hpo = hpo_search(data.train_scaled, mk, box, base, seed);
    result = std::move(hpo.final);
    run.resolved.peak_lr = hpo.best.train.peak_lr;
    run.resolved.lambda_alpha = hpo.best.train.lambda_alpha;
    run.resolved.lambda_beta = hpo.best.train.lambda_beta;
    run.resolved.hidden = hpo.best.hidden_dim;
    run.resolved.d_beta = hpo.best.d_beta;
    if (!out_dir.empty()) {
      save_trials_csv(box_for_kind(box, mk), hpo.trials, out_dir + "/trials_" + kind + ".csv");
      save_best_config_json(hpo, box_for_kind(box, mk), out_dir + "/best_config_" + kind + ".json");
    }
  } else {
    TrainConfig cfg = to_train_config(config.train, seed);
    auto factory = [&](std::uint64_t attempt) {
      return make_model(mk, dx, m, config.train.d_beta, config.train.hidden, config.train.blocks,
                        seed * 1000003ull + attempt);
    };
    result = train_with_retry(factory, data.train_scaled, cfg);
  }

  run.test_rmse = rmse_original_units(result.model, data.scaler, data.test_raw);
  run.normalized_rmse = run.test_rmse / data.response_std;
  run.retries = result.retries;
  run.diverged = result.diverged;
  run.stop_reason = to_string(result.stop);
  run.wall_seconds = result.wall_seconds;

  if (!out_dir.empty()) {
    save_loss_history_csv(result.history, out_dir + "/loss_history_" + kind + ".csv");
    save_model_bundle({result.model, data.scaler}, out_dir + "/model_" + kind + ".json");
  }
  return run;
}

namespace {

void write_results_csv(const std::vector<ModelRun>& runs, double denominator,
                       const std::string& path) {
  auto out = open_out(path);
  out << "model,test_rmse,normalized_rmse,normalization_denominator,retries,stop_reason\n";
  for (const auto& r : runs)
    out << r.kind << "," << num(r.test_rmse) << "," << num(r.normalized_rmse) << ","
        << num(denominator) << "," << r.retries << "," << r.stop_reason << "\n";
}

void write_diagnostics(const ExperimentConfig& config, const std::vector<ModelRun>& runs,
                       const std::string& path) {
  json models = json::array();
  for (const auto& r : runs)
    models.push_back({{"model", r.kind},
                      {"retries", r.retries},
                      {"diverged", r.diverged},
                      {"stop_reason", r.stop_reason},
                      {"wall_seconds", r.wall_seconds},
                      {"hyperparameters", train_to_json(r.resolved)}});
  json j{{"experiment", config.experiment}, {"seed", config.seed}, {"models", models}};
  open_out(path) << j.dump(2) << "\n";
}

}  // namespace

ExperimentOutcome run_base(const ExperimentConfig& config) {
  ensure_dir(config.out_dir);
  save_config_snapshot(config, config.out_dir + "/config_snapshot.json");
  const PreparedData data = prepare_data(config.dataset, config.seed);

  ExperimentOutcome outcome;
  outcome.runs.resize(config.models.size());
  parallel_for(static_cast<long>(config.models.size()), config.jobs, [&](long i) {
    outcome.runs[static_cast<std::size_t>(i)] =
        run_model(config, data, config.models[static_cast<std::size_t>(i)],
                  config.seed + 17 * static_cast<std::uint64_t>(i + 1), config.out_dir);
  });

  write_results_csv(outcome.runs, data.response_std, config.out_dir + "/results.csv");
  write_diagnostics(config, outcome.runs, config.out_dir + "/diagnostics.json");
  return outcome;
}

ExperimentOutcome run_repeat(const ExperimentConfig& config) {
  ensure_dir(config.out_dir);
  save_config_snapshot(config, config.out_dir + "/config_snapshot.json");
  const PreparedData data = prepare_data(config.dataset, config.seed);

  struct Cell {
    std::string kind;
    int repeat;
  };
  std::vector<Cell> cells;
  for (const auto& kind : config.models) {
    if (kind == "lme") continue;  // deterministic fit, nothing to repeat
    for (int r = 0; r < config.repeats; ++r) cells.push_back({kind, r});
  }
  std::vector<ModelRun> runs(cells.size());
  ExperimentConfig fixed = config;
  fixed.use_hpo = false;  // repeats reuse the provided hyperparameters
  parallel_for(static_cast<long>(cells.size()), config.jobs, [&](long i) {
    const auto& cell = cells[static_cast<std::size_t>(i)];
    runs[static_cast<std::size_t>(i)] =
        run_model(fixed, data, cell.kind,
                  config.seed + 1000ull * static_cast<std::uint64_t>(cell.repeat + 1), "");
  });

  // Relative values use the first learned-context run as the reference,
  // falling back to the first run overall.
  double reference = runs.empty() ? 1.0 : runs.front().test_rmse;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (cells[i].kind == "lc" && cells[i].repeat == 0) {
      reference = runs[i].test_rmse;
      break;
    }

  auto out = open_out(config.out_dir + "/results.csv");
  out << "model,min_rmse,max_rmse,min_relative,max_relative,max_over_min,divergent_runs\n";
  ExperimentOutcome outcome;
  for (const auto& kind : config.models) {
    if (kind == "lme") continue;
    double lo = 1e300, hi = 0.0;
    int divergences = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].kind != kind) continue;
      lo = std::min(lo, runs[i].test_rmse);
      hi = std::max(hi, runs[i].test_rmse);
      divergences += runs[i].retries;
      outcome.runs.push_back(runs[i]);
    }
    out << kind << "," << num(lo) << "," << num(hi) << "," << num(lo / reference) << ","
        << num(hi / reference) << "," << num(hi / lo) << "," << divergences << "\n";
  }
  write_diagnostics(config, outcome.runs, config.out_dir + "/diagnostics.json");
  return outcome;
}

ExperimentOutcome run_datasize(const ExperimentConfig& config) {
  ensure_dir(config.out_dir);
  save_config_snapshot(config, config.out_dir + "/config_snapshot.json");
  const PreparedData full = prepare_data(config.dataset, config.seed);

  auto out = open_out(config.out_dir + "/results.csv");
  out << "fraction,model,test_rmse,normalized_rmse,normalization_denominator,retries\n";
  ExperimentOutcome outcome;
  for (double fraction : config.fractions) {
    PreparedData data;
    data.test_raw = full.test_raw;  // test sets stay at full size
    data.train_raw = fraction >= 1.0
                         ? full.train_raw
                         : subsample_balanced(full.train_raw, fraction,
                                              config.seed ^ std::uint64_t(fraction * 1e6));
    data.scaler = fit_scaler(data.train_raw);
    data.train_scaled = apply_scaler(data.scaler, data.train_raw);
    data.response_std = full.response_std;  // Table-scale normalization constant

    // Same per-model seeds as run_base, so the 100% fraction reproduces it.
    std::vector<ModelRun> runs(config.models.size());
    parallel_for(static_cast<long>(config.models.size()), config.jobs, [&](long i) {
      runs[static_cast<std::size_t>(i)] =
          run_model(config, data, config.models[static_cast<std::size_t>(i)],
                    config.seed + 17 * static_cast<std::uint64_t>(i + 1), "");
    });
    for (const auto& r : runs) {
      out << num(fraction) << "," << r.kind << "," << num(r.test_rmse) << ","
          << num(r.normalized_rmse) << "," << num(data.response_std) << "," << r.retries << "\n";
      outcome.runs.push_back(r);
    }
  }
  write_diagnostics(config, outcome.runs, config.out_dir + "/diagnostics.json");
  return outcome;
}

ExperimentOutcome run_dbeta_sweep(const ExperimentConfig& config) {
  ensure_dir(config.out_dir);
  save_config_snapshot(config, config.out_dir + "/config_snapshot.json");
  const PreparedData data = prepare_data(config.dataset, config.seed);

  struct Cell {
    std::string kind;
    int dim;
  };
  std::vector<Cell> cells;
  for (int dim : config.dims)
    for (const std::string kind : {"lc", "ll"}) cells.push_back({kind, dim});
  std::vector<ModelRun> runs(cells.size());

  parallel_for(static_cast<long>(cells.size()), config.jobs, [&](long i) {
    const auto& cell = cells[static_cast<std::size_t>(i)];
    ExperimentConfig cfg = config;
    cfg.use_hpo = false;  // hyperparameters are copied, only d_beta varies
    cfg.train.d_beta = cell.dim;
    runs[static_cast<std::size_t>(i)] =
        run_model(cfg, data, cell.kind,
                  config.seed + 57 * static_cast<std::uint64_t>(cell.dim), "");
  });

  auto out = open_out(config.out_dir + "/dbeta_curve.csv");
  out << "d_beta,model,test_rmse,normalized_rmse,normalization_denominator,retries\n";
  ExperimentOutcome outcome;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out << cells[i].dim << "," << cells[i].kind << "," << num(runs[i].test_rmse) << ","
        << num(runs[i].normalized_rmse) << "," << num(data.response_std) << ","
        << runs[i].retries << "\n";
    outcome.runs.push_back(runs[i]);
  }
  write_diagnostics(config, outcome.runs, config.out_dir + "/diagnostics.json");
  return outcome;
}

namespace {

struct TaskFitRecord {
  int task_id = 0;
  Vector beta_hat;
  double objective = 0.0;
  int evaluations = 0;
  double test_rmse = 0.0;
};

struct FoldResult {
  double base_rmse = 0.0;  // base model on base-group test rows, original units
  std::vector<double> mean_normalized;  // per fraction
  std::vector<TaskFitRecord> full_data_fits;
};

FoldResult run_holdout_fold(const ExperimentConfig& config, const PreparedData& full,
                            const std::vector<int>& holdout_ids, int d_beta,
                            std::uint64_t seed) {
  std::vector<int> base_ids;
  std::vector<char> is_holdout(static_cast<std::size_t>(full.train_raw.num_tasks) + 1, 0);
  for (int j : holdout_ids) is_holdout[static_cast<std::size_t>(j)] = 1;
  for (int j = 1; j <= full.train_raw.num_tasks; ++j)
    if (!is_holdout[static_cast<std::size_t>(j)]) base_ids.push_back(j);

  // Train the shared network on the base group only.
  const MultiTaskDataset base_train_raw = select_tasks(full.train_raw, base_ids);
  const MultiTaskDataset base_test_raw = select_tasks(full.test_raw, base_ids);
  const Scaler scaler = fit_scaler(base_train_raw);
  const MultiTaskDataset base_train = apply_scaler(scaler, base_train_raw);
  const MultiTaskDataset base_test = apply_scaler(scaler, base_test_raw);

  TrainConfig cfg = to_train_config(config.train, seed);
  auto factory = [&](std::uint64_t attempt) {
    return make_model(ModelKind::LearnedContext, full.train_raw.dim(), base_train.num_tasks,
                      d_beta, config.train.hidden, config.train.blocks, seed * 31 + attempt);
  };
  TrainResult trained = train_with_retry(factory, base_train, cfg);
  const MultiTaskModel& model = trained.model;

  FoldResult fold;
  fold.base_rmse = rmse_original_units(model, scaler, base_test_raw);

  // Prior from the spread of trained task parameters; scale from the base
  // model's held-out residuals (scaled space).
  const Vector base_resid = predict_dataset(model, base_test) - base_test.y;
  const HoldoutPrior prior = estimate_prior(model.tasks.beta, base_resid);

  fold.mean_normalized.assign(config.holdout_fractions.size(), 0.0);

  std::vector<std::vector<double>> per_task(config.holdout_fractions.size());
  for (std::size_t f = 0; f < config.holdout_fractions.size(); ++f)
    per_task[f].resize(holdout_ids.size());
  fold.full_data_fits.resize(holdout_ids.size());

  parallel_for(static_cast<long>(holdout_ids.size()), config.jobs, [&](long t) {
    const int task_id = holdout_ids[static_cast<std::size_t>(t)];
    const MultiTaskDataset task_train_raw = select_tasks(full.train_raw, {task_id});
    const MultiTaskDataset task_test_raw = select_tasks(full.test_raw, {task_id});
    const Matrix test_x = scale_features(scaler, task_test_raw.x);

    for (std::size_t f = 0; f < config.holdout_fractions.size(); ++f) {
      const double fraction = config.holdout_fractions[f];
      MultiTaskDataset subset = task_train_raw;
      if (fraction < 1.0)
        subset = subsample_balanced(task_train_raw, fraction,
                                    seed + 7919ull * static_cast<std::uint64_t>(task_id) +
                                        static_cast<std::uint64_t>(f));
      Matrix train_x = scale_features(scaler, subset.x);
      Vector train_y(subset.size());
      for (long i = 0; i < subset.size(); ++i)
        train_y(i) = scale_target(scaler, subset.y(i));

      const HoldoutFit fit = fit_holdout_task(model, train_x, train_y, prior, model.tasks.beta,
                                              25, seed + static_cast<std::uint64_t>(task_id));
      const Vector pred_scaled = predict_with_beta(model, test_x, fit.beta_hat);
      const Vector pred = invert_targets(scaler, pred_scaled);
      const double task_rmse =
          std::sqrt((pred - task_test_raw.y).squaredNorm() / double(task_test_raw.size()));
      per_task[f][static_cast<std::size_t>(t)] = task_rmse / fold.base_rmse;
      if (fraction >= 1.0)
        fold.full_data_fits[static_cast<std::size_t>(t)] =
            {task_id, fit.beta_hat, fit.objective, fit.evaluations, task_rmse};
    }
  });

  for (std::size_t f = 0; f < config.holdout_fractions.size(); ++f) {
    double sum = 0.0;
    for (double v : per_task[f]) sum += v;
    fold.mean_normalized[f] = sum / double(per_task[f].size());
  }
  return fold;
}

}  // namespace

ExperimentOutcome run_holdout(const ExperimentConfig& config) {
  ensure_dir(config.out_dir);
  save_config_snapshot(config, config.out_dir + "/config_snapshot.json");
  const PreparedData full = prepare_data(config.dataset, config.seed);

  const auto groups =
      rotate_task_groups(full.train_raw.num_tasks, config.holdout_groups, config.seed ^ 0xab1e);

  auto out = open_out(config.out_dir + "/holdout_grid.csv");
  out << "d_beta,fraction,mean_normalized_rmse,base_rmse_denominator\n";
  ExperimentOutcome outcome;
  json all_fits = json::array();

  for (int d_beta : config.dims) {
    std::vector<double> mean_over_folds(config.holdout_fractions.size(), 0.0);
    double base_mean = 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const FoldResult fold = run_holdout_fold(
          config, full, groups[g], d_beta,
          config.seed + 101ull * static_cast<std::uint64_t>(g + 1) +
              static_cast<std::uint64_t>(d_beta));
      for (std::size_t f = 0; f < config.holdout_fractions.size(); ++f)
        mean_over_folds[f] += fold.mean_normalized[f] / double(groups.size());
      base_mean += fold.base_rmse / double(groups.size());
      for (const auto& fit : fold.full_data_fits) {
        json beta = json::array();
        for (long i = 0; i < fit.beta_hat.size(); ++i) beta.push_back(fit.beta_hat(i));
        all_fits.push_back({{"d_beta", d_beta},
                            {"fold", g},
                            {"task", fit.task_id},
                            {"beta_hat", beta},
                            {"objective", fit.objective},
                            {"evaluations", fit.evaluations},
                            {"test_rmse", fit.test_rmse}});
      }
    }
    for (std::size_t f = 0; f < config.holdout_fractions.size(); ++f) {
      out << d_beta << "," << num(config.holdout_fractions[f]) << "," << num(mean_over_folds[f])
          << "," << num(base_mean) << "\n";
      ModelRun r;
      r.kind = "lc-holdout-d" + std::to_string(d_beta);
      r.test_rmse = mean_over_folds[f] * base_mean;
      r.normalized_rmse = mean_over_folds[f];
      outcome.runs.push_back(r);
    }
  }
  open_out(config.out_dir + "/holdout_fits.json") << all_fits.dump(2) << "\n";
  write_diagnostics(config, outcome.runs, config.out_dir + "/diagnostics.json");
  return outcome;
}

ExperimentOutcome run_scan(const ExperimentConfig& config) {
  ensure_dir(config.out_dir);
  save_config_snapshot(config, config.out_dir + "/config_snapshot.json");
  if (config.dataset.generator != "frequency")
    bench_error("the likelihood scan experiment uses the frequency generator");

  const PreparedData data = prepare_data(config.dataset, config.seed);

  // Scalar-context model so the scan is one-dimensional.
  ExperimentConfig cfg = config;
  cfg.train.d_beta = 1;
  TrainConfig tc = to_train_config(cfg.train, config.seed);
  auto factory = [&](std::uint64_t attempt) {
    return make_model(ModelKind::LearnedContext, 1, data.train_raw.num_tasks, 1,
                      cfg.train.hidden, cfg.train.blocks, config.seed * 77 + attempt);
  };
  const TrainResult trained = train_with_retry(factory, data.train_scaled, tc);
  const MultiTaskModel& model = trained.model;

  MultiTaskDataset test_scaled = apply_scaler(data.scaler, data.test_raw);
  const Vector resid = predict_dataset(model, test_scaled) - test_scaled.y;
  const HoldoutPrior prior = estimate_prior(model.tasks.beta, resid);

  // Hypothetical new task, omega = 1.5, with a handful of points.
  const double omega = 1.5;
  std::mt19937_64 rng(config.seed ^ 0x5ca);
  std::uniform_real_distribution<double> ux(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, data.frequency_params->sigma);
  Matrix xs(1, config.scan_points);
  Vector ys(config.scan_points);
  for (int i = 0; i < config.scan_points; ++i) {
    const double x = ux(rng);
    xs(0, i) = (x - data.scaler.feature_mean(0)) / data.scaler.feature_std(0);
    ys(i) = scale_target(data.scaler, frequency_truth(omega, x) + noise(rng));
  }

  const double lo = model.tasks.beta.minCoeff();
  const double hi = model.tasks.beta.maxCoeff();
  const double pad = 0.5 * (hi - lo);
  const auto grid = scan_grid_1d(lo - pad, hi + pad, config.scan_grid);

  ExperimentOutcome outcome;
  for (int k = 0; k <= config.scan_points; ++k) {
    const auto scan =
        likelihood_scan(model, xs.leftCols(k), ys.head(k), prior, grid, true);
    save_scan_csv(scan, config.out_dir + "/scan_" + std::to_string(k) + "points.csv");
  }
  save_model_bundle({model, data.scaler}, config.out_dir + "/model_lc.json");
  json j{{"omega", omega},
         {"points", config.scan_points},
         {"beta_box", {lo - pad, hi + pad}},
         {"train_stop", to_string(trained.stop)}};
  open_out(config.out_dir + "/diagnostics.json") << j.dump(2) << "\n";
  return outcome;
}

ExperimentOutcome run_construct_verify(const ExperimentConfig& config) {
  ensure_dir(config.out_dir);
  save_config_snapshot(config, config.out_dir + "/config_snapshot.json");

  struct Check {
    std::string name;
    double deviation = 0.0;
    double tolerance = 0.0;
    bool pass = false;
  };
  std::vector<Check> checks;

  auto eval2 = [](const ParamSet& p, double x, double beta) {
    Vector z(2);
    z << x, beta;
    return forward_scalar(p, z);
  };

  {
    Check c{.name = "pyramid_anchor_points", .tolerance = 1e-12};
    const ParamSet p = build_pyramid({PyramidContext::Zero});
    const double xs[] = {0.0, 0.5, 1.0, 1.5, 2.0};
    const double ys[] = {0.0, 1.0, 0.0, 1.0, 0.0};
    for (int i = 0; i < 5; ++i)
      c.deviation = std::max(c.deviation, std::abs(eval2(p, xs[i], 0.0) - ys[i]));
    c.pass = c.deviation <= c.tolerance;
    checks.push_back(c);
  }
  {
    Check c{.name = "pyramid_translation_identity", .tolerance = 1e-12};
    const ParamSet p = build_pyramid({PyramidContext::Translation});
    for (double beta : {-0.5, -0.2, 0.3, 0.5})
      for (int i = 0; i <= 100; ++i) {
        const double x = -1.0 + 4.0 * i / 100.0;
        c.deviation = std::max(c.deviation, std::abs(eval2(p, x, beta) - eval2(p, x + beta, 0.0)));
      }
    c.pass = c.deviation <= c.tolerance;
    checks.push_back(c);
  }
  {
    Check c{.name = "pyramid_dilation_identity", .tolerance = 1e-12};
    const ParamSet p = build_pyramid({PyramidContext::Dilation});
    for (double beta : {-0.6, -0.25, 0.4, 0.9})
      for (int i = 0; i <= 100; ++i) {
        const double x = -0.5 + 3.0 * i / 100.0;
        c.deviation = std::max(
            c.deviation, std::abs(eval2(p, (1 + beta) * x, beta) - (1 + beta) * eval2(p, x, 0.0)));
      }
    c.pass = c.deviation <= c.tolerance;
    checks.push_back(c);
  }
  {
    Check c{.name = "selector_one_hot_integer_beta", .tolerance = 0.0};
    const SelectorEncoder enc = build_selector({.num_tasks = 6, .delta = 0.25, .x_dim = 0});
    for (int j = 1; j <= 6; ++j) {
      const Vector chat = selector_triangles(enc, double(j));
      for (int k = 1; k <= 6; ++k)
        c.deviation = std::max(c.deviation, std::abs(chat(k - 1) - (k == j ? 1.0 : 0.0)));
    }
    c.pass = c.deviation <= c.tolerance;
    checks.push_back(c);
  }
  {
    Check c{.name = "selector_composition_100_inputs", .tolerance = 1e-12};
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> g(0.0, 1.0);
    NetShape cs_shape{.input_dim = 3 + 4, .hidden_dim = 12, .residual_blocks = 1, .output_dim = 1,
                      .residual_skips = false};
    ParamSet cs = zero_params(cs_shape);
    for (auto& w : cs.weights)
      for (long i = 0; i < w.size(); ++i) w.data()[i] = 0.5 * g(rng);
    for (auto& b : cs.biases)
      for (long i = 0; i < b.size(); ++i) b.data()[i] = 0.3 * g(rng);
    const SelectorEncoder enc = build_selector({.num_tasks = 4, .delta = 0.25, .x_dim = 3});
    Matrix xs(3, 100);
    for (long i = 0; i < xs.size(); ++i) xs.data()[i] = 1.5 * g(rng);
    c.deviation = verify_selector_composition(enc, cs, xs);
    c.pass = c.deviation <= c.tolerance;
    checks.push_back(c);

    // A deliberate 1e-3 perturbation of the emitted artifact must be caught.
    Check sensitivity{.name = "perturbation_sensitivity", .tolerance = 0.0};
    ParamSet broken = compose_selector_cs(enc, cs);
    broken.weights[2].row(0).array() += 1e-3;
    const double dev = composed_vs_direct_deviation(enc, cs, broken, xs);
    sensitivity.deviation = dev;
    sensitivity.pass = dev >= 1e-4;  // detected
    checks.push_back(sensitivity);
  }

  json report = json::array();
  bool all_pass = true;
  for (const auto& c : checks) {
    report.push_back({{"check", c.name},
                      {"max_deviation", c.deviation},
                      {"tolerance", c.tolerance},
                      {"pass", c.pass}});
    std::printf("[%s] %s max_deviation=%.3e tolerance=%.3e\n", c.pass ? "PASS" : "FAIL",
                c.name.c_str(), c.deviation, c.tolerance);
    all_pass = all_pass && c.pass;
  }
  open_out(config.out_dir + "/construct_report.json") << report.dump(2) << "\n";

  ExperimentOutcome outcome;
  outcome.exit_code = all_pass ? 0 : 1;
  return outcome;
}

ExperimentOutcome run_experiment(const ExperimentConfig& config) {
  if (config.experiment == "base") return run_base(config);
  if (config.experiment == "repeat") return run_repeat(config);
  if (config.experiment == "datasize") return run_datasize(config);
  if (config.experiment == "dbeta") return run_dbeta_sweep(config);
  if (config.experiment == "holdout") return run_holdout(config);
  if (config.experiment == "scan") return run_scan(config);
  if (config.experiment == "construct") return run_construct_verify(config);
  bench_error("unknown experiment '" + config.experiment + "'");
}

}  // namespace lcnet::bench
