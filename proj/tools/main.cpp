#include "experiments.hpp"

#include "lcnet/lme.hpp"
#include "lcnet/serialize.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

using namespace lcnet;
using namespace lcnet::bench;

namespace {

// Shared dataset/run flags; every subcommand accepts a JSON config plus
// command-line overrides.
struct CommonArgs {
  std::string config_path;
};

void add_common(CLI::App* cmd, CommonArgs& args, ExperimentConfig& config) {
  cmd->add_option("--config", args.config_path, "JSON experiment config");
  cmd->add_option("--out", config.out_dir, "output directory");
  cmd->add_option("--seed", config.seed, "master seed");
  cmd->add_option("--jobs", config.jobs, "worker threads for independent units");
  cmd->add_flag("--paper-scale", config.paper_scale,
                "use full-scale epoch/batch settings instead of desk scale");
  cmd->add_option("--dataset", config.dataset.generator, "generator: frequency | sineline");
  cmd->add_option("--csv", config.dataset.csv_path, "CSV dataset path");
  cmd->add_option("--schema", config.dataset.schema_path, "CSV schema (JSON)");
  cmd->add_option("--test-csv", config.dataset.test_csv_path, "separate test CSV");
  cmd->add_option("--tasks", config.dataset.tasks, "number of generated tasks");
  cmd->add_option("--train-points", config.dataset.n_train, "generated training points");
  cmd->add_option("--test-points", config.dataset.n_test, "generated test points");
  cmd->add_option("--sigma", config.dataset.sigma, "generator noise std");
  cmd->add_option("--models", config.models, "model kinds: lc cs ll lme");
  cmd->add_flag("--hpo,!--no-hpo", config.use_hpo, "run the hyperparameter search");
  cmd->add_option("--hidden-cap", config.hidden_cap, "hidden-size cap for the search box");
  cmd->add_option("--peak-lr", config.train.peak_lr, "peak learning rate");
  cmd->add_option("--epochs", config.train.epochs, "training epochs");
  cmd->add_option("--batches", config.train.batches, "batches per epoch");
  cmd->add_option("--hidden", config.train.hidden, "hidden layer width");
  cmd->add_option("--blocks", config.train.blocks, "residual blocks");
  cmd->add_option("--d-beta", config.train.d_beta, "task parameter dimension");
  cmd->add_option("--lambda-alpha", config.train.lambda_alpha, "shared L2 factor");
  cmd->add_option("--lambda-beta", config.train.lambda_beta, "task L2 factor");
  cmd->add_option("--momentum", config.train.momentum, "SGD momentum");
}

// Re-parses so explicit flags override values loaded from --config.
ExperimentConfig resolve_config(CLI::App* cmd, const CommonArgs& args,
                                const ExperimentConfig& flag_config,
                                const std::string& experiment) {
  ExperimentConfig config = flag_config;
  if (!args.config_path.empty()) {
    config = load_experiment_config(args.config_path);
    // Explicit flags win over values from the file.
    const ExperimentConfig& flags = flag_config;
    auto set = [&](const std::string& name) { return cmd->count(name) > 0; };
    if (set("--out")) config.out_dir = flags.out_dir;
    if (set("--seed")) config.seed = flags.seed;
    if (set("--jobs")) config.jobs = flags.jobs;
    if (set("--paper-scale")) config.paper_scale = flags.paper_scale;
    if (set("--dataset")) config.dataset.generator = flags.dataset.generator;
    if (set("--csv")) config.dataset.csv_path = flags.dataset.csv_path;
    if (set("--schema")) config.dataset.schema_path = flags.dataset.schema_path;
    if (set("--test-csv")) config.dataset.test_csv_path = flags.dataset.test_csv_path;
    if (set("--tasks")) config.dataset.tasks = flags.dataset.tasks;
    if (set("--train-points")) config.dataset.n_train = flags.dataset.n_train;
    if (set("--test-points")) config.dataset.n_test = flags.dataset.n_test;
    if (set("--sigma")) config.dataset.sigma = flags.dataset.sigma;
    if (set("--models")) config.models = flags.models;
    if (set("--hpo") || set("--no-hpo")) config.use_hpo = flags.use_hpo;
    if (set("--hidden-cap")) config.hidden_cap = flags.hidden_cap;
    if (set("--peak-lr")) config.train.peak_lr = flags.train.peak_lr;
    if (set("--epochs")) config.train.epochs = flags.train.epochs;
    if (set("--batches")) config.train.batches = flags.train.batches;
    if (set("--hidden")) config.train.hidden = flags.train.hidden;
    if (set("--blocks")) config.train.blocks = flags.train.blocks;
    if (set("--d-beta")) config.train.d_beta = flags.train.d_beta;
    if (set("--lambda-alpha")) config.train.lambda_alpha = flags.train.lambda_alpha;
    if (set("--lambda-beta")) config.train.lambda_beta = flags.train.lambda_beta;
    if (set("--momentum")) config.train.momentum = flags.train.momentum;
  }
  config.experiment = experiment;
  return config;
}

int run_generate(const ExperimentConfig& config) {
  std::filesystem::create_directories(config.out_dir);
  const PreparedData data = prepare_data(config.dataset, config.seed);
  save_csv(data.train_raw, config.out_dir + "/train.csv");
  save_csv(data.test_raw, config.out_dir + "/test.csv");
  CsvSchema schema;
  schema.task_column = "task";
  schema.target_column = "y";
  for (const auto& name : data.train_raw.feature_names) schema.features.push_back({name, false});
  save_schema(schema, config.out_dir + "/schema.json");

  nlohmann::json params;
  if (data.frequency_params) {
    params["generator"] = "frequency";
    params["sigma"] = data.frequency_params->sigma;
    params["omega"] = data.frequency_params->omega;
  } else if (data.sine_line_params) {
    params["generator"] = "sineline";
    params["sigma"] = data.sine_line_params->sigma;
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& t : data.sine_line_params->tasks)
      tasks.push_back({{"class", t.is_sine ? "sine" : "affine"},
                       {"a", t.a},
                       {"b", t.b},
                       {"c", t.c},
                       {"d", t.d}});
    params["tasks"] = tasks;
  }
  std::ofstream(config.out_dir + "/params.json") << params.dump(2) << "\n";
  std::printf("wrote %s/{train.csv,test.csv,schema.json,params.json}\n", config.out_dir.c_str());
  return 0;
}

int run_train_verb(ExperimentConfig config, const std::string& kind) {
  std::filesystem::create_directories(config.out_dir);
  apply_scale_defaults(config, config.dataset.n_train);
  const PreparedData data = prepare_data(config.dataset, config.seed);
  const ModelRun run = run_model(config, data, kind, config.seed, config.out_dir);
  std::printf("%s: test RMSE %.6g (normalized %.4g), stop=%s, retries=%d\n", kind.c_str(),
              run.test_rmse, run.normalized_rmse, run.stop_reason.c_str(), run.retries);
  std::ofstream(config.out_dir + "/results.csv")
      << "model,test_rmse,normalized_rmse,normalization_denominator,retries,stop_reason\n"
      << kind << "," << run.test_rmse << "," << run.normalized_rmse << "," << data.response_std
      << "," << run.retries << "," << run.stop_reason << "\n";
  return 0;
}

int run_evaluate(const std::string& bundle_path, const std::string& csv,
                 const std::string& schema_path, const std::string& out_dir) {
  const ModelBundle bundle = load_model_bundle(bundle_path);
  const CsvSchema schema = load_schema(schema_path);
  const MultiTaskDataset data = load_csv(csv, schema);
  const double value = rmse_original_units(bundle.model, bundle.scaler, data);
  std::printf("test RMSE: %.6g over %ld observations\n", value, data.size());
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream(out_dir + "/results.csv")
        << "model,test_rmse\n" << to_string(bundle.model.kind) << "," << value << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task regression benchmark harness (learned-context networks)"};
  app.require_subcommand(1);

  struct Sub {
    CLI::App* cmd = nullptr;
    CommonArgs args;
    ExperimentConfig flags;
  };
  std::map<std::string, Sub> subs;
  const std::vector<std::pair<std::string, std::string>> verbs = {
      {"generate", "write a synthetic dataset as CSV + schema"},
      {"train", "train one model and save the bundle"},
      {"hpo", "hyperparameter search, then train the final model"},
      {"base", "all models: search, final training, test RMSE table"},
      {"repeat", "repeated trainings with fixed hyperparameters"},
      {"datasize", "reduced-dataset comparison (100/50/10%)"},
      {"dbeta", "task-parameter-dimension sweep for lc and ll"},
      {"holdout", "hold-out task adaptation with group rotation"},
      {"scan", "task-parameter likelihood scan for a new task"},
      {"construct", "verify the exact constructed networks"},
      {"evaluate", "evaluate a saved model bundle on a CSV dataset"},
  };
  for (const auto& [name, help] : verbs) {
    Sub& sub = subs[name];
    sub.cmd = app.add_subcommand(name, help);
    if (name != "evaluate") add_common(sub.cmd, sub.args, sub.flags);
  }

  std::string train_kind = "lc";
  subs["train"].cmd->add_option("--model", train_kind, "lc | cs | ll | lme");
  std::string hpo_kind = "lc";
  subs["hpo"].cmd->add_option("--model", hpo_kind, "lc | cs | ll");

  std::string eval_bundle, eval_csv, eval_schema, eval_out;
  subs["evaluate"].cmd->add_option("--model", eval_bundle, "model bundle JSON")->required();
  subs["evaluate"].cmd->add_option("--csv", eval_csv, "dataset CSV")->required();
  subs["evaluate"].cmd->add_option("--schema", eval_schema, "schema JSON")->required();
  subs["evaluate"].cmd->add_option("--out", eval_out, "optional output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& [name, help] : verbs) {
      Sub& sub = subs[name];
      if (!sub.cmd->parsed()) continue;
      if (name == "evaluate") return run_evaluate(eval_bundle, eval_csv, eval_schema, eval_out);

      ExperimentConfig config = resolve_config(sub.cmd, sub.args, sub.flags, name);
      if (name == "generate") return run_generate(config);
      if (name == "train") {
        return run_train_verb(config, train_kind);
      }
      if (name == "hpo") {
        config.use_hpo = true;
        config.models = {hpo_kind};
        config.experiment = "base";
        apply_scale_defaults(config, config.dataset.n_train);
        return run_base(config).exit_code;
      }
      apply_scale_defaults(config, config.dataset.n_train);
      const ExperimentOutcome outcome = run_experiment(config);
      if (!outcome.runs.empty()) {
        std::printf("%-24s %12s %12s\n", "model", "rmse", "normalized");
        for (const auto& r : outcome.runs)
          std::printf("%-24s %12.6g %12.6g\n", r.kind.c_str(), r.test_rmse, r.normalized_rmse);
      }
      return outcome.exit_code;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
