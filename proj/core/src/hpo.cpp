#include "lcnet/hpo.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace lcnet {

namespace {

[[noreturn]] void hpo_error(const std::string& what) {
  throw std::runtime_error("lcnet::hpo: " + what);
}

}  // namespace

HyperBox default_hyper_box(int num_tasks, int hidden_cap) {
  HyperBox box;
  box.dims.push_back({"peak_lr", 1e-4, 1.5, true, false});
  box.dims.push_back({"hidden", 50, static_cast<double>(std::max(50, hidden_cap)), false, true});
  box.dims.push_back({"lambda_alpha", 1e-15, 1e-5, true, false});
  box.dims.push_back({"lambda_beta", 1e-15, 1e-3, true, false});
  box.dims.push_back({"d_beta", 1, static_cast<double>(std::max(1, std::min(25, num_tasks))), false, true});
  return box;
}

HyperBox box_for_kind(const HyperBox& box, ModelKind kind) {
  if (kind != ModelKind::ContextSensitive) return box;
  HyperBox out;
  for (const auto& d : box.dims)
    if (d.name != "d_beta" && d.name != "lambda_beta") out.dims.push_back(d);
  return out;
}

HpoConfig config_from_point(const HyperBox& box, const Vector& point, const TrainConfig& base) {
  if (point.size() != box.size()) hpo_error("point does not match box");
  HpoConfig cfg;
  cfg.train = base;
  cfg.hidden_dim = 0;
  cfg.d_beta = 1;
  for (int i = 0; i < box.size(); ++i) {
    const auto& name = box.dims[static_cast<std::size_t>(i)].name;
    const double v = point(i);
    if (name == "peak_lr")
      cfg.train.peak_lr = v;
    else if (name == "hidden")
      cfg.hidden_dim = static_cast<int>(std::lround(v));
    else if (name == "lambda_alpha")
      cfg.train.lambda_alpha = v;
    else if (name == "lambda_beta")
      cfg.train.lambda_beta = v;
    else if (name == "d_beta")
      cfg.d_beta = static_cast<int>(std::lround(v));
    else
      hpo_error("unknown search dimension '" + name + "'");
  }
  if (cfg.hidden_dim <= 0) hpo_error("search box must include a 'hidden' dimension");
  return cfg;
}

HpoResult hpo_search(const MultiTaskDataset& train_data, ModelKind kind, const HyperBox& box,
                     const TrainConfig& base_config, std::uint64_t seed,
                     double validation_fraction) {
  train_data.validate();
  const HyperBox search_box = box_for_kind(box, kind);

  auto [fit_part, val_part] =
      split_stratified(train_data, 1.0 - validation_fraction, seed ^ 0x9e3779b97f4a7c15ull);
  if (val_part.size() == 0) hpo_error("validation split is empty");

  const int m = train_data.num_tasks;
  int trial_counter = 0;

  auto objective = [&](const Vector& point) -> double {
    const HpoConfig cfg = config_from_point(search_box, point, base_config);
    TrainConfig tc = cfg.train;
    tc.seed = seed + static_cast<std::uint64_t>(1000 + trial_counter);
    ++trial_counter;
    MultiTaskModel model = make_model(kind, train_data.dim(), m, cfg.d_beta, cfg.hidden_dim, 2,
                                      tc.seed ^ 0xabcdef12ull);
    TrainResult r = train(std::move(model), fit_part, tc);
    if (r.diverged) return std::numeric_limits<double>::quiet_NaN();
    return rmse(r.model, val_part);
  };

  LipoResult lipo = lipo_minimize(objective, search_box, kHpoIterations, seed);

  bool any_finite = false;
  for (const auto& t : lipo.trials)
    if (!t.diverged) any_finite = true;
  if (!any_finite) hpo_error("all trials diverged");

  HpoResult out;
  out.trials = lipo.trials;
  out.best_point = lipo.best_point;
  out.best_validation_rmse = lipo.best_value;
  out.best = config_from_point(search_box, lipo.best_point, base_config);

  TrainConfig final_cfg = out.best.train;
  final_cfg.seed = seed + 7;
  auto factory = [&](std::uint64_t attempt) {
    return make_model(kind, train_data.dim(), m, out.best.d_beta, out.best.hidden_dim, 2,
                      final_cfg.seed + 31 * attempt);
  };
  out.final = train_with_retry(factory, train_data, final_cfg);
  return out;
}

void save_trials_csv(const HyperBox& box, const std::vector<TrialRecord>& trials,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) hpo_error("cannot write " + path);
  out << "trial";
  for (const auto& d : box.dims) out << "," << d.name;
  out << ",value,diverged\n";
  char buf[64];
  for (const auto& t : trials) {
    out << t.index;
    for (int i = 0; i < t.point.size(); ++i) {
      std::snprintf(buf, sizeof(buf), ",%.17g", t.point(i));
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.17g,%d\n", t.value, t.diverged ? 1 : 0);
    out << buf;
  }
}

void save_best_config_json(const HpoResult& result, const HyperBox& box, const std::string& path) {
  nlohmann::json point = nlohmann::json::object();
  const HyperBox used = box;
  for (int i = 0; i < result.best_point.size() && i < used.size(); ++i)
    point[used.dims[static_cast<std::size_t>(i)].name] = result.best_point(i);
  nlohmann::json j{{"best_point", point},
                   {"validation_rmse", result.best_validation_rmse},
                   {"hidden_dim", result.best.hidden_dim},
                   {"d_beta", result.best.d_beta},
                   {"peak_lr", result.best.train.peak_lr},
                   {"lambda_alpha", result.best.train.lambda_alpha},
                   {"lambda_beta", result.best.train.lambda_beta},
                   {"final_retries", result.final.retries}};
  std::ofstream out(path);
  if (!out) hpo_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace lcnet
