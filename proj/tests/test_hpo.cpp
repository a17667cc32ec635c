#include "lcnet/hpo.hpp"

#include "lcnet/data.hpp"

#include <doctest.h>

#include <cmath>

using namespace lcnet;

TEST_CASE("default search box matches the documented ranges") {
  const HyperBox box = default_hyper_box(200);
  REQUIRE(box.size() == 5);
  CHECK(box.dims[0].name == "peak_lr");
  CHECK(box.dims[0].lo == 1e-4);
  CHECK(box.dims[0].hi == 1.5);
  CHECK(box.dims[0].log10);
  CHECK(box.dims[1].name == "hidden");
  CHECK(box.dims[1].lo == 50);
  CHECK(box.dims[1].hi == 500);
  CHECK(box.dims[1].integer);
  CHECK(box.dims[2].lo == 1e-15);
  CHECK(box.dims[2].hi == 1e-5);
  CHECK(box.dims[3].hi == 1e-3);
  CHECK(box.dims[4].name == "d_beta");
  CHECK(box.dims[4].lo == 1);
  CHECK(box.dims[4].hi == 25);  // min(25, m)

  const HyperBox few = default_hyper_box(9);
  CHECK(few.dims[4].hi == 9);

  const HyperBox capped = default_hyper_box(100, 200);
  CHECK(capped.dims[1].hi == 200);
}

TEST_CASE("context-sensitive models drop the task-parameter dimensions") {
  const HyperBox box = default_hyper_box(50);
  const HyperBox cs = box_for_kind(box, ModelKind::ContextSensitive);
  CHECK(cs.size() == 3);
  CHECK(cs.index_of("d_beta") == -1);
  CHECK(cs.index_of("lambda_beta") == -1);
  const HyperBox lc = box_for_kind(box, ModelKind::LearnedContext);
  CHECK(lc.size() == 5);
}

TEST_CASE("config decoding from a search point") {
  const HyperBox box = default_hyper_box(50);
  Vector point(5);
  point << 0.01, 128, 1e-9, 1e-6, 4;
  TrainConfig base;
  base.max_epochs = 77;
  const HpoConfig cfg = config_from_point(box, point, base);
  CHECK(cfg.train.peak_lr == 0.01);
  CHECK(cfg.hidden_dim == 128);
  CHECK(cfg.train.lambda_alpha == 1e-9);
  CHECK(cfg.train.lambda_beta == 1e-6);
  CHECK(cfg.d_beta == 4);
  CHECK(cfg.train.max_epochs == 77);
}

TEST_CASE("search on reduced data beats the box midpoint and logs 25 trials") {
  const auto data = gen_frequency(20, 2000, 1200, 0.1, 31);
  const Scaler scaler = fit_scaler(data.train);
  const MultiTaskDataset train_scaled = apply_scaler(scaler, data.train);
  const MultiTaskDataset test_scaled = apply_scaler(scaler, data.test);

  HyperBox box;
  box.dims.push_back({"peak_lr", 1e-3, 0.5, true, false});
  box.dims.push_back({"hidden", 8, 48, false, true});
  box.dims.push_back({"lambda_alpha", 1e-12, 1e-6, true, false});
  box.dims.push_back({"lambda_beta", 1e-12, 1e-4, true, false});
  box.dims.push_back({"d_beta", 1, 4, false, true});

  TrainConfig base;
  base.max_epochs = 150;
  base.batches_per_epoch = 2;

  const HpoResult result = hpo_search(train_scaled, ModelKind::LearnedContext, box, base, 41);
  CHECK(static_cast<int>(result.trials.size()) == kHpoIterations);
  CHECK(kHpoIterations == 25);
  const double searched = rmse(result.final.model, test_scaled);

  // Midpoint-of-the-box reference configuration, trained the same way.
  Vector mid(5);
  mid << std::sqrt(1e-3 * 0.5), 28, 1e-9, 1e-8, 2;
  const HpoConfig mid_cfg = config_from_point(box, mid, base);
  TrainConfig mc = mid_cfg.train;
  mc.seed = 41 + 7;
  const TrainResult mid_run = train(
      make_model(ModelKind::LearnedContext, 1, 20, mid_cfg.d_beta, mid_cfg.hidden_dim, 2, 48),
      train_scaled, mc);
  const double midpoint = rmse(mid_run.model, test_scaled);

  CHECK(searched <= midpoint);
  CHECK(result.best_validation_rmse > 0.0);

  // Incumbent monotonicity over the recorded trials.
  double best = 1e300;
  for (const auto& t : result.trials) {
    if (!t.diverged) best = std::min(best, t.value);
    CHECK(best <= 1e300);
  }
  CHECK(best == result.best_validation_rmse);
}

TEST_CASE("collapsed box evaluates one configuration and still trains a final model") {
  const auto data = gen_frequency(6, 300, 150, 0.1, 51);
  const Scaler scaler = fit_scaler(data.train);
  const MultiTaskDataset train_scaled = apply_scaler(scaler, data.train);

  HyperBox point_box;
  point_box.dims.push_back({"peak_lr", 0.01, 0.01, true, false});
  point_box.dims.push_back({"hidden", 16, 16, false, true});
  point_box.dims.push_back({"lambda_alpha", 1e-9, 1e-9, true, false});
  point_box.dims.push_back({"lambda_beta", 1e-9, 1e-9, true, false});
  point_box.dims.push_back({"d_beta", 2, 2, false, true});

  TrainConfig base;
  base.max_epochs = 60;
  base.batches_per_epoch = 2;
  const HpoResult result = hpo_search(train_scaled, ModelKind::LearnedContext, point_box, base, 61);
  CHECK(result.trials.size() == 1);
  CHECK(result.best.hidden_dim == 16);
  CHECK(result.final.model.tasks.dim == 2);
  CHECK(result.final.epochs_run > 0);
}
