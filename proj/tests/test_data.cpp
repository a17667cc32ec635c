#include "lcnet/data.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <string>

using namespace lcnet;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/lcnet_data_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

double sample_std(const Vector& v) {
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / double(v.size()));
}

}  // namespace

TEST_CASE("frequency formula anchor: omega 1.5 at x = 1/6") {
  CHECK(frequency_truth(1.5, 1.0 / 6.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("frequency: noise-free responses stay in [0, 1]") {
  const auto data = gen_frequency(20, 2000, 500, 0.0, 5);
  CHECK(data.train.y.minCoeff() >= 0.0);
  CHECK(data.train.y.maxCoeff() <= 1.0);
}

TEST_CASE("frequency: response std matches the documented scale") {
  const auto data = gen_frequency(250, 30000, 25000, 0.1, 1);
  CHECK(sample_std(data.train.y) == doctest::Approx(0.36).epsilon(0.03));
}

TEST_CASE("frequency: omega range and deterministic generation") {
  const auto a = gen_frequency(50, 3000, 1000, 0.1, 123);
  const auto b = gen_frequency(50, 3000, 1000, 0.1, 123);
  CHECK(a.train.x == b.train.x);
  CHECK(a.train.y == b.train.y);
  CHECK(a.test.y == b.test.y);
  for (double w : a.params.omega) {
    CHECK(w >= 0.5);
    CHECK(w <= 4.0);
  }
}

TEST_CASE("frequency: noise floor of the true function") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto data = gen_frequency(100, 1000, 20000, 0.1, seed);
    double sq = 0.0;
    for (long i = 0; i < data.test.size(); ++i) {
      const double truth = frequency_truth(
          data.params.omega[static_cast<std::size_t>(data.test.task[static_cast<std::size_t>(i)] - 1)],
          data.test.x(0, i));
      sq += (data.test.y(i) - truth) * (data.test.y(i) - truth);
    }
    const double rmse = std::sqrt(sq / double(data.test.size()));
    CHECK(rmse >= 0.098);
    CHECK(rmse <= 0.102);
  }
}

TEST_CASE("sine-and-line: class anchors") {
  SineLineTaskParams::Task affine{.is_sine = false, .a = 1.0, .b = 0.0};
  CHECK(sine_line_truth(affine, 2.0) == 2.0);
  SineLineTaskParams::Task sine{.is_sine = true, .c = 2.0, .d = 0.0};
  CHECK(sine_line_truth(sine, std::numbers::pi / 2) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("sine-and-line: response std matches the documented scale") {
  const auto data = gen_sine_line(100, 6000, 10000, 0.3, 6);
  CHECK(sample_std(data.train.y) == doctest::Approx(3.93).epsilon(0.0255));
}

TEST_CASE("sine-and-line: odd task count rejected, classes balanced") {
  CHECK_THROWS_AS(gen_sine_line(9, 100, 100, 0.1, 0), std::invalid_argument);
  const auto data = gen_sine_line(10, 500, 100, 0.1, 0);
  int sines = 0;
  for (const auto& t : data.params.tasks) sines += t.is_sine ? 1 : 0;
  CHECK(sines == 5);
  for (const auto& t : data.params.tasks) {
    if (t.is_sine) {
      CHECK(t.c >= 0.1);
      CHECK(t.c <= 5.0);
      CHECK(t.d >= 0.0);
      CHECK(t.d <= std::numbers::pi);
    } else {
      CHECK(std::abs(t.a) <= 3.0);
      CHECK(std::abs(t.b) <= 3.0);
    }
  }
}

TEST_CASE("sine tasks lie exactly in the 4-function basis") {
  // c sin(x + d) = (c sin d) cos x + (c cos d) sin x
  const auto data = gen_sine_line(20, 2000, 100, 0.0, 7);
  for (long i = 0; i < data.train.size(); ++i) {
    const auto& t =
        data.params.tasks[static_cast<std::size_t>(data.train.task[static_cast<std::size_t>(i)] - 1)];
    if (!t.is_sine) continue;
    const double x = data.train.x(0, i);
    const double basis = t.c * std::sin(t.d) * std::cos(x) + t.c * std::cos(t.d) * std::sin(x);
    CHECK(std::abs(data.train.y(i) - basis) <= 1e-12);
  }
}

TEST_CASE("csv: round trip, one-hot expansion, task remapping") {
  TempFile csv("roundtrip.csv");
  TempFile schema_file("schema.json");
  {
    std::ofstream out(csv.path);
    out << "task,load,kind,y\n";
    out << "pump-7,0.5,low,1.25\n";
    out << "pump-3,1.5,high,-0.5\n";
    out << "pump-7,2.5,mid,0.75\n";
    out << "pump-3,-1.0,low,0.125\n";
  }
  CsvSchema schema;
  schema.task_column = "task";
  schema.target_column = "y";
  schema.features = {{"load", false}, {"kind", true}};
  save_schema(schema, schema_file.path);
  const CsvSchema loaded_schema = load_schema(schema_file.path);
  CHECK(loaded_schema.features.size() == 2);
  CHECK(loaded_schema.features[1].categorical);

  const MultiTaskDataset data = load_csv(csv.path, loaded_schema);
  CHECK(data.num_tasks == 2);
  CHECK(data.task_labels[0] == "pump-7");  // first appearance order
  CHECK(data.dim() == 4);                  // load + 3 indicator levels
  CHECK(data.feature_names[1] == "kind=low");
  CHECK(data.task == std::vector<int>{1, 2, 1, 2});
  CHECK(data.x(1, 0) == 1.0);  // row 0 is kind=low
  CHECK(data.x(2, 1) == 1.0);  // row 1 is kind=high
  CHECK(data.y(1) == -0.5);

  // Write the expanded table out and read it back as continuous columns.
  TempFile csv2("roundtrip2.csv");
  save_csv(data, csv2.path);
  CsvSchema schema2;
  schema2.task_column = "task";
  schema2.target_column = "y";
  for (const auto& name : data.feature_names) schema2.features.push_back({name, false});
  const MultiTaskDataset back = load_csv(csv2.path, schema2);
  CHECK(back.x == data.x);
  CHECK(back.y == data.y);
  CHECK(back.task == data.task);
  CHECK(back.task_labels == data.task_labels);
}

TEST_CASE("csv: errors carry row numbers and column names") {
  TempFile csv("bad.csv");
  {
    std::ofstream out(csv.path);
    out << "task,x,y\n1,0.5,ok\n";
  }
  CsvSchema schema;
  schema.task_column = "task";
  schema.target_column = "y";
  schema.features = {{"x", false}};
  CHECK_THROWS_WITH_AS(load_csv(csv.path, schema),
                       doctest::Contains("row 2"), std::invalid_argument);

  CsvSchema missing = schema;
  missing.features = {{"nope", false}};
  CHECK_THROWS_WITH_AS(load_csv(csv.path, missing), doctest::Contains("nope"),
                       std::invalid_argument);
}

TEST_CASE("scaler: invertible standardization fitted on train only") {
  const auto data = gen_sine_line(10, 800, 200, 0.2, 11);
  const Scaler s = fit_scaler(data.train);
  const MultiTaskDataset scaled = apply_scaler(s, data.train);
  CHECK(std::abs(scaled.y.mean()) <= 1e-9);
  CHECK(sample_std(scaled.y) == doctest::Approx(1.0).epsilon(1e-9));

  for (long i = 0; i < 50; ++i)
    CHECK(invert_target(s, scaled.y(i)) == doctest::Approx(data.train.y(i)).epsilon(1e-12));

  // Swapping the test set cannot change the transform.
  const auto other = gen_sine_line(10, 800, 200, 0.2, 999);
  const Scaler again = fit_scaler(data.train);
  CHECK(again.target_mean == s.target_mean);
  CHECK(again.feature_mean == s.feature_mean);
  (void)other;
}

TEST_CASE("scaler: constant column falls back to unit std") {
  MultiTaskDataset d;
  d.num_tasks = 1;
  d.x = Matrix::Ones(1, 4) * 2.5;
  d.y.resize(4);
  d.y << 1, 2, 3, 4;
  d.task = {1, 1, 1, 1};
  const Scaler s = fit_scaler(d);
  CHECK(s.feature_std(0) == 1.0);
  const MultiTaskDataset scaled = apply_scaler(s, d);
  CHECK(scaled.x(0, 0) == 0.0);
}

TEST_CASE("balanced subsample") {
  const auto data = gen_frequency(10, 100, 50, 0.1, 2);

  const MultiTaskDataset same = subsample_balanced(data.train, 1.0, 3);
  CHECK(same.x == data.train.x);
  CHECK(same.y == data.train.y);

  const MultiTaskDataset half = subsample_balanced(data.train, 0.5, 3);
  const auto counts = half.task_counts();
  for (long c : counts) CHECK(c == 5);

  const MultiTaskDataset tiny = subsample_balanced(data.train, 0.01, 3);
  for (long c : tiny.task_counts()) CHECK(c == 1);  // minimum one survives

  const MultiTaskDataset again = subsample_balanced(data.train, 0.5, 3);
  CHECK(again.x == half.x);
}

TEST_CASE("stratified split") {
  const auto data = gen_frequency(7, 200, 50, 0.1, 4);
  const auto [a, b] = split_stratified(data.train, 0.8, 9);
  CHECK(a.size() + b.size() == data.train.size());
  for (long c : a.task_counts()) CHECK(c >= 1);

  const auto [a2, b2] = split_stratified(data.train, 0.8, 9);
  CHECK(a2.x == a.x);
  CHECK(b2.y == b.y);

  // Disjointness: every original row lands in exactly one part.
  std::multiset<double> all;
  for (long i = 0; i < data.train.size(); ++i) all.insert(data.train.y(i));
  for (long i = 0; i < a.size(); ++i) {
    auto it = all.find(a.y(i));
    REQUIRE(it != all.end());
    all.erase(it);
  }
  for (long i = 0; i < b.size(); ++i) {
    auto it = all.find(b.y(i));
    REQUIRE(it != all.end());
    all.erase(it);
  }
  CHECK(all.empty());
}

TEST_CASE("split: single-observation task goes to part a") {
  MultiTaskDataset d;
  d.num_tasks = 2;
  d.x = Matrix::Zero(1, 5);
  d.x << 1, 2, 3, 4, 5;
  d.y.resize(5);
  d.y << 1, 2, 3, 4, 5;
  d.task = {1, 1, 1, 1, 2};
  const auto [a, b] = split_stratified(d, 0.5, 1);
  bool task2_in_a = false;
  for (int t : a.task) task2_in_a |= (t == 2);
  CHECK(task2_in_a);
}

TEST_CASE("task selection utilities") {
  const auto data = gen_frequency(6, 60, 30, 0.1, 8);
  const MultiTaskDataset sub = select_tasks(data.train, {5, 2});
  CHECK(sub.num_tasks == 2);
  CHECK(sub.size() == 20);
  CHECK(sub.task_labels == std::vector<std::string>{"5", "2"});
  for (int t : sub.task) CHECK((t == 1 || t == 2));

  const MultiTaskDataset one = select_task_rows(data.train, 3);
  CHECK(one.size() == 10);
  for (int t : one.task) CHECK(t == 3);
}
