#include "lcnet/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace lcnet {

namespace {

using json = nlohmann::json;

[[noreturn]] void data_error(const std::string& what) {
  throw std::invalid_argument("lcnet::data: " + what);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Distributes `total` observations over `m` tasks as evenly as possible.
std::vector<long> spread_counts(long total, int m) {
  std::vector<long> counts(static_cast<std::size_t>(m), total / m);
  for (long r = 0; r < total % m; ++r) counts[static_cast<std::size_t>(r)] += 1;
  return counts;
}

MultiTaskDataset make_blocked(int m, const std::vector<long>& counts, int d_x) {
  MultiTaskDataset out;
  long total = 0;
  for (long c : counts) total += c;
  out.x.resize(d_x, total);
  out.y.resize(total);
  out.task.reserve(static_cast<std::size_t>(total));
  out.num_tasks = m;
  for (int j = 1; j <= m; ++j) {
    out.task_labels.push_back(std::to_string(j));
    for (long i = 0; i < counts[static_cast<std::size_t>(j - 1)]; ++i) out.task.push_back(j);
  }
  return out;
}

}  // namespace

std::vector<long> MultiTaskDataset::task_counts() const {
  std::vector<long> counts(static_cast<std::size_t>(num_tasks), 0);
  for (int t : task) {
    if (t < 1 || t > num_tasks) data_error("task id out of range");
    counts[static_cast<std::size_t>(t - 1)] += 1;
  }
  return counts;
}

void MultiTaskDataset::validate() const {
  if (x.cols() != y.size() || static_cast<long>(task.size()) != size())
    data_error("inconsistent record counts");
  if (num_tasks <= 0) data_error("num_tasks must be positive");
  auto counts = task_counts();
  for (int j = 0; j < num_tasks; ++j)
    if (counts[static_cast<std::size_t>(j)] == 0)
      data_error("task " + std::to_string(j + 1) + " has no observations");
  if (!task_labels.empty() && static_cast<int>(task_labels.size()) != num_tasks)
    data_error("task label count mismatch");
  if (!feature_names.empty() && static_cast<int>(feature_names.size()) != dim())
    data_error("feature name count mismatch");
}

double frequency_truth(double omega, double x) {
  return 0.5 * std::sin(2.0 * std::numbers::pi * omega * x) + 0.5;
}

FrequencyData gen_frequency(int num_tasks, long n_train, long n_test, double sigma,
                            std::uint64_t seed) {
  if (num_tasks <= 0 || n_train <= 0 || n_test <= 0) data_error("sizes must be positive");
  if (sigma < 0) data_error("sigma must be non-negative");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> omega_dist(0.5, 4.0);
  std::uniform_real_distribution<double> x_dist(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  FrequencyData out;
  out.params.sigma = sigma;
  out.params.omega.reserve(static_cast<std::size_t>(num_tasks));
  for (int j = 0; j < num_tasks; ++j) out.params.omega.push_back(omega_dist(rng));

  auto fill = [&](MultiTaskDataset& ds, long total) {
    auto counts = spread_counts(total, num_tasks);
    ds = make_blocked(num_tasks, counts, 1);
    ds.feature_names = {"x"};
    long i = 0;
    for (int j = 0; j < num_tasks; ++j) {
      const double omega = out.params.omega[static_cast<std::size_t>(j)];
      for (long k = 0; k < counts[static_cast<std::size_t>(j)]; ++k, ++i) {
        const double x = x_dist(rng);
        ds.x(0, i) = x;
        ds.y(i) = frequency_truth(omega, x) + sigma * noise(rng);
      }
    }
  };
  fill(out.train, n_train);
  fill(out.test, n_test);
  return out;
}

double sine_line_truth(const SineLineTaskParams::Task& t, double x) {
  return t.is_sine ? t.c * std::sin(x + t.d) : t.a * x + t.b;
}

SineLineData gen_sine_line(int num_tasks, long n_train, long n_test, double sigma,
                           std::uint64_t seed) {
  if (num_tasks <= 0 || n_train <= 0 || n_test <= 0) data_error("sizes must be positive");
  if (num_tasks % 2 != 0) data_error("num_tasks must be even (equal tasks per class)");
  if (sigma < 0) data_error("sigma must be non-negative");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ab_dist(-3.0, 3.0);
  std::uniform_real_distribution<double> c_dist(0.1, 5.0);
  std::uniform_real_distribution<double> d_dist(0.0, std::numbers::pi);
  std::uniform_real_distribution<double> x_dist(-5.0, 5.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  SineLineData out;
  out.params.sigma = sigma;
  out.params.tasks.resize(static_cast<std::size_t>(num_tasks));
  for (int j = 0; j < num_tasks; ++j) {
    auto& t = out.params.tasks[static_cast<std::size_t>(j)];
    t.is_sine = j >= num_tasks / 2;
    if (t.is_sine) {
      t.c = c_dist(rng);
      t.d = d_dist(rng);
    } else {
      t.a = ab_dist(rng);
      t.b = ab_dist(rng);
    }
  }

  auto fill = [&](MultiTaskDataset& ds, long total) {
    auto counts = spread_counts(total, num_tasks);
    ds = make_blocked(num_tasks, counts, 1);
    ds.feature_names = {"x"};
    long i = 0;
    for (int j = 0; j < num_tasks; ++j) {
      const auto& t = out.params.tasks[static_cast<std::size_t>(j)];
      for (long k = 0; k < counts[static_cast<std::size_t>(j)]; ++k, ++i) {
        const double x = x_dist(rng);
        ds.x(0, i) = x;
        ds.y(i) = sine_line_truth(t, x) + sigma * noise(rng);
      }
    }
  };
  fill(out.train, n_train);
  fill(out.test, n_test);
  return out;
}

CsvSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) data_error("cannot open schema file " + path);
  json j = json::parse(in);
  CsvSchema s;
  s.task_column = j.at("task_column").get<std::string>();
  s.target_column = j.at("target_column").get<std::string>();
  for (const auto& f : j.at("features")) {
    CsvSchema::Feature feature;
    feature.name = f.at("name").get<std::string>();
    const std::string kind = f.value("kind", "continuous");
    if (kind == "categorical")
      feature.categorical = true;
    else if (kind != "continuous")
      data_error("unknown feature kind '" + kind + "'");
    s.features.push_back(std::move(feature));
  }
  return s;
}

void save_schema(const CsvSchema& schema, const std::string& path) {
  json features = json::array();
  for (const auto& f : schema.features)
    features.push_back({{"name", f.name}, {"kind", f.categorical ? "categorical" : "continuous"}});
  json j{{"task_column", schema.task_column},
         {"features", features},
         {"target_column", schema.target_column}};
  std::ofstream out(path);
  if (!out) data_error("cannot write schema file " + path);
  out << j.dump(2) << "\n";
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, const std::string& column, long row) {
  try {
    std::size_t pos = 0;
    double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    data_error("row " + std::to_string(row) + ": cannot parse '" + cell + "' in column " + column);
  }
}

}  // namespace

MultiTaskDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) data_error("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) data_error("empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_line(line);

  auto column_index = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) data_error("missing column '" + name + "' in " + path);
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t task_col = column_index(schema.task_column);
  const std::size_t target_col = column_index(schema.target_column);
  std::vector<std::size_t> feature_cols;
  for (const auto& f : schema.features) feature_cols.push_back(column_index(f.name));

  std::vector<std::string> task_raw;
  std::vector<double> target_raw;
  std::vector<std::vector<std::string>> feature_raw(schema.features.size());

  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size())
      data_error("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                 " cells, got " + std::to_string(cells.size()));
    task_raw.push_back(cells[task_col]);
    target_raw.push_back(parse_cell(cells[target_col], schema.target_column, row));
    for (std::size_t f = 0; f < feature_cols.size(); ++f)
      feature_raw[f].push_back(cells[feature_cols[f]]);
  }
  if (task_raw.empty()) data_error("no data rows in " + path);
  const long n = static_cast<long>(task_raw.size());

  MultiTaskDataset out;

  // Task ids in order of first appearance.
  std::map<std::string, int> task_ids;
  out.task.reserve(task_raw.size());
  for (const auto& label : task_raw) {
    auto [it, inserted] = task_ids.try_emplace(label, static_cast<int>(task_ids.size()) + 1);
    if (inserted) out.task_labels.push_back(label);
    out.task.push_back(it->second);
  }
  out.num_tasks = static_cast<int>(task_ids.size());

  // Expanded feature table: categoricals become one indicator per level.
  std::vector<std::vector<double>> columns;
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    const auto& feature = schema.features[f];
    if (!feature.categorical) {
      std::vector<double> col(static_cast<std::size_t>(n));
      for (long i = 0; i < n; ++i)
        col[static_cast<std::size_t>(i)] =
            parse_cell(feature_raw[f][static_cast<std::size_t>(i)], feature.name, i + 2);
      columns.push_back(std::move(col));
      out.feature_names.push_back(feature.name);
    } else {
      std::map<std::string, std::size_t> levels;
      std::vector<std::string> level_names;
      std::vector<std::size_t> level_of(static_cast<std::size_t>(n));
      for (long i = 0; i < n; ++i) {
        const auto& v = feature_raw[f][static_cast<std::size_t>(i)];
        auto [it, inserted] = levels.try_emplace(v, level_names.size());
        if (inserted) level_names.push_back(v);
        level_of[static_cast<std::size_t>(i)] = it->second;
      }
      for (std::size_t l = 0; l < level_names.size(); ++l) {
        std::vector<double> col(static_cast<std::size_t>(n), 0.0);
        for (long i = 0; i < n; ++i)
          if (level_of[static_cast<std::size_t>(i)] == l) col[static_cast<std::size_t>(i)] = 1.0;
        columns.push_back(std::move(col));
        out.feature_names.push_back(feature.name + "=" + level_names[l]);
      }
    }
  }

  out.x.resize(static_cast<long>(columns.size()), n);
  for (std::size_t c = 0; c < columns.size(); ++c)
    for (long i = 0; i < n; ++i) out.x(static_cast<long>(c), i) = columns[c][static_cast<std::size_t>(i)];
  out.y.resize(n);
  for (long i = 0; i < n; ++i) out.y(i) = target_raw[static_cast<std::size_t>(i)];
  out.validate();
  return out;
}

void save_csv(const MultiTaskDataset& data, const std::string& path,
              const std::string& task_column, const std::string& target_column) {
  data.validate();
  std::ofstream out(path);
  if (!out) data_error("cannot write " + path);
  out << task_column;
  for (int f = 0; f < data.dim(); ++f) {
    out << ",";
    out << (data.feature_names.empty() ? "x" + std::to_string(f + 1) : data.feature_names[static_cast<std::size_t>(f)]);
  }
  out << "," << target_column << "\n";
  for (long i = 0; i < data.size(); ++i) {
    const int j = data.task[static_cast<std::size_t>(i)];
    out << (data.task_labels.empty() ? std::to_string(j) : data.task_labels[static_cast<std::size_t>(j - 1)]);
    for (int f = 0; f < data.dim(); ++f) out << "," << format_double(data.x(f, i));
    out << "," << format_double(data.y(i)) << "\n";
  }
}

Scaler fit_scaler(const MultiTaskDataset& train) {
  if (train.size() == 0) data_error("cannot fit scaler on empty dataset");
  const long n = train.size();
  Scaler s;
  s.feature_mean = train.x.rowwise().mean();
  s.feature_std.resize(train.dim());
  for (int f = 0; f < train.dim(); ++f) {
    const double var = (train.x.row(f).array() - s.feature_mean(f)).square().sum() / n;
    const double sd = std::sqrt(var);
    s.feature_std(f) = sd > 0.0 ? sd : 1.0;
  }
  s.target_mean = train.y.mean();
  const double tvar = (train.y.array() - s.target_mean).square().sum() / n;
  const double tsd = std::sqrt(tvar);
  s.target_std = tsd > 0.0 ? tsd : 1.0;
  return s;
}

Matrix scale_features(const Scaler& s, const Matrix& x) {
  if (x.rows() != s.feature_mean.size()) data_error("scaler dimension mismatch");
  return (x.colwise() - s.feature_mean).array().colwise() / s.feature_std.array();
}

MultiTaskDataset apply_scaler(const Scaler& s, const MultiTaskDataset& data) {
  MultiTaskDataset out = data;
  out.x = scale_features(s, data.x);
  out.y = (data.y.array() - s.target_mean) / s.target_std;
  return out;
}

double scale_target(const Scaler& s, double y) { return (y - s.target_mean) / s.target_std; }

double invert_target(const Scaler& s, double y_scaled) {
  return y_scaled * s.target_std + s.target_mean;
}

Vector invert_targets(const Scaler& s, const Vector& y_scaled) {
  return (y_scaled.array() * s.target_std + s.target_mean).matrix();
}

namespace {

MultiTaskDataset take_rows(const MultiTaskDataset& data, const std::vector<long>& rows) {
  MultiTaskDataset out;
  out.num_tasks = data.num_tasks;
  out.task_labels = data.task_labels;
  out.feature_names = data.feature_names;
  out.x.resize(data.dim(), static_cast<long>(rows.size()));
  out.y.resize(static_cast<long>(rows.size()));
  out.task.reserve(rows.size());
  long i = 0;
  for (long r : rows) {
    out.x.col(i) = data.x.col(r);
    out.y(i) = data.y(r);
    out.task.push_back(data.task[static_cast<std::size_t>(r)]);
    ++i;
  }
  return out;
}

std::vector<std::vector<long>> rows_by_task(const MultiTaskDataset& data) {
  std::vector<std::vector<long>> rows(static_cast<std::size_t>(data.num_tasks));
  for (long i = 0; i < data.size(); ++i)
    rows[static_cast<std::size_t>(data.task[static_cast<std::size_t>(i)] - 1)].push_back(i);
  return rows;
}

}  // namespace

MultiTaskDataset subsample_balanced(const MultiTaskDataset& data, double fraction,
                                    std::uint64_t seed) {
  data.validate();
  if (!(fraction > 0.0 && fraction <= 1.0)) data_error("fraction must be in (0, 1]");
  std::mt19937_64 rng(seed);
  auto per_task = rows_by_task(data);
  std::vector<long> selected;
  for (auto& rows : per_task) {
    const long n_j = static_cast<long>(rows.size());
    long keep = std::lround(fraction * static_cast<double>(n_j));
    keep = std::max<long>(1, std::min(keep, n_j));
    std::shuffle(rows.begin(), rows.end(), rng);
    selected.insert(selected.end(), rows.begin(), rows.begin() + keep);
  }
  std::sort(selected.begin(), selected.end());
  return take_rows(data, selected);
}

std::pair<MultiTaskDataset, MultiTaskDataset> split_stratified(const MultiTaskDataset& data,
                                                               double fraction_a,
                                                               std::uint64_t seed) {
  data.validate();
  if (!(fraction_a > 0.0 && fraction_a < 1.0)) data_error("fraction must be in (0, 1)");
  std::mt19937_64 rng(seed);
  auto per_task = rows_by_task(data);
  std::vector<long> rows_a, rows_b;
  for (auto& rows : per_task) {
    const long n_j = static_cast<long>(rows.size());
    long n_a = std::lround(fraction_a * static_cast<double>(n_j));
    n_a = std::max<long>(1, std::min(n_a, n_j));
    std::shuffle(rows.begin(), rows.end(), rng);
    rows_a.insert(rows_a.end(), rows.begin(), rows.begin() + n_a);
    rows_b.insert(rows_b.end(), rows.begin() + n_a, rows.end());
  }
  std::sort(rows_a.begin(), rows_a.end());
  std::sort(rows_b.begin(), rows_b.end());
  auto a = take_rows(data, rows_a);
  MultiTaskDataset b;
  if (rows_b.empty()) {
    b.num_tasks = data.num_tasks;
    b.task_labels = data.task_labels;
    b.feature_names = data.feature_names;
    b.x.resize(data.dim(), 0);
    b.y.resize(0);
  } else {
    b = take_rows(data, rows_b);
  }
  return {std::move(a), std::move(b)};
}

MultiTaskDataset select_tasks(const MultiTaskDataset& data, const std::vector<int>& keep) {
  data.validate();
  std::vector<int> remap(static_cast<std::size_t>(data.num_tasks) + 1, 0);
  int next = 1;
  for (int j : keep) {
    if (j < 1 || j > data.num_tasks) data_error("task id out of range in select_tasks");
    if (remap[static_cast<std::size_t>(j)] != 0) data_error("duplicate task id in select_tasks");
    remap[static_cast<std::size_t>(j)] = next++;
  }
  std::vector<long> rows;
  for (long i = 0; i < data.size(); ++i)
    if (remap[static_cast<std::size_t>(data.task[static_cast<std::size_t>(i)])] != 0) rows.push_back(i);
  MultiTaskDataset out = take_rows(data, rows);
  for (auto& t : out.task) t = remap[static_cast<std::size_t>(t)];
  out.num_tasks = static_cast<int>(keep.size());
  out.task_labels.clear();
  if (!data.task_labels.empty())
    for (int j : keep) out.task_labels.push_back(data.task_labels[static_cast<std::size_t>(j - 1)]);
  return out;
}

MultiTaskDataset select_task_rows(const MultiTaskDataset& data, int task_id) {
  if (task_id < 1 || task_id > data.num_tasks) data_error("task id out of range");
  std::vector<long> rows;
  for (long i = 0; i < data.size(); ++i)
    if (data.task[static_cast<std::size_t>(i)] == task_id) rows.push_back(i);
  return take_rows(data, rows);
}

}  // namespace lcnet
