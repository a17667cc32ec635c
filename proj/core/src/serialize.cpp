#include "lcnet/serialize.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace lcnet {

namespace {

using json = nlohmann::json;

[[noreturn]] void io_error(const std::string& what) {
  throw std::runtime_error("lcnet::serialize: " + what);
}

json shape_to_json(const NetShape& s) {
  return json{{"input_dim", s.input_dim},
              {"hidden_dim", s.hidden_dim},
              {"residual_blocks", s.residual_blocks},
              {"output_dim", s.output_dim},
              {"residual_skips", s.residual_skips}};
}

NetShape shape_from_json(const json& j) {
  NetShape s;
  s.input_dim = j.at("input_dim").get<int>();
  s.hidden_dim = j.at("hidden_dim").get<int>();
  s.residual_blocks = j.at("residual_blocks").get<int>();
  s.output_dim = j.at("output_dim").get<int>();
  s.residual_skips = j.at("residual_skips").get<bool>();
  return s;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (long r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (long c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, long rows, long cols) {
  if (static_cast<long>(j.size()) != rows) io_error("matrix row count mismatch");
  Matrix m(rows, cols);
  for (long r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<long>(row.size()) != cols) io_error("matrix column count mismatch");
    for (long c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

json params_to_json(const ParamSet& p) {
  json layers = json::array();
  for (std::size_t k = 0; k < p.weights.size(); ++k) {
    json layer;
    layer["weight"] = matrix_to_json(p.weights[k]);
    json bias = json::array();
    for (long i = 0; i < p.biases[k].size(); ++i) bias.push_back(p.biases[k](i));
    layer["bias"] = std::move(bias);
    layers.push_back(std::move(layer));
  }
  return json{{"shape", shape_to_json(p.shape)}, {"layers", layers}};
}

ParamSet params_from_json(const json& j) {
  const NetShape shape = shape_from_json(j.at("shape"));
  ParamSet p = zero_params(shape);
  const auto& layers = j.at("layers");
  if (static_cast<int>(layers.size()) != shape.layer_count()) io_error("layer count mismatch");
  for (int k = 0; k < shape.layer_count(); ++k) {
    const auto& layer = layers.at(static_cast<std::size_t>(k));
    p.weights[static_cast<std::size_t>(k)] =
        matrix_from_json(layer.at("weight"), shape.layer_rows(k), shape.layer_cols(k));
    const auto& bias = layer.at("bias");
    if (static_cast<int>(bias.size()) != shape.layer_rows(k)) io_error("bias size mismatch");
    for (int i = 0; i < shape.layer_rows(k); ++i)
      p.biases[static_cast<std::size_t>(k)](i) = bias.at(static_cast<std::size_t>(i)).get<double>();
  }
  p.validate();
  return p;
}

constexpr char kBinaryMagic[8] = {'L', 'C', 'N', 'E', 'T', 'P', '1', '\0'};

void write_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

std::uint64_t read_u64(std::istream& in) {
  char buf[8];
  in.read(buf, 8);
  if (!in) io_error("unexpected end of file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}

void write_doubles_row_major(std::ostream& out, const Matrix& m) {
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      write_u64(out, bits);
    }
}

Matrix read_doubles_row_major(std::istream& in, long rows, long cols) {
  Matrix m(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      const std::uint64_t bits = read_u64(in);
      double v;
      std::memcpy(&v, &bits, sizeof(v));
      m(r, c) = v;
    }
  return m;
}

json scaler_to_json(const Scaler& s) {
  json fm = json::array(), fs = json::array();
  for (long i = 0; i < s.feature_mean.size(); ++i) fm.push_back(s.feature_mean(i));
  for (long i = 0; i < s.feature_std.size(); ++i) fs.push_back(s.feature_std(i));
  return json{{"feature_mean", fm},
              {"feature_std", fs},
              {"target_mean", s.target_mean},
              {"target_std", s.target_std}};
}

Scaler scaler_from_json(const json& j) {
  Scaler s;
  const auto& fm = j.at("feature_mean");
  const auto& fs = j.at("feature_std");
  s.feature_mean.resize(static_cast<long>(fm.size()));
  s.feature_std.resize(static_cast<long>(fs.size()));
  for (long i = 0; i < s.feature_mean.size(); ++i) s.feature_mean(i) = fm.at(static_cast<std::size_t>(i)).get<double>();
  for (long i = 0; i < s.feature_std.size(); ++i) s.feature_std(i) = fs.at(static_cast<std::size_t>(i)).get<double>();
  s.target_mean = j.at("target_mean").get<double>();
  s.target_std = j.at("target_std").get<double>();
  return s;
}

}  // namespace

void save_params_json(const ParamSet& params, const std::string& path) {
  params.validate();
  std::ofstream out(path);
  if (!out) io_error("cannot write " + path);
  out << params_to_json(params).dump() << "\n";
}

ParamSet load_params_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) io_error("cannot open " + path);
  return params_from_json(json::parse(in));
}

void save_params_binary(const ParamSet& params, const std::string& path) {
  params.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) io_error("cannot write " + path);
  out.write(kBinaryMagic, sizeof(kBinaryMagic));
  write_u64(out, static_cast<std::uint64_t>(params.shape.input_dim));
  write_u64(out, static_cast<std::uint64_t>(params.shape.hidden_dim));
  write_u64(out, static_cast<std::uint64_t>(params.shape.residual_blocks));
  write_u64(out, static_cast<std::uint64_t>(params.shape.output_dim));
  write_u64(out, params.shape.residual_skips ? 1 : 0);
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    write_doubles_row_major(out, params.weights[k]);
    write_doubles_row_major(out, params.biases[k]);
  }
}

ParamSet load_params_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_error("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kBinaryMagic, 8) != 0) io_error("bad magic in " + path);
  NetShape shape;
  shape.input_dim = static_cast<int>(read_u64(in));
  shape.hidden_dim = static_cast<int>(read_u64(in));
  shape.residual_blocks = static_cast<int>(read_u64(in));
  shape.output_dim = static_cast<int>(read_u64(in));
  shape.residual_skips = read_u64(in) != 0;
  ParamSet p = zero_params(shape);
  for (int k = 0; k < shape.layer_count(); ++k) {
    p.weights[static_cast<std::size_t>(k)] =
        read_doubles_row_major(in, shape.layer_rows(k), shape.layer_cols(k));
    p.biases[static_cast<std::size_t>(k)] =
        read_doubles_row_major(in, shape.layer_rows(k), 1).col(0);
  }
  return p;
}

void save_model_bundle(const ModelBundle& bundle, const std::string& path) {
  bundle.model.validate();
  json j;
  j["kind"] = to_string(bundle.model.kind);
  j["x_dim"] = bundle.model.x_dim;
  j["net"] = params_to_json(bundle.model.net);
  j["tasks"] = json{{"num_tasks", bundle.model.tasks.num_tasks},
                    {"dim", bundle.model.tasks.dim},
                    {"beta", matrix_to_json(bundle.model.tasks.beta)}};
  j["scaler"] = scaler_to_json(bundle.scaler);
  std::ofstream out(path);
  if (!out) io_error("cannot write " + path);
  out << j.dump() << "\n";
}

ModelBundle load_model_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) io_error("cannot open " + path);
  const json j = json::parse(in);
  ModelBundle bundle;
  bundle.model.kind = model_kind_from_string(j.at("kind").get<std::string>());
  bundle.model.x_dim = j.at("x_dim").get<int>();
  bundle.model.net = params_from_json(j.at("net"));
  const auto& tasks = j.at("tasks");
  bundle.model.tasks.num_tasks = tasks.at("num_tasks").get<int>();
  bundle.model.tasks.dim = tasks.at("dim").get<int>();
  bundle.model.tasks.beta =
      matrix_from_json(tasks.at("beta"), bundle.model.tasks.dim, bundle.model.tasks.num_tasks);
  bundle.scaler = scaler_from_json(j.at("scaler"));
  bundle.model.validate();
  return bundle;
}

}  // namespace lcnet
