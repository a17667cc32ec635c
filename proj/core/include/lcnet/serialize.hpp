#pragma once

#include "lcnet/data.hpp"
#include "lcnet/models.hpp"

#include <string>

namespace lcnet {

/// ParamSet files carry a shape header followed by the layers in order with
/// row-major matrices. Both encodings round-trip bit-exactly.
void save_params_json(const ParamSet& params, const std::string& path);
ParamSet load_params_json(const std::string& path);

void save_params_binary(const ParamSet& params, const std::string& path);
ParamSet load_params_binary(const std::string& path);

/// Everything needed to serve a trained model: kind, network, task table and
/// the scaler used during training. JSON, bit-exact round trip.
struct ModelBundle {
  MultiTaskModel model;
  Scaler scaler;
};

void save_model_bundle(const ModelBundle& bundle, const std::string& path);
ModelBundle load_model_bundle(const std::string& path);

}  // namespace lcnet
