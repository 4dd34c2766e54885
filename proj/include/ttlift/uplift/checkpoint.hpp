#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ttlift/uplift/config.hpp"
#include "ttlift/uplift/model.hpp"

namespace ttlift::uplift {

struct NamedTensor {
  std::string name;
  Eigen::MatrixXd value;
};

/// On-disk layout (little endian):
///   8 bytes   magic "TTLIFT01"
///   8 bytes   header length H (uint64)
///   H bytes   JSON header {"format", "model": {...}, "tensors": [{"name", "rows", "cols"}], "meta": {...}}
///   then      each tensor's rows*cols float64 values, column-major, in header order
struct Checkpoint {
  ModelConfig model;
  std::vector<NamedTensor> tensors;
  nlohmann::json meta = nlohmann::json::object();

  const NamedTensor* find(const std::string& name) const;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Serialized bytes; save_checkpoint writes them atomically.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Throws DataError on a malformed or truncated file.
Checkpoint load_checkpoint(const std::string& path);

template <typename S>
void append_parameters(const UpliftModel<S>& model, std::vector<NamedTensor>& out) {
  model.visit([&](const std::string& name, const Param<S>& p) {
    out.push_back({name, p.value.template cast<double>()});
  });
}

/// Rebuilds a model from the checkpoint's config and parameter tensors.
template <typename S>
UpliftModel<S> model_from_checkpoint(const Checkpoint& ckpt) {
  UpliftModel<S> model(ckpt.model);
  model.visit([&](const std::string& name, Param<S>& p) {
    const NamedTensor* t = ckpt.find(name);
    if (!t) throw DataError("checkpoint: missing tensor '" + name + "'");
    if (t->value.rows() != p.value.rows() || t->value.cols() != p.value.cols())
      throw DataError("checkpoint: shape mismatch for '" + name + "'");
    p.value = t->value.template cast<S>();
  });
  return model;
}

}  // namespace ttlift::uplift
