#pragma once

// Single-document JSON checkpoints: model config, flat theta, optimizer state
// and training metadata. Doubles are written in shortest round-trip form, so
// save/load is bit-exact.

#include <memory>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hmti/nonlinearity.hpp"

namespace hmti {

struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  nlohmann::json model_config;
  Eigen::VectorXd theta;
  nlohmann::json optimizer = nlohmann::json::object();
  nlohmann::json metadata = nlohmann::json::object();

  static Checkpoint from_model(const NonlinearityModel& model);
  std::unique_ptr<NonlinearityModel> make_model() const;

  nlohmann::json to_json() const;
  static Checkpoint from_json(const nlohmann::json& j);
};

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

/// Reads a JSON object from disk (config files, checkpoints).
nlohmann::json read_json_file(const std::string& path);

}  // namespace hmti
