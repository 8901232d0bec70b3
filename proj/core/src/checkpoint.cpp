#include "hmti/checkpoint.hpp"

#include <fstream>

#include "hmti/errors.hpp"

namespace hmti {

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("expected a numeric array");
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Checkpoint Checkpoint::from_model(const NonlinearityModel& model) {
  Checkpoint c;
  c.model_config = model.config_json();
  c.theta = model.params();
  return c;
}

std::unique_ptr<NonlinearityModel> Checkpoint::make_model() const { return hmti::make_model(model_config, theta); }

nlohmann::json Checkpoint::to_json() const {
  return {{"format_version", format_version},
          {"model", model_config},
          {"theta", vector_to_json(theta)},
          {"optimizer", optimizer},
          {"metadata", metadata}};
}

Checkpoint Checkpoint::from_json(const nlohmann::json& j) {
  try {
    Checkpoint c;
    c.format_version = j.at("format_version").get<int>();
    if (c.format_version != kFormatVersion) {
      throw ConfigError("unsupported checkpoint format_version " + std::to_string(c.format_version));
    }
    c.model_config = j.at("model");
    c.theta = vector_from_json(j.at("theta"));
    c.optimizer = j.value("optimizer", nlohmann::json::object());
    c.metadata = j.value("metadata", nlohmann::json::object());
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << c.to_json().dump() << '\n';
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) { return Checkpoint::from_json(read_json_file(path)); }

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace hmti
