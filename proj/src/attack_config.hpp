#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace advgrad {

using Json = nlohmann::ordered_json;

// A named attack plus every hyperparameter it consumes. Serializes with keys
// in insertion order; hyperparameters an attack does not use are absent, not
// defaulted.
struct AttackConfig {
  std::string name;
  Json params = Json::object();

  Json to_json() const {
    Json j = Json::object();
    j["name"] = name;
    for (auto& [k, v] : params.items()) j[k] = v;
    return j;
  }
  static AttackConfig from_json(const Json& j) {
    AttackConfig c;
    c.name = j.at("name").get<std::string>();
    for (auto& [k, v] : j.items())
      if (k != "name") c.params[k] = v;
    return c;
  }

  bool has(const std::string& k) const { return params.contains(k); }
  double num(const std::string& k) const { return params.at(k).get<double>(); }
  int integer(const std::string& k) const { return params.at(k).get<int>(); }
  bool flag(const std::string& k) const { return params.at(k).get<bool>(); }
  std::string str(const std::string& k) const {
    return params.at(k).get<std::string>();
  }
};

// Names of all attacks the dispatcher knows.
std::vector<std::string> known_attacks();
// Hyperparameter flags an attack requires; reporting refuses silent defaults.
std::vector<std::string> required_params(const std::string& attack);
// Shipped default hyperparameters (complete configs, used by presets only --
// the CLI still requires explicit flags where the reporting contract says so).
AttackConfig preset(const std::string& attack);

}  // namespace advgrad
