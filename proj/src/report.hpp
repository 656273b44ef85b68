#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "attack_config.hpp"

namespace advgrad {

std::string toolbox_version();         // MAJOR.MINOR.PATCH
std::string toolbox_version_report();  // MAJOR.MINOR, as carried by reports

// FNV-1a 64 over the file bytes, hex.
std::string file_digest(const std::string& path);

// A versioned benchmark record: results bound to the complete hyperparameter
// set that produced them. Serializes to one JSON object with keys in fixed
// order.
struct AttackReport {
  std::string version = toolbox_version_report();
  std::optional<AttackConfig> attack;
  std::string defense;  // pipeline grammar string, empty if none
  bool bpda = false;
  std::string model_digest;
  std::string dataset_id;
  std::uint64_t dataset_size = 0;
  std::uint64_t seed = 0;
  double clean_acc = 0.0;
  std::optional<double> adv_acc;
  double wall_time_s = 0.0;

  Json to_json() const;
  std::string to_line() const;  // single line, UTF-8
  static AttackReport from_json(const Json& j);
};

// Structural check: required keys present with the right types, version
// matches this build. Returns the problem description on failure.
std::optional<std::string> validate_report(const Json& j);

}  // namespace advgrad
