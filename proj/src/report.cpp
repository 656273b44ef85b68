#include "report.hpp"

#include <cstdint>
#include <fstream>

#include "errors.hpp"

namespace advgrad {

#define ADVGRAD_STR2(x) #x
#define ADVGRAD_STR(x) ADVGRAD_STR2(x)

std::string toolbox_version() {
  return ADVGRAD_STR(ADVGRAD_VERSION_MAJOR) "." ADVGRAD_STR(
      ADVGRAD_VERSION_MINOR) "." ADVGRAD_STR(ADVGRAD_VERSION_PATCH);
}

std::string toolbox_version_report() {
  return ADVGRAD_STR(ADVGRAD_VERSION_MAJOR) "." ADVGRAD_STR(
      ADVGRAD_VERSION_MINOR);
}

std::string file_digest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("digest: cannot open '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (is.eof()) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(h));
  return hex;
}

Json AttackReport::to_json() const {
  Json j = Json::object();
  j["version"] = version;
  j["attack"] = attack ? attack->to_json() : Json(nullptr);
  j["defense"] = defense;
  j["bpda"] = bpda;
  j["model_digest"] = model_digest;
  j["dataset"] = dataset_id;
  j["dataset_size"] = dataset_size;
  j["seed"] = seed;
  j["clean_acc"] = clean_acc;
  j["adv_acc"] = adv_acc ? Json(*adv_acc) : Json(nullptr);
  j["wall_time_s"] = wall_time_s;
  return j;
}

std::string AttackReport::to_line() const { return to_json().dump(); }

AttackReport AttackReport::from_json(const Json& j) {
  AttackReport r;
  r.version = j.at("version").get<std::string>();
  if (!j.at("attack").is_null())
    r.attack = AttackConfig::from_json(j.at("attack"));
  r.defense = j.at("defense").get<std::string>();
  r.bpda = j.at("bpda").get<bool>();
  r.model_digest = j.at("model_digest").get<std::string>();
  r.dataset_id = j.at("dataset").get<std::string>();
  r.dataset_size = j.at("dataset_size").get<std::uint64_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.clean_acc = j.at("clean_acc").get<double>();
  if (!j.at("adv_acc").is_null()) r.adv_acc = j.at("adv_acc").get<double>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  return r;
}

std::optional<std::string> validate_report(const Json& j) {
  if (!j.is_object()) return "report is not a JSON object";
  struct Field {
    const char* key;
    bool (*check)(const Json&);
    const char* want;
  };
  static const Field fields[] = {
      {"version", [](const Json& v) { return v.is_string(); }, "string"},
      {"attack",
       [](const Json& v) {
         return v.is_null() || (v.is_object() && v.contains("name"));
       },
       "null or object with name"},
      {"defense", [](const Json& v) { return v.is_string(); }, "string"},
      {"bpda", [](const Json& v) { return v.is_boolean(); }, "bool"},
      {"model_digest", [](const Json& v) { return v.is_string(); }, "string"},
      {"dataset", [](const Json& v) { return v.is_string(); }, "string"},
      {"dataset_size",
       [](const Json& v) { return v.is_number_unsigned(); }, "unsigned"},
      {"seed", [](const Json& v) { return v.is_number_unsigned(); },
       "unsigned"},
      {"clean_acc", [](const Json& v) { return v.is_number(); }, "number"},
      {"adv_acc", [](const Json& v) { return v.is_null() || v.is_number(); },
       "null or number"},
      {"wall_time_s", [](const Json& v) { return v.is_number(); }, "number"},
  };
  for (const auto& f : fields) {
    if (!j.contains(f.key))
      return std::string("missing key '") + f.key + "'";
    if (!f.check(j.at(f.key)))
      return std::string("key '") + f.key + "' must be " + f.want;
  }
  if (j.at("version").get<std::string>() != toolbox_version_report())
    return "version '" + j.at("version").get<std::string>() +
           "' does not match this build (" + toolbox_version_report() + ")";
  const double ca = j.at("clean_acc").get<double>();
  if (ca < 0.0 || ca > 1.0) return "clean_acc outside [0,1]";
  if (j.at("adv_acc").is_number()) {
    const double aa = j.at("adv_acc").get<double>();
    if (aa < 0.0 || aa > 1.0) return "adv_acc outside [0,1]";
  }
  return std::nullopt;
}

}  // namespace advgrad
