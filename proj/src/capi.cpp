#include "advgrad.h"

#include <chrono>
#include <cstring>
#include <memory>
#include <sstream>
#include <string>

#include "errors.hpp"
#include "idx.hpp"
#include "models.hpp"
#include "report.hpp"
#include "training.hpp"

using namespace advgrad;

struct advgrad_model {
  std::unique_ptr<Model> impl;
};

struct advgrad_dataset {
  Dataset impl;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

// Maps C++ errors onto status codes; FormatError carries malformed-input
// semantics, invalid_argument/out_of_range are caller mistakes.
template <typename Fn>
advgrad_status guarded(Fn&& fn) {
  try {
    fn();
    return ADVGRAD_OK;
  } catch (const FormatError& e) {
    g_last_error = e.what();
    return ADVGRAD_ERR_FORMAT;
  } catch (const Json::exception& e) {
    g_last_error = e.what();
    return ADVGRAD_ERR_FORMAT;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return ADVGRAD_ERR_INVALID_ARGUMENT;
  } catch (const std::out_of_range& e) {
    g_last_error = e.what();
    return ADVGRAD_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ADVGRAD_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return ADVGRAD_ERR_INTERNAL;
  }
}

advgrad_status require(bool ok, const char* msg) {
  if (ok) return ADVGRAD_OK;
  g_last_error = msg;
  return ADVGRAD_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* advgrad_version(void) {
  static const std::string v = toolbox_version();
  return v.c_str();
}

const char* advgrad_version_report(void) {
  static const std::string v = toolbox_version_report();
  return v.c_str();
}

const char* advgrad_last_error(void) { return g_last_error.c_str(); }

void advgrad_string_free(char* s) { std::free(s); }

advgrad_status advgrad_dataset_load_idx(const char* images_path,
                                        const char* labels_path,
                                        advgrad_dataset** out) {
  if (auto st = require(images_path && labels_path && out,
                        "dataset_load_idx: null argument"))
    return st;
  return guarded([&] {
    auto ds = std::make_unique<advgrad_dataset>();
    ds->impl = load_idx(images_path, labels_path);
    *out = ds.release();
  });
}

void advgrad_dataset_free(advgrad_dataset* ds) { delete ds; }

long advgrad_dataset_size(const advgrad_dataset* ds) {
  return ds ? static_cast<long>(ds->impl.size()) : -1;
}

advgrad_status advgrad_dataset_slice(const advgrad_dataset* ds, long offset,
                                     long count, advgrad_dataset** out) {
  if (auto st = require(ds && out && offset >= 0 && count > 0,
                        "dataset_slice: bad argument"))
    return st;
  return guarded([&] {
    auto sliced = std::make_unique<advgrad_dataset>();
    sliced->impl = ds->impl.slice(static_cast<std::size_t>(offset),
                                  static_cast<std::size_t>(count));
    *out = sliced.release();
  });
}

advgrad_status advgrad_model_init(const char* arch, unsigned long long seed,
                                  advgrad_model** out) {
  if (auto st = require(arch && out, "model_init: null argument")) return st;
  return guarded([&] {
    auto m = std::make_unique<advgrad_model>();
    m->impl = init_params(arch, seed);
    *out = m.release();
  });
}

advgrad_status advgrad_model_load(const char* path, advgrad_model** out) {
  if (auto st = require(path && out, "model_load: null argument")) return st;
  return guarded([&] {
    auto m = std::make_unique<advgrad_model>();
    m->impl = load_model(path);
    *out = m.release();
  });
}

advgrad_status advgrad_model_save(const advgrad_model* model,
                                  const char* path) {
  if (auto st = require(model && path, "model_save: null argument")) return st;
  return guarded([&] { save_model(*model->impl, path); });
}

void advgrad_model_free(advgrad_model* model) { delete model; }

advgrad_status advgrad_model_descriptor(const advgrad_model* model,
                                        char** out) {
  if (auto st = require(model && out, "model_descriptor: null argument"))
    return st;
  return guarded([&] { *out = dup_string(model->impl->descriptor()); });
}

advgrad_status advgrad_train(advgrad_model* model,
                             const advgrad_dataset* dataset,
                             const char* config_json, char** log_out) {
  if (auto st =
          require(model && dataset && config_json, "train: null argument"))
    return st;
  return guarded([&] {
    const Json j = Json::parse(config_json);
    TrainConfig cfg;
    cfg.epochs = j.at("epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.lr = j.at("lr").get<double>();
    cfg.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("inner_attack") && !j.at("inner_attack").is_null())
      cfg.inner_attack = AttackConfig::from_json(j.at("inner_attack"));
    std::ostringstream log;
    if (cfg.inner_attack)
      adversarial_train(*model->impl, dataset->impl, cfg, &log);
    else
      train(*model->impl, dataset->impl, cfg, &log);
    if (log_out) *log_out = dup_string(log.str());
  });
}

advgrad_status advgrad_evaluate(const advgrad_model* model,
                                const advgrad_dataset* dataset,
                                const char* options_json, char** report_out) {
  if (auto st = require(model && dataset && options_json && report_out,
                        "evaluate: null argument"))
    return st;
  return guarded([&] {
    const Json j = Json::parse(options_json);
    std::optional<AttackConfig> attack;
    if (j.contains("attack") && !j.at("attack").is_null())
      attack = AttackConfig::from_json(j.at("attack"));
    const std::string defense_spec = j.value("defense", std::string{});
    const DefensePipeline pipeline = DefensePipeline::parse(defense_spec);
    const bool bpda = j.value("bpda", false);
    const std::uint64_t seed = j.value("seed", std::uint64_t{0});

    // hyperparameter completeness: refuse silent defaults in reports
    if (attack) {
      std::string missing;
      for (const auto& p : required_params(attack->name))
        if (!attack->has(p)) missing += (missing.empty() ? "" : ", ") + p;
      if (!missing.empty())
        throw std::invalid_argument("attack '" + attack->name +
                                    "': missing hyperparameters: " + missing);
    }

    const auto t0 = std::chrono::steady_clock::now();
    EvalResult res =
        evaluate(*model->impl, dataset->impl, attack ? &*attack : nullptr,
                 pipeline.empty() ? nullptr : &pipeline, bpda, seed);
    const auto t1 = std::chrono::steady_clock::now();

    AttackReport report;
    report.attack = attack;
    report.defense = pipeline.describe();
    report.bpda = bpda;
    report.model_digest = j.value("model_digest", std::string{});
    report.dataset_id = j.value("dataset_id", std::string{});
    report.dataset_size = dataset->impl.size();
    report.seed = seed;
    report.clean_acc = res.clean_acc;
    if (res.has_adv) report.adv_acc = res.adv_acc;
    report.wall_time_s =
        std::chrono::duration<double>(t1 - t0).count();
    *report_out = dup_string(report.to_line());
  });
}

advgrad_status advgrad_report_validate(const char* report_json) {
  if (auto st = require(report_json != nullptr, "report_validate: null"))
    return st;
  auto st = guarded([&] {
    const Json j = Json::parse(report_json);
    if (auto problem = validate_report(j)) throw FormatError(*problem);
  });
  return st;
}

advgrad_status advgrad_attack_list(char** out) {
  if (auto st = require(out != nullptr, "attack_list: null argument"))
    return st;
  return guarded([&] {
    std::string csv;
    for (const auto& n : known_attacks()) {
      if (!csv.empty()) csv += ',';
      csv += n;
    }
    *out = dup_string(csv);
  });
}

advgrad_status advgrad_attack_required_params(const char* attack, char** out) {
  if (auto st =
          require(attack && out, "attack_required_params: null argument"))
    return st;
  return guarded([&] {
    std::string csv;
    for (const auto& p : required_params(attack)) {
      if (!csv.empty()) csv += ',';
      csv += p;
    }
    *out = dup_string(csv);
  });
}

advgrad_status advgrad_file_digest(const char* path, char** digest_out) {
  if (auto st = require(path && digest_out, "file_digest: null argument"))
    return st;
  return guarded([&] { *digest_out = dup_string(file_digest(path)); });
}

}  // extern "C"
