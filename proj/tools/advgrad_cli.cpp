// Command-line front end over the advgrad C API: training, attack/defense
// benchmarking, versioned JSON-line reports.
//
// Exit codes: 0 success, 2 usage error, 3 data/format error, 4 internal.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "advgrad.h"
#include "json.hpp"

using Json = nlohmann::ordered_json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

[[noreturn]] void die(advgrad_status st) {
  std::cerr << "error: " << advgrad_last_error() << "\n";
  switch (st) {
    case ADVGRAD_ERR_INVALID_ARGUMENT:
      std::exit(kExitUsage);
    case ADVGRAD_ERR_FORMAT:
      std::exit(kExitData);
    default:
      std::exit(kExitInternal);
  }
}

void check(advgrad_status st) {
  if (st != ADVGRAD_OK) die(st);
}

std::string take_string(char* s) {
  std::string out = s ? s : "";
  advgrad_string_free(s);
  return out;
}

struct DatasetArgs {
  std::string images, labels;
  long limit = 0;  // 0: all

  void add_to(CLI::App* cmd) {
    cmd->add_option("--images", images, "IDX image file")->required();
    cmd->add_option("--labels", labels, "IDX label file")->required();
    cmd->add_option("--limit", limit, "use only the first N examples");
  }

  advgrad_dataset* load() const {
    advgrad_dataset* ds = nullptr;
    check(advgrad_dataset_load_idx(images.c_str(), labels.c_str(), &ds));
    if (limit > 0 && limit < advgrad_dataset_size(ds)) {
      advgrad_dataset* sliced = nullptr;
      check(advgrad_dataset_slice(ds, 0, limit, &sliced));
      advgrad_dataset_free(ds);
      ds = sliced;
    }
    return ds;
  }
};

// Attack hyperparameter flags. Only flags the user actually set land in the
// config, so reports never carry silently defaulted values.
struct AttackArgs {
  std::string name;
  std::optional<std::string> loss;
  std::optional<double> eps, eps_iter, momentum_decay, confidence, initial_c,
      lr, theta, gamma, pixel_step;
  std::optional<int> nb_iter, binary_search_steps, max_iter, max_queries,
      neighborhood_size, rounds;
  std::optional<bool> rand_init, targeted;
  double clip_min = 0.0, clip_max = 1.0;

  // with_cw=false skips the cw-l2 flags; the training subcommand reuses
  // --lr for the outer loop and only accepts iterative inner attacks anyway.
  void add_to(CLI::App* cmd, bool required, bool with_cw = true) {
    auto* opt = cmd->add_option("--attack", name, "attack name");
    if (required) opt->required();
    cmd->add_option("--loss", loss, "loss function name (cross_entropy)");
    cmd->add_option("--eps", eps, "maximum perturbation magnitude");
    cmd->add_option("--eps-iter", eps_iter, "per-iteration step size");
    cmd->add_option("--nb-iter", nb_iter, "number of iterations");
    cmd->add_option("--rand-init", rand_init,
                    "random start inside the eps-ball (true/false)");
    cmd->add_option("--momentum-decay", momentum_decay,
                    "momentum decay factor mu");
    if (with_cw) {
      cmd->add_option("--confidence", confidence, "margin kappa (cw-l2)");
      cmd->add_option("--binary-search-steps", binary_search_steps,
                      "binary search rounds over c (cw-l2)");
      cmd->add_option("--max-iter", max_iter, "inner iterations (cw-l2)");
      cmd->add_option("--initial-c", initial_c, "initial trade-off c (cw-l2)");
      cmd->add_option("--lr", lr, "inner learning rate (cw-l2)");
      cmd->add_option("--targeted", targeted, "targeted mode (cw-l2)");
    }
    cmd->add_option("--theta", theta, "per-step pixel change (jsma)");
    cmd->add_option("--gamma", gamma, "max fraction of pixels (jsma)");
    cmd->add_option("--max-queries", max_queries,
                    "query budget (black-box attacks)");
    cmd->add_option("--pixel-step", pixel_step,
                    "per-pixel perturbation (local-search)");
    cmd->add_option("--neighborhood-size", neighborhood_size,
                    "pixels perturbed per round (local-search)");
    cmd->add_option("--rounds", rounds, "greedy rounds (local-search)");
    cmd->add_option("--clip-min", clip_min, "valid input range lower bound");
    cmd->add_option("--clip-max", clip_max, "valid input range upper bound");
  }

  Json to_config() const {
    Json c = Json::object();
    c["name"] = name;
    if (loss) c["loss"] = *loss;
    if (eps) c["eps"] = *eps;
    if (nb_iter) c["nb_iter"] = *nb_iter;
    if (eps_iter) c["eps_iter"] = *eps_iter;
    if (rand_init) c["rand_init"] = *rand_init;
    if (momentum_decay) c["momentum_decay"] = *momentum_decay;
    if (confidence) c["confidence"] = *confidence;
    if (binary_search_steps) c["binary_search_steps"] = *binary_search_steps;
    if (max_iter) c["max_iter"] = *max_iter;
    if (initial_c) c["initial_c"] = *initial_c;
    if (lr) c["lr"] = *lr;
    if (targeted) c["targeted"] = *targeted;
    if (theta) c["theta"] = *theta;
    if (gamma) c["gamma"] = *gamma;
    if (name == "jsma") c["target_rule"] = "next_class";
    if (max_queries) c["max_queries"] = *max_queries;
    if (pixel_step) c["pixel_step"] = *pixel_step;
    if (neighborhood_size) c["neighborhood_size"] = *neighborhood_size;
    if (rounds) c["rounds"] = *rounds;
    c["clip_min"] = clip_min;
    c["clip_max"] = clip_max;
    return c;
  }

  // every required hyperparameter must be an explicit flag
  void check_complete() const {
    char* list = nullptr;
    advgrad_status st = advgrad_attack_required_params(name.c_str(), &list);
    if (st != ADVGRAD_OK) {
      char* names = nullptr;
      advgrad_attack_list(&names);
      std::cerr << "error: unknown attack '" << name
                << "'. Available attacks: " << take_string(names) << "\n";
      std::exit(kExitUsage);
    }
    const Json cfg = to_config();
    std::string missing;
    std::string csv = take_string(list);
    std::size_t pos = 0;
    while (pos <= csv.size() && !csv.empty()) {
      const std::size_t comma = csv.find(',', pos);
      std::string param = csv.substr(
          pos, comma == std::string::npos ? std::string::npos : comma - pos);
      if (!cfg.contains(param)) {
        std::string flag = "--" + param;
        for (auto& ch : flag)
          if (ch == '_') ch = '-';
        missing += (missing.empty() ? "" : ", ") + flag;
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!missing.empty()) {
      std::cerr << "error: attack '" << name
                << "' requires explicit flags for reporting: " << missing
                << "\n";
      std::exit(kExitUsage);
    }
  }
};

unsigned long long default_seed() {
  if (const char* env = std::getenv("ADVGRAD_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      std::cerr << "error: ADVGRAD_SEED is not a number: " << env << "\n";
      std::exit(kExitUsage);
    }
  }
  return 0;
}

void emit_report(const std::string& line, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << line << "\n";
    return;
  }
  std::ofstream os(out_path, std::ios::app);
  if (!os) {
    std::cerr << "error: cannot open '" << out_path << "'\n";
    std::exit(kExitData);
  }
  os << line << "\n";
}

int run_evaluation(const std::string& model_path, const DatasetArgs& data,
                   const AttackArgs* attack, const std::string& defense,
                   bool bpda, unsigned long long seed,
                   const std::string& out_path) {
  advgrad_model* model = nullptr;
  check(advgrad_model_load(model_path.c_str(), &model));
  advgrad_dataset* ds = data.load();

  Json options = Json::object();
  options["attack"] = attack ? attack->to_config() : Json(nullptr);
  options["defense"] = defense;
  options["bpda"] = bpda;
  options["seed"] = seed;
  char* digest = nullptr;
  check(advgrad_file_digest(model_path.c_str(), &digest));
  options["model_digest"] = take_string(digest);
  options["dataset_id"] =
      data.images + ";" + data.labels +
      (data.limit > 0 ? (";limit=" + std::to_string(data.limit)) : "");

  char* report = nullptr;
  check(advgrad_evaluate(model, ds, options.dump().c_str(), &report));
  emit_report(take_string(report), out_path);

  advgrad_dataset_free(ds);
  advgrad_model_free(model);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"advgrad: adversarial attack/defense benchmark toolkit"};
  app.set_version_flag("--version", advgrad_version());
  app.require_subcommand(1);

  // ---- train ----
  auto* train = app.add_subcommand("train", "train a model (optionally adversarially)");
  DatasetArgs train_data;
  train_data.add_to(train);
  std::string arch = "mlp:64-32-10", model_out = "model.advg";
  int epochs = 10, batch_size = 32;
  double lr = 0.1;
  unsigned long long train_seed = default_seed();
  bool adv = false;
  train->add_option("--arch", arch, "architecture descriptor");
  train->add_option("--out", model_out, "output model path")->required();
  train->add_option("--epochs", epochs, "training epochs");
  train->add_option("--batch", batch_size, "minibatch size");
  train->add_option("--lr", lr, "learning rate");
  train->add_option("--seed", train_seed, "seed (default: ADVGRAD_SEED or 0)");
  train->add_flag("--adv", adv, "adversarial (Madry) training");
  AttackArgs inner;
  inner.name = "pgd-linf";
  inner.add_to(train, false, /*with_cw=*/false);

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "clean accuracy, optionally defended");
  DatasetArgs eval_data;
  eval_data.add_to(eval);
  std::string eval_model, eval_defense, eval_out;
  unsigned long long eval_seed = default_seed();
  eval->add_option("--model", eval_model, "model file")->required();
  eval->add_option("--defense", eval_defense, "defense pipeline spec");
  eval->add_option("--seed", eval_seed, "seed");
  eval->add_option("--out", eval_out, "append report line to this file");

  // ---- attack ----
  auto* attack = app.add_subcommand("attack", "benchmark an attack on a model");
  DatasetArgs attack_data;
  attack_data.add_to(attack);
  std::string attack_model, attack_out;
  unsigned long long attack_seed = default_seed();
  attack->add_option("--model", attack_model, "model file")->required();
  attack->add_option("--seed", attack_seed, "seed");
  attack->add_option("--out", attack_out, "append report line to this file");
  AttackArgs attack_args;
  attack_args.add_to(attack, true);

  // ---- defend-eval ----
  auto* defend = app.add_subcommand(
      "defend-eval", "attack a defended model, optionally with BPDA");
  DatasetArgs defend_data;
  defend_data.add_to(defend);
  std::string defend_model, defend_defense, defend_out;
  unsigned long long defend_seed = default_seed();
  bool bpda = false;
  defend->add_option("--model", defend_model, "model file")->required();
  defend->add_option("--defense", defend_defense, "defense pipeline spec")
      ->required();
  defend->add_flag("--bpda", bpda,
                   "straight-through backward for non-differentiable stages");
  defend->add_option("--seed", defend_seed, "seed");
  defend->add_option("--out", defend_out, "append report line to this file");
  AttackArgs defend_args;
  defend_args.add_to(defend, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (train->parsed()) {
    advgrad_dataset* ds = train_data.load();
    advgrad_model* model = nullptr;
    check(advgrad_model_init(arch.c_str(), train_seed, &model));
    Json cfg = Json::object();
    cfg["epochs"] = epochs;
    cfg["batch_size"] = batch_size;
    cfg["lr"] = lr;
    cfg["seed"] = train_seed;
    if (adv) {
      inner.check_complete();
      cfg["inner_attack"] = inner.to_config();
    }
    char* log = nullptr;
    check(advgrad_train(model, ds, cfg.dump().c_str(), &log));
    std::cout << take_string(log);
    check(advgrad_model_save(model, model_out.c_str()));
    std::cout << "saved " << model_out << "\n";
    advgrad_model_free(model);
    advgrad_dataset_free(ds);
    return 0;
  }
  if (eval->parsed())
    return run_evaluation(eval_model, eval_data, nullptr, eval_defense, false,
                          eval_seed, eval_out);
  if (attack->parsed()) {
    attack_args.check_complete();
    return run_evaluation(attack_model, attack_data, &attack_args, "", false,
                          attack_seed, attack_out);
  }
  if (defend->parsed()) {
    const AttackArgs* a = defend_args.name.empty() ? nullptr : &defend_args;
    if (a) defend_args.check_complete();
    return run_evaluation(defend_model, defend_data, a, defend_defense, bpda,
                          defend_seed, defend_out);
  }
  return kExitUsage;
}
