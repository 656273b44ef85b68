#include "attack_config.hpp"

#include <stdexcept>

namespace advgrad {

std::vector<std::string> known_attacks() {
  return {"gradient",  "gradient-sign", "bim-linf",     "bim-l2",
          "pgd-linf",  "pgd-l2",        "mi-linf",      "mi-l2",
          "cw-l2",     "single-pixel",  "local-search", "jsma"};
}

std::vector<std::string> required_params(const std::string& attack) {
  if (attack == "gradient" || attack == "gradient-sign" || attack == "fgsm")
    return {"loss", "eps"};
  if (attack == "bim-linf" || attack == "bim-l2")
    return {"loss", "eps", "nb_iter", "eps_iter"};
  if (attack == "pgd-linf" || attack == "pgd-l2")
    return {"loss", "eps", "nb_iter", "eps_iter", "rand_init"};
  if (attack == "mi-linf" || attack == "mi-l2")
    return {"loss", "eps", "nb_iter", "eps_iter", "momentum_decay"};
  if (attack == "cw-l2")
    return {"confidence", "binary_search_steps", "max_iter", "initial_c", "lr"};
  if (attack == "single-pixel") return {"max_queries"};
  if (attack == "local-search")
    return {"max_queries", "pixel_step", "neighborhood_size", "rounds"};
  if (attack == "jsma") return {"theta", "gamma"};
  throw std::invalid_argument("unknown attack '" + attack + "'");
}

AttackConfig preset(const std::string& attack) {
  AttackConfig c;
  c.name = attack;
  auto& p = c.params;
  if (attack == "gradient" || attack == "gradient-sign") {
    p["loss"] = "cross_entropy";
    p["eps"] = 0.3;
  } else if (attack == "bim-linf" || attack == "pgd-linf" ||
             attack == "mi-linf") {
    p["loss"] = "cross_entropy";
    p["eps"] = 0.3;
    p["nb_iter"] = 40;
    p["eps_iter"] = 0.01;
    if (attack == "pgd-linf") p["rand_init"] = true;
    if (attack == "mi-linf") p["momentum_decay"] = 1.0;
  } else if (attack == "bim-l2" || attack == "pgd-l2" || attack == "mi-l2") {
    p["loss"] = "cross_entropy";
    p["eps"] = 2.0;
    p["nb_iter"] = 40;
    p["eps_iter"] = 0.1;
    if (attack == "pgd-l2") p["rand_init"] = true;
    if (attack == "mi-l2") p["momentum_decay"] = 1.0;
  } else if (attack == "cw-l2") {
    p["confidence"] = 0.0;
    p["binary_search_steps"] = 5;
    p["max_iter"] = 100;
    p["initial_c"] = 0.1;
    p["lr"] = 0.05;
  } else if (attack == "single-pixel") {
    p["max_queries"] = 1000;
  } else if (attack == "local-search") {
    p["max_queries"] = 2000;
    p["pixel_step"] = 0.5;  // half the clip range
    p["neighborhood_size"] = 5;
    p["rounds"] = 10;
  } else if (attack == "jsma") {
    p["theta"] = 1.0;
    p["gamma"] = 0.2;
    p["target_rule"] = "next_class";
  } else {
    throw std::invalid_argument("unknown attack '" + attack + "'");
  }
  p["clip_min"] = 0.0;
  p["clip_max"] = 1.0;
  return c;
}

}  // namespace advgrad
