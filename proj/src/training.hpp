#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "attack_api.hpp"
#include "attack_config.hpp"
#include "defenses.hpp"
#include "models.hpp"

namespace advgrad {

struct Dataset {
  Tensor images;  // N x H x W (or N x D), values in [0,1]
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  // One example kept as a batch of one.
  Tensor example(std::size_t i) const;
  Dataset slice(std::size_t offset, std::size_t count) const;
};

struct TrainConfig {
  int epochs = 1;
  int batch_size = 32;
  double lr = 0.1;
  std::uint64_t seed = 0;
  std::optional<AttackConfig> inner_attack;  // adversarial training only
};

// Logits of a defended (or bare) model over raw-image-shaped batches; with
// `bpda` every non-differentiable defense stage gets a straight-through
// backward. Forward values are unaffected by the bpda flag.
PredictFn make_predict(const Model& model, const DefensePipeline* defense,
                       bool bpda);
// Same composition without a tape, for black-box queries and plain accuracy.
Tensor predict_plain(const Model& model, const DefensePipeline* defense,
                     const Tensor& x);

// Dispatch a configured attack on one example (x shaped {1, ...} in raw image
// layout). The attack sees the defended model when a defense is given.
Tensor run_attack_single(const AttackConfig& cfg, const Model& model,
                         const DefensePipeline* defense, bool bpda,
                         const Tensor& x1, int y, std::uint64_t seed);

// Minibatch SGD on softmax cross-entropy; deterministic under cfg.seed,
// shuffling included. Per-epoch mean loss lines go to `log` when given.
void train(Model& model, const Dataset& dataset, const TrainConfig& cfg,
           std::ostream* log = nullptr);

// Madry-style: every minibatch is regenerated adversarially against the
// current parameters before the SGD step. cfg.inner_attack is required and
// must be a perturb_iterative-family attack.
void adversarial_train(Model& model, const Dataset& dataset,
                       const TrainConfig& cfg, std::ostream* log = nullptr);

struct EvalResult {
  double clean_acc = 0.0;
  bool has_adv = false;
  double adv_acc = 0.0;
};

// Accuracy under argmax of logits, after the optional per-example attack
// and/or defense preprocessing. Side-effect free on the model.
EvalResult evaluate(const Model& model, const Dataset& dataset,
                    const AttackConfig* attack, const DefensePipeline* defense,
                    bool bpda, std::uint64_t seed);

}  // namespace advgrad
