#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "tensor.hpp"

namespace advgrad {

enum class Norm { kLinf, kL2 };

std::string norm_name(Norm n);
Norm norm_from_name(const std::string& s);

struct PerturbBudget {
  Norm norm = Norm::kLinf;
  double eps = 0.0;
  double clip_min = 0.0;
  double clip_max = 1.0;
  void validate() const;
};

// The perturbation target: class labels for classifier losses, a guide
// tensor for feature-matching losses. The loss decides which field it reads;
// perturb_iterative never looks inside.
struct AttackTarget {
  std::vector<int> labels;
  Tensor guide;

  static AttackTarget for_labels(std::vector<int> l) { return {std::move(l), {}}; }
  static AttackTarget for_guide(Tensor g) { return {{}, std::move(g)}; }
};

// Records the model's output for x on the given tape.
using PredictFn = std::function<ValueId(Tape&, ValueId)>;

// Scalar loss over (predict(x), y). `targeted` decides whether
// perturb_iterative descends (toward y) or ascends (away from y).
struct LossFn {
  std::function<ValueId(Tape&, ValueId pred, const AttackTarget& y)> fn;
  bool targeted = false;
  std::string name;
};

LossFn cross_entropy_loss(bool targeted);
LossFn feature_mse_loss();  // targeted by construction: minimizes toward guide

Tensor project_linf(const Tensor& v, const Tensor& center, double eps);
Tensor project_l2(const Tensor& v, const Tensor& center, double eps);

// The shared iterative perturbation engine. Each iteration takes the gradient
// of loss(predict(x~), y) wrt x~, optionally folds it into an L1-normalized
// momentum accumulator, steps by eps_iter along sign(g) (Linf) or g/|g|_2
// (L2), projects back into the eps-ball around x and clips to the valid
// range. A zero gradient under L2 makes that iteration a no-op. Never
// mutates x; fully determined by (inputs, config, seed).
Tensor perturb_iterative(const Tensor& x, const AttackTarget& y,
                         const PredictFn& predict, const LossFn& loss,
                         const PerturbBudget& budget, int nb_iter,
                         double eps_iter, bool rand_init,
                         double momentum_decay, std::uint64_t seed);

}  // namespace advgrad
