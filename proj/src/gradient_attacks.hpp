#pragma once

#include <cstdint>
#include <limits>

#include "attack_api.hpp"

namespace advgrad {

// Single-step Linf attack: x + eps * sign(grad of CE). Equivalent to
// perturb_iterative with nb_iter=1, eps_iter=eps, no random start.
Tensor gradient_sign_attack(const Tensor& x, const std::vector<int>& y,
                            const PredictFn& predict,
                            const PerturbBudget& budget, std::uint64_t seed);

// Single L2 step of length eps along the normalized gradient.
Tensor gradient_attack(const Tensor& x, const std::vector<int>& y,
                       const PredictFn& predict, const PerturbBudget& budget,
                       std::uint64_t seed);

Tensor basic_iterative(const Tensor& x, const std::vector<int>& y,
                       const PredictFn& predict, const PerturbBudget& budget,
                       int nb_iter, double eps_iter, std::uint64_t seed);

Tensor pgd(const Tensor& x, const std::vector<int>& y,
           const PredictFn& predict, const PerturbBudget& budget, int nb_iter,
           double eps_iter, std::uint64_t seed);

Tensor momentum_iterative(const Tensor& x, const std::vector<int>& y,
                          const PredictFn& predict,
                          const PerturbBudget& budget, int nb_iter,
                          double eps_iter, double momentum_decay,
                          std::uint64_t seed);

// Drives predict_features(x) toward the guide features under an Linf budget;
// same engine as the label attacks with an (features, MSE) pair.
Tensor fast_feature_attack(const Tensor& x, const Tensor& guide,
                           const PredictFn& predict_features,
                           const PerturbBudget& budget, int nb_iter,
                           double eps_iter, std::uint64_t seed);

struct CwResult {
  Tensor x_adv;
  bool success = false;
  double l2 = std::numeric_limits<double>::infinity();
};

// Carlini-Wagner L2: optimizes w with x~ = tanh-parameterized into the clip
// range, objective |x~ - x|_2^2 + c * margin, plain gradient descent, and a
// binary search over c (doubling on failure until the first success or
// 2^30 * initial_c, then bisecting). Keeps the successful example of
// smallest L2; failure returns the clean input with success=false.
CwResult carlini_wagner_l2(const Tensor& x, int y, const PredictFn& predict,
                           double kappa, int binary_search_steps, int max_iter,
                           double initial_c, double lr, double clip_min,
                           double clip_max, bool targeted, std::uint64_t seed);

}  // namespace advgrad
