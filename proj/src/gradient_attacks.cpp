#include "gradient_attacks.hpp"

#include <cmath>
#include <stdexcept>

#include "attack_config.hpp"

namespace advgrad {

Tensor gradient_sign_attack(const Tensor& x, const std::vector<int>& y,
                            const PredictFn& predict,
                            const PerturbBudget& budget, std::uint64_t seed) {
  if (budget.norm != Norm::kLinf)
    throw std::invalid_argument("gradient_sign_attack: requires an Linf budget");
  return perturb_iterative(x, AttackTarget::for_labels(y), predict,
                           cross_entropy_loss(false), budget, /*nb_iter=*/1,
                           /*eps_iter=*/budget.eps, /*rand_init=*/false,
                           /*momentum_decay=*/0.0, seed);
}

Tensor gradient_attack(const Tensor& x, const std::vector<int>& y,
                       const PredictFn& predict, const PerturbBudget& budget,
                       std::uint64_t seed) {
  if (budget.norm != Norm::kL2)
    throw std::invalid_argument("gradient_attack: requires an L2 budget");
  return perturb_iterative(x, AttackTarget::for_labels(y), predict,
                           cross_entropy_loss(false), budget, 1, budget.eps,
                           false, 0.0, seed);
}

Tensor basic_iterative(const Tensor& x, const std::vector<int>& y,
                       const PredictFn& predict, const PerturbBudget& budget,
                       int nb_iter, double eps_iter, std::uint64_t seed) {
  return perturb_iterative(x, AttackTarget::for_labels(y), predict,
                           cross_entropy_loss(false), budget, nb_iter,
                           eps_iter, false, 0.0, seed);
}

Tensor pgd(const Tensor& x, const std::vector<int>& y,
           const PredictFn& predict, const PerturbBudget& budget, int nb_iter,
           double eps_iter, std::uint64_t seed) {
  return perturb_iterative(x, AttackTarget::for_labels(y), predict,
                           cross_entropy_loss(false), budget, nb_iter,
                           eps_iter, true, 0.0, seed);
}

Tensor momentum_iterative(const Tensor& x, const std::vector<int>& y,
                          const PredictFn& predict,
                          const PerturbBudget& budget, int nb_iter,
                          double eps_iter, double momentum_decay,
                          std::uint64_t seed) {
  return perturb_iterative(x, AttackTarget::for_labels(y), predict,
                           cross_entropy_loss(false), budget, nb_iter,
                           eps_iter, false, momentum_decay, seed);
}

Tensor fast_feature_attack(const Tensor& x, const Tensor& guide,
                           const PredictFn& predict_features,
                           const PerturbBudget& budget, int nb_iter,
                           double eps_iter, std::uint64_t seed) {
  if (budget.norm != Norm::kLinf)
    throw std::invalid_argument("fast_feature_attack: requires an Linf budget");
  return perturb_iterative(x, AttackTarget::for_guide(guide),
                           predict_features, feature_mse_loss(), budget,
                           nb_iter, eps_iter, false, 0.0, seed);
}

namespace {

// margin condition the success flag promises: argmax != y with margin >= kappa
// (untargeted), or argmax == y with margin >= kappa (targeted)
bool cw_satisfied(const Tensor& logits, int y, double kappa, bool targeted) {
  const std::size_t K = logits.shape()[1];
  double zy = logits[static_cast<std::size_t>(y)];
  double zo = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k)
    if (static_cast<int>(k) != y) zo = std::max(zo, logits[k]);
  return targeted ? (zy - zo >= kappa) : (zo - zy >= kappa);
}

}  // namespace

CwResult carlini_wagner_l2(const Tensor& x, int y, const PredictFn& predict,
                           double kappa, int binary_search_steps, int max_iter,
                           double initial_c, double lr, double clip_min,
                           double clip_max, bool targeted, std::uint64_t seed) {
  (void)seed;  // the optimization is deterministic; seed kept for API symmetry
  if (!(clip_min < clip_max))
    throw std::invalid_argument("carlini_wagner_l2: clip_min must be < clip_max");
  if (binary_search_steps < 1 || max_iter < 1 || !(initial_c > 0.0) ||
      !(lr > 0.0))
    throw std::invalid_argument("carlini_wagner_l2: invalid search parameters");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] < clip_min || x[i] > clip_max)
      throw std::invalid_argument("carlini_wagner_l2: x outside clip range");

  const double half = (clip_max - clip_min) / 2.0;
  const double mid = clip_min + half;

  CwResult best;
  best.x_adv = x;

  auto consider = [&](const Tensor& cand, const Tensor& logits) {
    if (!cw_satisfied(logits, y, kappa, targeted)) return;
    const double d = l2_dist(cand, x);
    if (d < best.l2) {
      best.success = true;
      best.l2 = d;
      best.x_adv = cand;
    }
  };

  // the clean input may already satisfy the margin: zero perturbation
  {
    Tape tape;
    ValueId xid = tape.leaf(x);
    consider(x, tape.value(predict(tape, xid)));
  }

  // w-space start: atanh of x mapped into (-1, 1)
  Tensor w_init(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z = (x[i] - mid) / half;
    z = std::min(1.0 - 1e-6, std::max(-1.0 + 1e-6, z));
    w_init[i] = std::atanh(z);
  }

  double c = initial_c;
  double c_lo = 0.0;
  double c_hi = std::numeric_limits<double>::infinity();
  const double c_cap = std::ldexp(initial_c, 30);

  for (int round = 0; round < binary_search_steps; ++round) {
    Tensor w = w_init;
    bool round_success = false;
    for (int it = 0; it < max_iter; ++it) {
      Tape tape;
      ValueId wid = tape.leaf(w);
      ValueId xt = tape.add_const(tape.scale(tape.tanh(wid), half), mid);
      ValueId xleaf = tape.leaf(x);
      ValueId diff = tape.sub(xt, xleaf);
      ValueId dist = tape.sum(tape.mul(diff, diff));
      ValueId logits = predict(tape, xt);
      ValueId margin = tape.cw_margin(logits, {y}, kappa, targeted);
      ValueId obj = tape.add(dist, tape.scale(margin, c));
      if (cw_satisfied(tape.value(logits), y, kappa, targeted)) {
        round_success = true;
        consider(tape.value(xt), tape.value(logits));
      }
      Tensor g = tape.backward(obj).wrt(wid);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
    }
    if (round_success) {
      c_hi = c;
    } else {
      c_lo = c;
    }
    if (std::isinf(c_hi)) {
      if (c >= c_cap) break;  // doubling exhausted without a success
      c = std::min(c * 2.0, c_cap);
    } else {
      c = (c_lo + c_hi) / 2.0;
    }
  }
  return best;
}

}  // namespace advgrad
