#include "attack_api.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace advgrad {

std::string norm_name(Norm n) { return n == Norm::kLinf ? "linf" : "l2"; }

Norm norm_from_name(const std::string& s) {
  if (s == "linf") return Norm::kLinf;
  if (s == "l2") return Norm::kL2;
  throw std::invalid_argument("unknown norm '" + s + "' (expected linf or l2)");
}

void PerturbBudget::validate() const {
  if (!(clip_min < clip_max))
    throw std::invalid_argument("budget: clip_min must be < clip_max");
  if (!(eps >= 0.0) || !std::isfinite(eps))
    throw std::invalid_argument("budget: eps must be finite and >= 0");
}

LossFn cross_entropy_loss(bool targeted) {
  LossFn l;
  l.targeted = targeted;
  l.name = "cross_entropy";
  l.fn = [](Tape& tape, ValueId pred, const AttackTarget& y) {
    return tape.softmax_cross_entropy(pred, y.labels);
  };
  return l;
}

LossFn feature_mse_loss() {
  LossFn l;
  l.targeted = true;
  l.name = "mse";
  l.fn = [](Tape& tape, ValueId pred, const AttackTarget& y) {
    ValueId guide = tape.leaf(y.guide);
    return tape.mse(pred, guide);
  };
  return l;
}

Tensor project_linf(const Tensor& v, const Tensor& center, double eps) {
  if (!v.same_shape(center))
    throw std::invalid_argument("project_linf: shape mismatch");
  Tensor out = v;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double lo = center[i] - eps, hi = center[i] + eps;
    out[i] = std::min(hi, std::max(lo, out[i]));
  }
  return out;
}

Tensor project_l2(const Tensor& v, const Tensor& center, double eps) {
  if (!v.same_shape(center))
    throw std::invalid_argument("project_l2: shape mismatch");
  const double dist = l2_dist(v, center);
  if (dist <= eps) return v;
  Tensor out = v;
  const double s = eps / dist;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = center[i] + s * (out[i] - center[i]);
  return out;
}

namespace {

Tensor random_init_delta(const PerturbBudget& budget, const Shape& shape,
                         std::mt19937_64& rng) {
  Tensor delta(shape);
  if (budget.eps == 0.0) return delta;
  if (budget.norm == Norm::kLinf) {
    std::uniform_real_distribution<double> u(-budget.eps, budget.eps);
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = u(rng);
  } else {
    // gaussian direction, radius eps * U^(1/d): uniform in the L2 ball
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = g(rng);
    const double norm = l2_norm(delta);
    if (norm > 0.0) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const double radius =
          budget.eps *
          std::pow(u(rng), 1.0 / static_cast<double>(delta.size()));
      for (std::size_t i = 0; i < delta.size(); ++i)
        delta[i] *= radius / norm;
    }
  }
  return delta;
}

}  // namespace

Tensor perturb_iterative(const Tensor& x, const AttackTarget& y,
                         const PredictFn& predict, const LossFn& loss,
                         const PerturbBudget& budget, int nb_iter,
                         double eps_iter, bool rand_init,
                         double momentum_decay, std::uint64_t seed) {
  budget.validate();
  if (nb_iter < 0) throw std::invalid_argument("perturb_iterative: nb_iter < 0");
  if (nb_iter > 0 && budget.eps > 0.0 && !(eps_iter > 0.0))
    throw std::invalid_argument("perturb_iterative: eps_iter must be > 0");
  if (momentum_decay < 0.0)
    throw std::invalid_argument("perturb_iterative: momentum_decay < 0");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] < budget.clip_min || x[i] > budget.clip_max)
      throw std::invalid_argument(
          "perturb_iterative: x outside [clip_min, clip_max]");
  if (budget.eps == 0.0) return x;  // empty ball

  Tensor xt = x;
  if (rand_init) {
    std::mt19937_64 rng(seed);
    Tensor delta = random_init_delta(budget, x.shape(), rng);
    for (std::size_t i = 0; i < xt.size(); ++i) xt[i] += delta[i];
    xt = budget.norm == Norm::kLinf ? project_linf(xt, x, budget.eps)
                                    : project_l2(xt, x, budget.eps);
    xt = clamp(xt, budget.clip_min, budget.clip_max);
  }

  const double step_sign = loss.targeted ? -1.0 : 1.0;
  Tensor momentum(x.shape());
  for (int it = 0; it < nb_iter; ++it) {
    Tape tape;
    ValueId xid = tape.leaf(xt);
    ValueId pred = predict(tape, xid);
    ValueId l = loss.fn(tape, pred, y);
    Tensor g = tape.backward(l).wrt(xid);

    const Tensor* dir_src = &g;
    if (momentum_decay > 0.0) {
      const double gl1 = l1_norm(g);
      for (std::size_t i = 0; i < momentum.size(); ++i) {
        momentum[i] *= momentum_decay;
        if (gl1 > 0.0) momentum[i] += g[i] / gl1;
      }
      dir_src = &momentum;
    }

    if (budget.norm == Norm::kLinf) {
      for (std::size_t i = 0; i < xt.size(); ++i) {
        const double s =
            ((*dir_src)[i] > 0.0) ? 1.0 : (((*dir_src)[i] < 0.0) ? -1.0 : 0.0);
        xt[i] += step_sign * eps_iter * s;
      }
      xt = project_linf(xt, x, budget.eps);
    } else {
      const double norm = l2_norm(*dir_src);
      if (norm == 0.0) continue;  // no usable direction this iteration
      for (std::size_t i = 0; i < xt.size(); ++i)
        xt[i] += step_sign * eps_iter * (*dir_src)[i] / norm;
      xt = project_l2(xt, x, budget.eps);
    }
    xt = clamp(xt, budget.clip_min, budget.clip_max);
  }
  return xt;
}

}  // namespace advgrad
