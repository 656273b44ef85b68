#pragma once

#include <cstdint>
#include <functional>

#include "attack_api.hpp"

namespace advgrad {

// Black-box query interface: one example in, logits out. The black-box
// attacks touch the model through this and nothing else.
using QueryFn = std::function<Tensor(const Tensor&)>;

struct SearchBudget {
  int max_queries = 1000;
  double clip_min = 0.0;
  double clip_max = 1.0;
  // per-pixel perturbation magnitude used by local search
  double pixel_step = 0.5;
  void validate() const;
};

struct SearchResult {
  Tensor x_adv;
  bool success = false;
  int queries_used = 0;
};

// Visits pixels in a seeded random order, saturating each to clip_min then
// clip_max; returns the first misclassified variant. At most one pixel ever
// differs from x.
SearchResult single_pixel_attack(const Tensor& x, int y, const QueryFn& predict,
                                 const SearchBudget& budget,
                                 std::uint64_t seed);

// Greedy rounds: score every pixel by the drop in true-class softmax
// probability under a +-pixel_step nudge, perturb the top neighborhood_size
// pixels, repeat until misclassification or budget exhaustion.
SearchResult local_search_attack(const Tensor& x, int y, const QueryFn& predict,
                                 const SearchBudget& budget,
                                 int neighborhood_size, int rounds,
                                 std::uint64_t seed);

struct JsmaResult {
  Tensor x_adv;
  bool success = false;
  std::size_t pixels_changed = 0;
};

// Targeted Jacobian saliency map attack. Per iteration: logit Jacobian via
// one backward pass per class, then the admissible pixel pair maximizing
// (dZ_t/dp + dZ_t/dq) * |sum_{k!=t}(dZ_k/dp + dZ_k/dq)| is moved by theta.
// theta > 0 increases intensity, theta < 0 decreases; saturated pixels leave
// the candidate set. At most ceil(gamma * n) distinct pixels change.
JsmaResult jsma(const Tensor& x, int target_class, const PredictFn& predict,
                double theta, double gamma, double clip_min, double clip_max);

// The pair the next jsma iteration would pick, or (-1,-1) if none is
// admissible. Exposed so the pair choice can be checked against exhaustive
// enumeration.
std::pair<int, int> jsma_select_pair(const Tensor& x, int target_class,
                                     const PredictFn& predict, double theta,
                                     double clip_min, double clip_max);

}  // namespace advgrad
