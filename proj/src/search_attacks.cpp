#include "search_attacks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace advgrad {

void SearchBudget::validate() const {
  if (max_queries <= 0)
    throw std::invalid_argument("search budget: max_queries must be > 0");
  if (!(clip_min < clip_max))
    throw std::invalid_argument("search budget: clip_min must be < clip_max");
}

namespace {

std::size_t argmax_flat(const Tensor& logits) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k)
    if (logits[k] > logits[best]) best = k;
  return best;
}

double softmax_prob(const Tensor& logits, int cls) {
  double mx = logits[0];
  for (std::size_t k = 1; k < logits.size(); ++k) mx = std::max(mx, logits[k]);
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) z += std::exp(logits[k] - mx);
  return std::exp(logits[static_cast<std::size_t>(cls)] - mx) / z;
}

// Fisher-Yates with an explicit draw so the order is stable across standard
// library implementations.
std::vector<std::size_t> seeded_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace

SearchResult single_pixel_attack(const Tensor& x, int y, const QueryFn& predict,
                                 const SearchBudget& budget,
                                 std::uint64_t seed) {
  budget.validate();
  SearchResult res;
  res.x_adv = x;
  auto query = [&](const Tensor& v) {
    ++res.queries_used;
    return predict(v);
  };
  if (static_cast<std::size_t>(argmax_flat(query(x))) !=
      static_cast<std::size_t>(y)) {
    res.success = true;
    return res;
  }
  const auto order = seeded_order(x.size(), seed);
  for (std::size_t pix : order) {
    for (double v : {budget.clip_min, budget.clip_max}) {
      if (res.queries_used >= budget.max_queries) return res;
      Tensor cand = x;
      cand[pix] = v;
      if (argmax_flat(query(cand)) != static_cast<std::size_t>(y)) {
        res.x_adv = std::move(cand);
        res.success = true;
        return res;
      }
    }
  }
  return res;
}

SearchResult local_search_attack(const Tensor& x, int y, const QueryFn& predict,
                                 const SearchBudget& budget,
                                 int neighborhood_size, int rounds,
                                 std::uint64_t seed) {
  budget.validate();
  if (neighborhood_size <= 0 || rounds <= 0)
    throw std::invalid_argument("local_search: neighborhood_size and rounds must be > 0");
  SearchResult res;
  res.x_adv = x;
  auto query = [&](const Tensor& v) {
    ++res.queries_used;
    return predict(v);
  };
  {
    const Tensor logits = query(x);
    if (argmax_flat(logits) != static_cast<std::size_t>(y)) {
      res.success = true;
      return res;
    }
  }
  const double p = budget.pixel_step;
  Tensor cur = x;
  // seeded tie-break order keeps pixel ranking deterministic
  const auto order = seeded_order(cur.size(), seed);
  for (int round = 0; round < rounds; ++round) {
    if (res.queries_used >= budget.max_queries) return res;
    const double base_prob = softmax_prob(query(cur), y);
    struct Scored {
      double drop;
      double value;  // perturbed pixel value giving that drop
      std::size_t pix;
      std::size_t rank;
    };
    std::vector<Scored> scored;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (res.queries_used + 2 > budget.max_queries) break;
      const std::size_t pix = order[r];
      double best_drop = -1e300, best_value = cur[pix];
      for (double delta : {p, -p}) {
        Tensor cand = cur;
        cand[pix] = std::min(budget.clip_max,
                             std::max(budget.clip_min, cand[pix] + delta));
        const double drop = base_prob - softmax_prob(query(cand), y);
        if (drop > best_drop) {
          best_drop = drop;
          best_value = cand[pix];
        }
      }
      scored.push_back({best_drop, best_value, pix, r});
    }
    if (scored.empty()) return res;
    std::stable_sort(scored.begin(), scored.end(),
                     [](const Scored& a, const Scored& b) {
                       if (a.drop != b.drop) return a.drop > b.drop;
                       return a.rank < b.rank;
                     });
    const std::size_t take =
        std::min<std::size_t>(scored.size(),
                              static_cast<std::size_t>(neighborhood_size));
    for (std::size_t i = 0; i < take; ++i)
      cur[scored[i].pix] = scored[i].value;
    if (res.queries_used >= budget.max_queries) {
      res.x_adv = cur;
      return res;
    }
    if (argmax_flat(query(cur)) != static_cast<std::size_t>(y)) {
      res.x_adv = cur;
      res.success = true;
      return res;
    }
  }
  res.x_adv = cur;
  return res;
}

namespace {

struct Jacobian {
  // row per class, column per pixel
  std::vector<Tensor> rows;
};

Jacobian logit_jacobian(const Tensor& x, const PredictFn& predict) {
  Tape tape;
  ValueId xid = tape.leaf(x);
  ValueId logits = predict(tape, xid);
  const Tensor& lv = tape.value(logits);
  if (lv.shape().size() != 2 || lv.shape()[0] != 1)
    throw std::invalid_argument("jsma: predict must yield 1xK logits");
  const std::size_t K = lv.shape()[1];
  Jacobian jac;
  for (std::size_t k = 0; k < K; ++k) {
    Tensor seed(lv.shape());
    seed[k] = 1.0;
    jac.rows.push_back(tape.backward_from(logits, seed).wrt(xid));
  }
  return jac;
}

std::pair<int, int> select_pair(const Tensor& x, const Jacobian& jac,
                                int target, double theta, double clip_min,
                                double clip_max) {
  const std::size_t n = x.size();
  const std::size_t K = jac.rows.size();
  std::vector<double> alpha(n, 0.0), beta(n, 0.0);
  std::vector<bool> usable(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    usable[i] = theta > 0.0 ? x[i] < clip_max : x[i] > clip_min;
    alpha[i] = jac.rows[static_cast<std::size_t>(target)][i];
    for (std::size_t k = 0; k < K; ++k)
      if (static_cast<int>(k) != target) beta[i] += jac.rows[k][i];
  }
  double best = 0.0;
  int bp = -1, bq = -1;
  for (std::size_t p = 0; p < n; ++p) {
    if (!usable[p]) continue;
    for (std::size_t q = p + 1; q < n; ++q) {
      if (!usable[q]) continue;
      const double a = alpha[p] + alpha[q];
      const double b = beta[p] + beta[q];
      // increasing mode wants the target logit up, the rest down;
      // decreasing mode mirrors both conditions
      const bool admissible = theta > 0.0 ? (a > 0.0 && b < 0.0)
                                          : (a < 0.0 && b > 0.0);
      if (!admissible) continue;
      const double value = std::abs(a) * std::abs(b);
      if (value > best) {  // strict: first (lowest-index) pair wins ties
        best = value;
        bp = static_cast<int>(p);
        bq = static_cast<int>(q);
      }
    }
  }
  return {bp, bq};
}

}  // namespace

std::pair<int, int> jsma_select_pair(const Tensor& x, int target_class,
                                     const PredictFn& predict, double theta,
                                     double clip_min, double clip_max) {
  return select_pair(x, logit_jacobian(x, predict), target_class, theta,
                     clip_min, clip_max);
}

JsmaResult jsma(const Tensor& x, int target_class, const PredictFn& predict,
                double theta, double gamma, double clip_min, double clip_max) {
  if (theta == 0.0) throw std::invalid_argument("jsma: theta must be nonzero");
  if (!(gamma > 0.0) || gamma > 1.0)
    throw std::invalid_argument("jsma: gamma must be in (0, 1]");
  JsmaResult res;
  res.x_adv = x;
  const std::size_t n = x.size();
  const std::size_t max_changed =
      static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(n)));
  std::vector<bool> changed(n, false);
  std::size_t nchanged = 0;
  // each application moves two pixels by theta; saturation bounds the number
  // of times a pixel can be revisited
  const std::size_t max_iters =
      (max_changed + 2) *
      (static_cast<std::size_t>((clip_max - clip_min) / std::abs(theta)) + 2);

  for (std::size_t it = 0; it < max_iters; ++it) {
    Tape tape;
    ValueId xid = tape.leaf(res.x_adv);
    const Tensor& logits = tape.value(predict(tape, xid));
    if (argmax_flat(logits) == static_cast<std::size_t>(target_class)) {
      res.success = true;
      res.pixels_changed = nchanged;
      return res;
    }
    auto [p, q] = select_pair(res.x_adv, logit_jacobian(res.x_adv, predict),
                              target_class, theta, clip_min, clip_max);
    if (p < 0) break;
    std::size_t would_change = nchanged;
    if (!changed[p]) ++would_change;
    if (!changed[q]) ++would_change;
    if (would_change > max_changed) break;  // pixel budget exhausted
    for (int pix : {p, q}) {
      res.x_adv[pix] = std::min(
          clip_max, std::max(clip_min, res.x_adv[pix] + theta));
      if (!changed[pix]) {
        changed[pix] = true;
        ++nchanged;
      }
    }
  }
  // final check after the last perturbation
  {
    Tape tape;
    ValueId xid = tape.leaf(res.x_adv);
    if (argmax_flat(tape.value(predict(tape, xid))) ==
        static_cast<std::size_t>(target_class))
      res.success = true;
  }
  res.pixels_changed = nchanged;
  return res;
}

}  // namespace advgrad
