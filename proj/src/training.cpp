#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "bpda.hpp"
#include "gradient_attacks.hpp"
#include "search_attacks.hpp"

namespace advgrad {

Tensor Dataset::example(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("dataset: example index out of range");
  const std::size_t per = images.size() / size();
  Shape s = images.shape();
  s[0] = 1;
  Tensor out(s);
  for (std::size_t j = 0; j < per; ++j) out[j] = images[i * per + j];
  return out;
}

Dataset Dataset::slice(std::size_t offset, std::size_t count) const {
  if (offset + count > size())
    throw std::out_of_range("dataset: slice out of range");
  const std::size_t per = images.size() / size();
  Shape s = images.shape();
  s[0] = count;
  Tensor imgs(s);
  for (std::size_t j = 0; j < count * per; ++j)
    imgs[j] = images[offset * per + j];
  return {std::move(imgs),
          std::vector<int>(labels.begin() + offset,
                           labels.begin() + offset + count)};
}

PredictFn make_predict(const Model& model, const DefensePipeline* defense,
                       bool bpda) {
  DefensePipeline pipeline;
  if (defense) pipeline = bpda ? with_straight_through(*defense) : *defense;
  const Model* m = &model;
  return [m, pipeline](Tape& tape, ValueId x) {
    ValueId cur = pipeline.record(tape, x);
    Shape want{tape.value(cur).shape()[0]};
    for (auto d : m->input_shape()) want.push_back(d);
    if (tape.value(cur).shape() != want) cur = tape_reshape(tape, cur, want);
    return m->predict_logits(tape, cur);
  };
}

Tensor predict_plain(const Model& model, const DefensePipeline* defense,
                     const Tensor& x) {
  Tensor cur = defense ? defense->apply(x) : x;
  Tape tape;
  ValueId xid = tape.leaf(model.adapt_input(cur));
  return tape.value(model.predict_logits(tape, xid));
}

namespace {

PerturbBudget budget_from(const AttackConfig& cfg, Norm norm) {
  PerturbBudget b;
  b.norm = norm;
  b.eps = cfg.num("eps");
  b.clip_min = cfg.has("clip_min") ? cfg.num("clip_min") : 0.0;
  b.clip_max = cfg.has("clip_max") ? cfg.num("clip_max") : 1.0;
  return b;
}

void check_loss_name(const AttackConfig& cfg) {
  if (cfg.has("loss") && cfg.str("loss") != "cross_entropy")
    throw std::invalid_argument("attack '" + cfg.name +
                                "': unsupported loss '" + cfg.str("loss") +
                                "' (available: cross_entropy)");
}

}  // namespace

Tensor run_attack_single(const AttackConfig& cfg, const Model& model,
                         const DefensePipeline* defense, bool bpda,
                         const Tensor& x1, int y, std::uint64_t seed) {
  const PredictFn predict = make_predict(model, defense, bpda);
  const std::vector<int> ys{y};
  const std::string& a = cfg.name;
  if (a == "gradient-sign" || a == "fgsm") {
    check_loss_name(cfg);
    return gradient_sign_attack(x1, ys, predict, budget_from(cfg, Norm::kLinf),
                                seed);
  }
  if (a == "gradient") {
    check_loss_name(cfg);
    return gradient_attack(x1, ys, predict, budget_from(cfg, Norm::kL2), seed);
  }
  if (a == "bim-linf" || a == "bim-l2") {
    check_loss_name(cfg);
    return basic_iterative(
        x1, ys, predict,
        budget_from(cfg, a == "bim-linf" ? Norm::kLinf : Norm::kL2),
        cfg.integer("nb_iter"), cfg.num("eps_iter"), seed);
  }
  if (a == "pgd-linf" || a == "pgd-l2") {
    check_loss_name(cfg);
    const bool rand_init = cfg.has("rand_init") ? cfg.flag("rand_init") : true;
    return perturb_iterative(
        x1, AttackTarget::for_labels(ys), predict, cross_entropy_loss(false),
        budget_from(cfg, a == "pgd-linf" ? Norm::kLinf : Norm::kL2),
        cfg.integer("nb_iter"), cfg.num("eps_iter"), rand_init, 0.0, seed);
  }
  if (a == "mi-linf" || a == "mi-l2") {
    check_loss_name(cfg);
    return momentum_iterative(
        x1, ys, predict,
        budget_from(cfg, a == "mi-linf" ? Norm::kLinf : Norm::kL2),
        cfg.integer("nb_iter"), cfg.num("eps_iter"),
        cfg.num("momentum_decay"), seed);
  }
  if (a == "cw-l2") {
    const double cmin = cfg.has("clip_min") ? cfg.num("clip_min") : 0.0;
    const double cmax = cfg.has("clip_max") ? cfg.num("clip_max") : 1.0;
    const bool targeted = cfg.has("targeted") && cfg.flag("targeted");
    return carlini_wagner_l2(x1, y, predict, cfg.num("confidence"),
                             cfg.integer("binary_search_steps"),
                             cfg.integer("max_iter"), cfg.num("initial_c"),
                             cfg.num("lr"), cmin, cmax, targeted, seed)
        .x_adv;
  }
  if (a == "single-pixel" || a == "local-search") {
    SearchBudget b;
    b.max_queries = cfg.integer("max_queries");
    b.clip_min = cfg.has("clip_min") ? cfg.num("clip_min") : 0.0;
    b.clip_max = cfg.has("clip_max") ? cfg.num("clip_max") : 1.0;
    QueryFn q = [&model, defense](const Tensor& v) {
      return predict_plain(model, defense, v);
    };
    if (a == "single-pixel")
      return single_pixel_attack(x1, y, q, b, seed).x_adv;
    b.pixel_step = cfg.has("pixel_step") ? cfg.num("pixel_step")
                                         : (b.clip_max - b.clip_min) / 2.0;
    return local_search_attack(x1, y, q, b, cfg.integer("neighborhood_size"),
                               cfg.integer("rounds"), seed)
        .x_adv;
  }
  if (a == "jsma") {
    const double cmin = cfg.has("clip_min") ? cfg.num("clip_min") : 0.0;
    const double cmax = cfg.has("clip_max") ? cfg.num("clip_max") : 1.0;
    const int target =
        (y + 1) % static_cast<int>(model.num_classes());  // next-class rule
    return jsma(x1, target, predict, cfg.num("theta"), cfg.num("gamma"), cmin,
                cmax)
        .x_adv;
  }
  std::string names;
  for (const auto& n : known_attacks()) {
    if (!names.empty()) names += ", ";
    names += n;
  }
  throw std::invalid_argument("unknown attack '" + a +
                              "' (available: " + names + ")");
}

namespace {

void validate_train_config(const Dataset& dataset, const TrainConfig& cfg) {
  if (dataset.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (cfg.epochs <= 0 || cfg.batch_size <= 0)
    throw std::invalid_argument("train: epochs and batch_size must be > 0");
  if (cfg.lr < 0.0) throw std::invalid_argument("train: negative learning rate");
}

void train_impl(Model& model, const Dataset& dataset, const TrainConfig& cfg,
                bool adversarial, std::ostream* log) {
  validate_train_config(dataset, cfg);
  const std::size_t n = dataset.size();
  const std::size_t per = dataset.images.size() / n;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(cfg.seed);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // explicit Fisher-Yates so the schedule is identical across stdlibs
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[rng() % i]);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n;
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t bsz =
          std::min<std::size_t>(cfg.batch_size, n - start);
      Shape bshape = dataset.images.shape();
      bshape[0] = bsz;
      Tensor batch(bshape);
      std::vector<int> labels(bsz);
      for (std::size_t b = 0; b < bsz; ++b) {
        const std::size_t src = order[start + b];
        labels[b] = dataset.labels[src];
        if (adversarial) {
          Tensor adv = run_attack_single(
              *cfg.inner_attack, model, nullptr, false,
              dataset.example(src), dataset.labels[src],
              cfg.seed + 0x9e3779b97f4a7c15ULL * (src + 1));
          for (std::size_t j = 0; j < per; ++j) batch[b * per + j] = adv[j];
        } else {
          for (std::size_t j = 0; j < per; ++j)
            batch[b * per + j] = dataset.images[src * per + j];
        }
      }
      Tape tape;
      ValueId xid = tape.leaf(model.adapt_input(batch));
      std::vector<ValueId> param_ids;
      ValueId logits = model.predict_logits(tape, xid, &param_ids);
      ValueId loss = tape.softmax_cross_entropy(logits, labels);
      epoch_loss += tape.value(loss)[0];
      ++batches;
      Gradient grads = tape.backward(loss);
      auto params = model.param_tensors();
      for (std::size_t p = 0; p < params.size(); ++p) {
        const Tensor& g = grads.wrt(param_ids[p]);
        for (std::size_t j = 0; j < params[p]->size(); ++j)
          (*params[p])[j] -= cfg.lr * g[j];
      }
    }
    if (log)
      *log << "epoch " << (epoch + 1) << "/" << cfg.epochs << " loss "
           << (epoch_loss / static_cast<double>(batches)) << "\n";
  }
}

}  // namespace

void train(Model& model, const Dataset& dataset, const TrainConfig& cfg,
           std::ostream* log) {
  train_impl(model, dataset, cfg, false, log);
}

void adversarial_train(Model& model, const Dataset& dataset,
                       const TrainConfig& cfg, std::ostream* log) {
  if (!cfg.inner_attack)
    throw std::invalid_argument("adversarial_train: missing inner attack");
  static const std::vector<std::string> kIterativeFamily = {
      "gradient-sign", "fgsm", "gradient", "bim-linf", "bim-l2",
      "pgd-linf",      "pgd-l2", "mi-linf", "mi-l2"};
  if (std::find(kIterativeFamily.begin(), kIterativeFamily.end(),
                cfg.inner_attack->name) == kIterativeFamily.end())
    throw std::invalid_argument(
        "adversarial_train: inner attack '" + cfg.inner_attack->name +
        "' is not a perturb_iterative-family attack");
  train_impl(model, dataset, cfg, true, log);
}

EvalResult evaluate(const Model& model, const Dataset& dataset,
                    const AttackConfig* attack, const DefensePipeline* defense,
                    bool bpda, std::uint64_t seed) {
  EvalResult res;
  const std::size_t n = dataset.size();
  if (n == 0) return res;
  std::size_t clean_correct = 0, adv_correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor x1 = dataset.example(i);
    const int y = dataset.labels[i];
    const Tensor clean_logits = predict_plain(model, defense, x1);
    if (argmax_row(clean_logits, 0, model.num_classes()) ==
        static_cast<std::size_t>(y))
      ++clean_correct;
    if (attack) {
      Tensor x_adv = run_attack_single(*attack, model, defense, bpda, x1, y,
                                       seed + i);
      const Tensor adv_logits = predict_plain(model, defense, x_adv);
      if (argmax_row(adv_logits, 0, model.num_classes()) ==
          static_cast<std::size_t>(y))
        ++adv_correct;
    }
  }
  res.clean_acc = static_cast<double>(clean_correct) / static_cast<double>(n);
  if (attack) {
    res.has_adv = true;
    res.adv_acc = static_cast<double>(adv_correct) / static_cast<double>(n);
  }
  return res;
}

}  // namespace advgrad
