#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <random>
#include <sstream>

#include "doctest.h"
#include "idx.hpp"
#include "training.hpp"

using namespace advgrad;

namespace {

// tiny synthetic 2x2-image dataset, two linearly separable classes
Dataset toy_dataset(std::size_t n, std::uint64_t seed) {
  Dataset ds;
  ds.images = Tensor({n, 2, 2});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lo(0.0, 0.4), hi(0.6, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    for (std::size_t j = 0; j < 4; ++j)
      ds.images[i * 4 + j] = label ? hi(rng) : lo(rng);
    ds.labels.push_back(label);
  }
  return ds;
}

bool params_equal(const Model& a, const Model& b) {
  auto pa = a.param_tensors();
  auto pb = b.param_tensors();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i]->size(); ++j)
      if ((*pa[i])[j] != (*pb[i])[j]) return false;
  return true;
}

AttackConfig pgd_config(double eps) {
  AttackConfig c;
  c.name = "pgd-linf";
  c.params["loss"] = "cross_entropy";
  c.params["eps"] = eps;
  c.params["nb_iter"] = 5;
  c.params["eps_iter"] = eps > 0 ? eps / 3.0 : 0.1;
  c.params["rand_init"] = true;
  c.params["clip_min"] = 0.0;
  c.params["clip_max"] = 1.0;
  return c;
}

}  // namespace

TEST_CASE("lr=0 leaves parameters unchanged") {
  auto model = init_params("mlp:4-3-2", 1);
  auto before = init_params("mlp:4-3-2", 1);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.lr = 0.0;
  cfg.seed = 5;
  train(*model, toy_dataset(16, 3), cfg);
  CHECK(params_equal(*model, *before));
}

TEST_CASE("loss strictly decreases over the first epochs on a toy set") {
  auto model = init_params("mlp:4-4-2", 2);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 10;  // full batch: plain gradient descent, no batch noise
  cfg.lr = 0.5;
  cfg.seed = 1;
  std::ostringstream log;
  train(*model, toy_dataset(10, 7), cfg, &log);
  std::istringstream lines(log.str());
  std::string line;
  std::vector<double> losses;
  while (std::getline(lines, line)) {
    const auto pos = line.rfind(' ');
    losses.push_back(std::stod(line.substr(pos + 1)));
  }
  REQUIRE(losses.size() == 5);
  for (std::size_t i = 1; i < losses.size(); ++i)
    CHECK(losses[i] < losses[i - 1]);
}

TEST_CASE("training is bitwise deterministic under the seed") {
  auto a = init_params("mlp:4-3-2", 9);
  auto b = init_params("mlp:4-3-2", 9);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.lr = 0.2;
  cfg.seed = 11;
  const Dataset ds = toy_dataset(20, 13);
  train(*a, ds, cfg);
  train(*b, ds, cfg);
  CHECK(params_equal(*a, *b));
}

TEST_CASE("empty dataset is rejected") {
  auto model = init_params("mlp:4-3-2", 1);
  Dataset empty;
  TrainConfig cfg;
  CHECK_THROWS(train(*model, empty, cfg));
}

TEST_CASE("adversarial training with eps=0 matches plain training bitwise") {
  auto plain = init_params("mlp:4-3-2", 21);
  auto adv = init_params("mlp:4-3-2", 21);
  const Dataset ds = toy_dataset(12, 5);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.lr = 0.3;
  cfg.seed = 17;
  train(*plain, ds, cfg);
  cfg.inner_attack = pgd_config(0.0);
  adversarial_train(*adv, ds, cfg);
  CHECK(params_equal(*plain, *adv));
}

TEST_CASE("adversarial training rejects non-iterative inner attacks") {
  auto model = init_params("mlp:4-3-2", 1);
  TrainConfig cfg;
  cfg.inner_attack = AttackConfig{"cw-l2", Json::object()};
  CHECK_THROWS(adversarial_train(*model, toy_dataset(8, 1), cfg));
}

TEST_CASE("adversarially trained twin is more robust") {
  const Dataset ds = toy_dataset(40, 23);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 8;
  cfg.lr = 0.5;
  cfg.seed = 3;
  auto plain = init_params("mlp:4-4-2", 31);
  train(*plain, ds, cfg);
  auto robust = init_params("mlp:4-4-2", 31);
  TrainConfig adv_cfg = cfg;
  adv_cfg.inner_attack = pgd_config(0.1);
  adversarial_train(*robust, ds, adv_cfg);
  const AttackConfig atk = pgd_config(0.1);
  const EvalResult ep = evaluate(*plain, ds, &atk, nullptr, false, 7);
  const EvalResult er = evaluate(*robust, ds, &atk, nullptr, false, 7);
  CHECK(er.adv_acc >= ep.adv_acc);
}

TEST_CASE("evaluate without attack or defense reports clean accuracy") {
  const Dataset ds = toy_dataset(20, 29);
  auto model = init_params("mlp:4-4-2", 5);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 5;
  cfg.lr = 0.5;
  cfg.seed = 2;
  train(*model, ds, cfg);
  const EvalResult res = evaluate(*model, ds, nullptr, nullptr, false, 0);
  CHECK_FALSE(res.has_adv);
  CHECK(res.clean_acc >= 0.0);
  CHECK(res.clean_acc <= 1.0);
  CHECK(res.clean_acc > 0.9);  // separable toy data trains out
}

TEST_CASE("attack with eps=0 equals clean accuracy") {
  const Dataset ds = toy_dataset(16, 31);
  auto model = init_params("mlp:4-4-2", 5);
  const AttackConfig atk = pgd_config(0.0);
  const EvalResult clean = evaluate(*model, ds, nullptr, nullptr, false, 0);
  const EvalResult advr = evaluate(*model, ds, &atk, nullptr, false, 0);
  CHECK(advr.has_adv);
  CHECK(advr.adv_acc == clean.clean_acc);
  CHECK(advr.clean_acc == clean.clean_acc);
}

TEST_CASE("untargeted attacks never beat clean accuracy") {
  const Dataset ds = toy_dataset(24, 37);
  auto model = init_params("mlp:4-4-2", 5);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 6;
  cfg.lr = 0.5;
  cfg.seed = 4;
  train(*model, ds, cfg);
  const AttackConfig atk = pgd_config(0.3);
  const EvalResult res = evaluate(*model, ds, &atk, nullptr, false, 0);
  CHECK(res.adv_acc <= res.clean_acc);
}

TEST_CASE("evaluate leaves the model untouched") {
  const Dataset ds = toy_dataset(10, 41);
  auto model = init_params("mlp:4-4-2", 5);
  auto twin = init_params("mlp:4-4-2", 5);
  const AttackConfig atk = pgd_config(0.2);
  evaluate(*model, ds, &atk, nullptr, false, 0);
  CHECK(params_equal(*model, *twin));
}

TEST_CASE("defense composes in front of predict for both accuracies") {
  const Dataset ds = toy_dataset(12, 43);
  auto model = init_params("mlp:4-4-2", 5);
  const DefensePipeline defense = DefensePipeline::parse("bitsqueeze:1");
  const EvalResult res = evaluate(*model, ds, nullptr, &defense, false, 0);
  // defended clean accuracy must equal manual defended evaluation
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Tensor defended = defense.apply(ds.example(i));
    const Tensor logits = predict_plain(*model, nullptr, defended);
    if (argmax_row(logits, 0, 2) == static_cast<std::size_t>(ds.labels[i]))
      ++correct;
  }
  CHECK(res.clean_acc ==
        doctest::Approx(double(correct) / ds.size()).epsilon(1e-12));
}

TEST_CASE("dataset slice and example keep shapes") {
  const Dataset ds = toy_dataset(10, 47);
  const Dataset s = ds.slice(2, 5);
  CHECK(s.size() == 5);
  CHECK(s.labels[0] == ds.labels[2]);
  const Tensor x = s.example(0);
  CHECK(x.shape() == Shape{1, 2, 2});
  for (std::size_t j = 0; j < 4; ++j) CHECK(x[j] == ds.images[2 * 4 + j]);
}

TEST_CASE("run_attack_single dispatches every registered attack") {
  const Dataset ds = toy_dataset(4, 53);
  auto model = init_params("mlp:4-4-2", 5);
  for (const auto& name : known_attacks()) {
    const AttackConfig cfg = preset(name);
    const Tensor x = ds.example(0);
    const Tensor adv =
        run_attack_single(cfg, *model, nullptr, false, x, ds.labels[0], 1);
    CHECK(adv.shape() == x.shape());
    for (std::size_t i = 0; i < adv.size(); ++i) {
      CHECK(adv[i] >= 0.0);
      CHECK(adv[i] <= 1.0);
    }
  }
}

TEST_CASE("digits corpus trains to high clean accuracy") {
  const char* data_dir = std::getenv("ADVGRAD_DATA");
  REQUIRE(data_dir != nullptr);
  const std::string dir(data_dir);
  const Dataset full =
      load_idx(dir + "/train-images.idx", dir + "/train-labels.idx");
  const Dataset ds = full.slice(0, 200);
  auto model = init_params("mlp:64-32-10", 0);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.lr = 0.5;
  cfg.seed = 0;
  train(*model, ds, cfg);
  const EvalResult res = evaluate(*model, ds, nullptr, nullptr, false, 0);
  CHECK(res.clean_acc >= 0.95);
}
