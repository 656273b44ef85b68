#include "bpda.hpp"

#include <utility>

namespace advgrad {

namespace {

class BpdaModule final : public Preprocessor {
 public:
  BpdaModule(PreprocessorPtr d,
             std::function<Tensor(const Tensor&, const Tensor&)> backward,
             std::string mode)
      : d_(std::move(d)), backward_(std::move(backward)), mode_(std::move(mode)) {}

  std::string describe() const override {
    return "bpda(" + d_->describe() + ";" + mode_ + ")";
  }
  Tensor apply(const Tensor& x) const override { return d_->apply(x); }
  Tensor vjp(const Tensor& x, const Tensor& up) const override {
    return backward_(x, up);
  }
  bool differentiable() const override { return true; }

 private:
  PreprocessorPtr d_;
  std::function<Tensor(const Tensor&, const Tensor&)> backward_;
  std::string mode_;
};

}  // namespace

PreprocessorPtr wrap_with_forward_substitute(PreprocessorPtr d, SubstituteFn g) {
  auto backward = [g](const Tensor& x, const Tensor& up) {
    // vjp of g at the pre-defense input x
    Tape tape;
    ValueId xid = tape.leaf(x);
    ValueId out = g(tape, xid);
    return tape.backward_from(out, up).wrt(xid);
  };
  return std::make_shared<BpdaModule>(std::move(d), std::move(backward),
                                      "forward_substitute");
}

PreprocessorPtr wrap_with_backward_fn(
    PreprocessorPtr d,
    std::function<Tensor(const Tensor&, const Tensor&)> backward_fn) {
  return std::make_shared<BpdaModule>(std::move(d), std::move(backward_fn),
                                      "backward_fn");
}

PreprocessorPtr straight_through(PreprocessorPtr d) {
  auto backward = [](const Tensor&, const Tensor& up) { return up; };
  return std::make_shared<BpdaModule>(std::move(d), std::move(backward),
                                      "straight_through");
}

DefensePipeline with_straight_through(const DefensePipeline& pipeline) {
  std::vector<PreprocessorPtr> stages;
  for (std::size_t i = 0; i < pipeline.size(); ++i) {
    const auto& s = pipeline.stage(i);
    stages.push_back(s->differentiable() ? s : straight_through(s));
  }
  return DefensePipeline(std::move(stages));
}

}  // namespace advgrad
