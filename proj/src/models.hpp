#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "tensor.hpp"

namespace advgrad {

// A differentiable classifier. Parameters are plain tensors owned by the
// model; every forward pass records them as fresh leaves on the caller's
// tape, so the same model serves attacks (gradients wrt x) and training
// (gradients wrt parameters). Immutable while shared across attack workers.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string descriptor() const = 0;
  // per-example input shape, without the batch dimension
  virtual Shape input_shape() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual std::size_t depth() const = 0;

  // Logits for a batch; x is a node already on `tape`. When `param_ids` is
  // given, the leaf id of every parameter tensor is appended in layer order.
  virtual ValueId predict_logits(Tape& tape, ValueId x,
                                 std::vector<ValueId>* param_ids = nullptr)
      const = 0;
  // Post-activation output of the indexed layer (the head layer yields
  // logits, which carry no activation).
  virtual ValueId predict_features(Tape& tape, ValueId x,
                                   std::size_t layer_index) const = 0;

  virtual std::vector<Tensor*> param_tensors() = 0;
  virtual std::vector<const Tensor*> param_tensors() const = 0;

  std::size_t input_size() const { return shape_numel(input_shape()); }
  // Reshape a batch of raw images (N x ...) to this model's input layout.
  Tensor adapt_input(const Tensor& images) const;
};

struct DenseLayer {
  Tensor w;  // in x out
  Tensor b;  // out
};

class MlpClassifier final : public Model {
 public:
  MlpClassifier(std::vector<std::size_t> widths, std::vector<DenseLayer> layers);

  std::string descriptor() const override;
  Shape input_shape() const override { return {widths_.front()}; }
  std::size_t num_classes() const override { return widths_.back(); }
  std::size_t depth() const override { return layers_.size(); }
  ValueId predict_logits(Tape& tape, ValueId x,
                         std::vector<ValueId>* param_ids) const override;
  ValueId predict_features(Tape& tape, ValueId x,
                           std::size_t layer_index) const override;
  std::vector<Tensor*> param_tensors() override;
  std::vector<const Tensor*> param_tensors() const override;

 private:
  std::vector<std::size_t> widths_;
  std::vector<DenseLayer> layers_;
};

struct ConvLayer {
  Tensor w;  // F x C x kh x kw
  Tensor b;  // F
  int stride = 1;
  int padding = 0;
};

class ConvClassifier final : public Model {
 public:
  ConvClassifier(Shape input_chw, std::vector<ConvLayer> convs,
                 std::vector<DenseLayer> dense);

  std::string descriptor() const override;
  Shape input_shape() const override { return input_chw_; }
  std::size_t num_classes() const override;
  std::size_t depth() const override { return convs_.size() + dense_.size(); }
  ValueId predict_logits(Tape& tape, ValueId x,
                         std::vector<ValueId>* param_ids) const override;
  ValueId predict_features(Tape& tape, ValueId x,
                           std::size_t layer_index) const override;
  std::vector<Tensor*> param_tensors() override;
  std::vector<const Tensor*> param_tensors() const override;

 private:
  ValueId forward_to(Tape& tape, ValueId x, std::size_t upto,
                     std::vector<ValueId>* param_ids) const;
  Shape input_chw_;  // C, H, W
  std::vector<ConvLayer> convs_;
  std::vector<DenseLayer> dense_;
  std::size_t flat_after_conv_ = 0;
};

// Glorot-uniform initialization from an architecture descriptor, e.g.
//   mlp:64-32-10
//   conv:1x8x8:c4x3x3s1p1:d10
// Fully determined by the seed; biases start at zero.
std::unique_ptr<Model> init_params(const std::string& descriptor,
                                   std::uint64_t seed);
// Architecture parse without initialization (parameters zero).
std::unique_ptr<Model> model_from_descriptor(const std::string& descriptor);

void save_model(const Model& model, const std::string& path);
std::unique_ptr<Model> load_model(const std::string& path);

}  // namespace advgrad
