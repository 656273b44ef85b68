#pragma once

#include <functional>
#include <vector>

#include "tensor.hpp"

namespace advgrad {

using ValueId = int;

// Adjoints produced by one reverse sweep. Indexable by any node id that was
// live on the tape; leaves are the ids callers usually care about.
class Gradient {
 public:
  explicit Gradient(std::vector<Tensor> adjoints)
      : adjoints_(std::move(adjoints)) {}
  const Tensor& wrt(ValueId id) const { return adjoints_.at(id); }

 private:
  std::vector<Tensor> adjoints_;
};

// Reverse-mode tape. Nodes are appended in forward order, so parents always
// precede their children and a single reverse sweep computes all adjoints.
// Built fresh per forward pass and discarded after backward; confined to one
// thread for its lifetime.
class Tape {
 public:
  ValueId leaf(Tensor v);
  const Tensor& value(ValueId id) const;
  std::size_t size() const { return nodes_.size(); }

  ValueId add(ValueId a, ValueId b);
  ValueId sub(ValueId a, ValueId b);
  ValueId mul(ValueId a, ValueId b);
  ValueId scale(ValueId a, double c);
  ValueId add_const(ValueId a, double c);
  ValueId matmul(ValueId a, ValueId b);
  // rows of a 2d tensor + a bias vector
  ValueId add_row_bias(ValueId m, ValueId bias);
  // NxFxHxW + per-channel bias vector of length F
  ValueId add_chan_bias(ValueId x, ValueId bias);
  ValueId conv2d(ValueId x, ValueId w, int stride, int padding);
  ValueId relu(ValueId a);
  ValueId tanh(ValueId a);
  ValueId sum(ValueId a);
  ValueId softmax_cross_entropy(ValueId logits, std::vector<int> labels);
  ValueId mse(ValueId pred, ValueId target);
  // Carlini-Wagner margin: per row, untargeted
  //   max(Z_label - max_{k != label} Z_k + kappa, 0)
  // targeted flips the two terms. Output is the sum over rows.
  ValueId cw_margin(ValueId logits, std::vector<int> labels, double kappa,
                    bool targeted);
  // Node with caller-supplied forward value and backward rule
  // (input value, upstream adjoint) -> input adjoint.
  ValueId custom(ValueId parent, Tensor forward_value,
                 std::function<Tensor(const Tensor&, const Tensor&)> vjp);

  // Reverse sweep from a scalar output. The tape is left unchanged; calling
  // twice gives identical results.
  Gradient backward(ValueId out) const;
  // General vector-Jacobian product from any node, seeded with `seed`.
  Gradient backward_from(ValueId out, const Tensor& seed) const;

 private:
  enum class Op {
    kLeaf,
    kAdd,
    kSub,
    kMul,
    kScale,
    kAddConst,
    kMatmul,
    kAddRowBias,
    kAddChanBias,
    kConv2d,
    kRelu,
    kTanh,
    kSum,
    kSoftmaxCe,
    kMse,
    kCwMargin,
    kCustom,
  };
  struct Node {
    Op op;
    int a = -1, b = -1;
    Tensor value;
    Tensor saved;             // op-specific forward state (e.g. softmax probs)
    std::vector<int> labels;  // CE / margin
    double c = 0.0;           // scale factor / added constant / kappa
    bool flag = false;        // targeted
    int stride = 1, padding = 0;
    std::function<Tensor(const Tensor&, const Tensor&)> vjp;
  };

  ValueId push(Node n);
  const Node& node(ValueId id) const;

  std::vector<Node> nodes_;
};

// View of a node under a new shape with the same elements; gradients flow
// through unchanged.
ValueId tape_reshape(Tape& tape, ValueId x, Shape target);

// Central-difference gradient of a scalar function; the testing oracle for
// every backward rule.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h);

}  // namespace advgrad
