#include "autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace advgrad {

ValueId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<ValueId>(nodes_.size() - 1);
}

const Tape::Node& Tape::node(ValueId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw std::out_of_range("tape: bad node id " + std::to_string(id));
  return nodes_[id];
}

ValueId Tape::leaf(Tensor v) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(v);
  return push(std::move(n));
}

const Tensor& Tape::value(ValueId id) const { return node(id).value; }

static void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

ValueId Tape::add(ValueId a, ValueId b) {
  const Tensor &va = value(a), &vb = value(b);
  check_same_shape(va, vb, "add");
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::sub(ValueId a, ValueId b) {
  const Tensor &va = value(a), &vb = value(b);
  check_same_shape(va, vb, "sub");
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::mul(ValueId a, ValueId b) {
  const Tensor &va = value(a), &vb = value(b);
  check_same_shape(va, vb, "mul");
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  Node n;
  n.op = Op::kMul;
  n.a = a;
  n.b = b;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::scale(ValueId a, double c) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.c = c;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::add_const(ValueId a, double c) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
  Node n;
  n.op = Op::kAddConst;
  n.a = a;
  n.c = c;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::matmul(ValueId a, ValueId b) {
  const Tensor &va = value(a), &vb = value(b);
  if (va.shape().size() != 2 || vb.shape().size() != 2 ||
      va.shape()[1] != vb.shape()[0])
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(va.shape()) + " x " +
                                shape_str(vb.shape()));
  const std::size_t m = va.shape()[0], k = va.shape()[1], p = vb.shape()[1];
  Tensor out({m, p});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      const double aval = va[i * k + t];
      for (std::size_t j = 0; j < p; ++j)
        out[i * p + j] += aval * vb[t * p + j];
    }
  Node n;
  n.op = Op::kMatmul;
  n.a = a;
  n.b = b;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::add_row_bias(ValueId m, ValueId bias) {
  const Tensor &vm = value(m), &vb = value(bias);
  if (vm.shape().size() != 2 || vb.size() != vm.shape()[1])
    throw std::invalid_argument("add_row_bias: shape mismatch " +
                                shape_str(vm.shape()) + " vs " +
                                shape_str(vb.shape()));
  const std::size_t rows = vm.shape()[0], cols = vm.shape()[1];
  Tensor out = vm;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += vb[c];
  Node n;
  n.op = Op::kAddRowBias;
  n.a = m;
  n.b = bias;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::add_chan_bias(ValueId x, ValueId bias) {
  const Tensor &vx = value(x), &vb = value(bias);
  if (vx.shape().size() != 4 || vb.size() != vx.shape()[1])
    throw std::invalid_argument("add_chan_bias: shape mismatch " +
                                shape_str(vx.shape()) + " vs " +
                                shape_str(vb.shape()));
  const std::size_t N = vx.shape()[0], F = vx.shape()[1],
                    hw = vx.shape()[2] * vx.shape()[3];
  Tensor out = vx;
  for (std::size_t n0 = 0; n0 < N; ++n0)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t i = 0; i < hw; ++i)
        out[(n0 * F + f) * hw + i] += vb[f];
  Node n;
  n.op = Op::kAddChanBias;
  n.a = x;
  n.b = bias;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::conv2d(ValueId x, ValueId w, int stride, int padding) {
  const Tensor &vx = value(x), &vw = value(w);
  if (vx.shape().size() != 4 || vw.shape().size() != 4 ||
      vx.shape()[1] != vw.shape()[1])
    throw std::invalid_argument("conv2d: incompatible shapes " +
                                shape_str(vx.shape()) + " and " +
                                shape_str(vw.shape()));
  if (stride < 1 || padding < 0)
    throw std::invalid_argument("conv2d: stride must be >=1, padding >=0");
  const std::size_t N = vx.shape()[0], C = vx.shape()[1], H = vx.shape()[2],
                    W = vx.shape()[3];
  const std::size_t F = vw.shape()[0], kh = vw.shape()[2], kw = vw.shape()[3];
  const std::size_t p = static_cast<std::size_t>(padding);
  if (kh > H + 2 * p || kw > W + 2 * p)
    throw std::invalid_argument("conv2d: kernel " + shape_str(vw.shape()) +
                                " larger than padded input " +
                                shape_str(vx.shape()));
  const std::size_t Ho = (H + 2 * p - kh) / stride + 1;
  const std::size_t Wo = (W + 2 * p - kw) / stride + 1;
  Tensor out({N, F, Ho, Wo});
  for (std::size_t n0 = 0; n0 < N; ++n0)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const std::ptrdiff_t ih =
                    static_cast<std::ptrdiff_t>(oh * stride + i) -
                    static_cast<std::ptrdiff_t>(p);
                const std::ptrdiff_t iw =
                    static_cast<std::ptrdiff_t>(ow * stride + j) -
                    static_cast<std::ptrdiff_t>(p);
                if (ih < 0 || iw < 0 ||
                    ih >= static_cast<std::ptrdiff_t>(H) ||
                    iw >= static_cast<std::ptrdiff_t>(W))
                  continue;
                acc += vx[((n0 * C + c) * H + ih) * W + iw] *
                       vw[((f * C + c) * kh + i) * kw + j];
              }
          out[((n0 * F + f) * Ho + oh) * Wo + ow] = acc;
        }
  Node n;
  n.op = Op::kConv2d;
  n.a = x;
  n.b = w;
  n.stride = stride;
  n.padding = padding;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::relu(ValueId a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
  Node n;
  n.op = Op::kRelu;
  n.a = a;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::tanh(ValueId a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  Node n;
  n.op = Op::kTanh;
  n.a = a;
  n.value = std::move(out);
  return push(std::move(n));
}

ValueId Tape::sum(ValueId a) {
  const Tensor& va = value(a);
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += va[i];
  Node n;
  n.op = Op::kSum;
  n.a = a;
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

ValueId Tape::softmax_cross_entropy(ValueId logits, std::vector<int> labels) {
  const Tensor& vl = value(logits);
  if (vl.shape().size() != 2)
    throw std::invalid_argument("softmax_cross_entropy: logits must be 2d");
  const std::size_t N = vl.shape()[0], K = vl.shape()[1];
  if (labels.size() != N)
    throw std::invalid_argument(
        "softmax_cross_entropy: label count != batch size");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= K)
      throw std::out_of_range("softmax_cross_entropy: label " +
                              std::to_string(y) + " out of [0," +
                              std::to_string(K) + ")");
  Tensor probs({N, K});
  double loss = 0.0;
  for (std::size_t r = 0; r < N; ++r) {
    double mx = vl[r * K];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, vl[r * K + k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      probs[r * K + k] = std::exp(vl[r * K + k] - mx);
      z += probs[r * K + k];
    }
    for (std::size_t k = 0; k < K; ++k) probs[r * K + k] /= z;
    const std::size_t y = static_cast<std::size_t>(labels[r]);
    loss += -(vl[r * K + y] - mx - std::log(z));
  }
  Node n;
  n.op = Op::kSoftmaxCe;
  n.a = logits;
  n.labels = std::move(labels);
  n.saved = std::move(probs);
  n.value = Tensor::scalar(loss / static_cast<double>(N));
  return push(std::move(n));
}

ValueId Tape::mse(ValueId pred, ValueId target) {
  const Tensor &vp = value(pred), &vt = value(target);
  check_same_shape(vp, vt, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < vp.size(); ++i) {
    double d = vp[i] - vt[i];
    s += d * d;
  }
  Node n;
  n.op = Op::kMse;
  n.a = pred;
  n.b = target;
  n.value = Tensor::scalar(s / static_cast<double>(vp.size()));
  return push(std::move(n));
}

ValueId Tape::cw_margin(ValueId logits, std::vector<int> labels, double kappa,
                        bool targeted) {
  const Tensor& vl = value(logits);
  if (vl.shape().size() != 2)
    throw std::invalid_argument("cw_margin: logits must be 2d");
  const std::size_t N = vl.shape()[0], K = vl.shape()[1];
  if (labels.size() != N)
    throw std::invalid_argument("cw_margin: label count != batch size");
  // saved: per row [active, index of best non-label class]
  Tensor state({N, 2});
  double total = 0.0;
  for (std::size_t r = 0; r < N; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= K)
      throw std::out_of_range("cw_margin: label out of range");
    std::size_t other = (y == 0) ? 1 : 0;
    for (std::size_t k = 0; k < K; ++k) {
      if (static_cast<int>(k) == y) continue;
      if (vl[r * K + k] > vl[r * K + other]) other = k;
    }
    const double zy = vl[r * K + y], zo = vl[r * K + other];
    const double f = targeted ? zo - zy + kappa : zy - zo + kappa;
    const bool active = f > 0.0;
    state[r * 2] = active ? 1.0 : 0.0;
    state[r * 2 + 1] = static_cast<double>(other);
    if (active) total += f;
  }
  Node n;
  n.op = Op::kCwMargin;
  n.a = logits;
  n.labels = std::move(labels);
  n.c = kappa;
  n.flag = targeted;
  n.saved = std::move(state);
  n.value = Tensor::scalar(total);
  return push(std::move(n));
}

ValueId Tape::custom(ValueId parent, Tensor forward_value,
                     std::function<Tensor(const Tensor&, const Tensor&)> vjp) {
  Node n;
  n.op = Op::kCustom;
  n.a = parent;
  n.value = std::move(forward_value);
  n.vjp = std::move(vjp);
  return push(std::move(n));
}

Gradient Tape::backward(ValueId out) const {
  if (!value(out).is_scalar())
    throw std::invalid_argument("backward: output node is not a scalar");
  return backward_from(out, Tensor::scalar(1.0));
}

Gradient Tape::backward_from(ValueId out, const Tensor& seed) const {
  const Node& on = node(out);
  check_same_shape(on.value, seed, "backward_from seed");
  std::vector<Tensor> adj(nodes_.size());
  std::vector<bool> live(nodes_.size(), false);
  auto touch = [&](int id) {
    if (!live[id]) {
      adj[id] = Tensor(nodes_[id].value.shape());
      live[id] = true;
    }
  };
  touch(out);
  adj[out] = seed;
  for (int id = out; id >= 0; --id) {
    if (!live[id]) continue;
    const Node& n = nodes_[id];
    const Tensor& up = adj[id];
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd:
        touch(n.a);
        touch(n.b);
        for (std::size_t i = 0; i < up.size(); ++i) {
          adj[n.a][i] += up[i];
          adj[n.b][i] += up[i];
        }
        break;
      case Op::kSub:
        touch(n.a);
        touch(n.b);
        for (std::size_t i = 0; i < up.size(); ++i) {
          adj[n.a][i] += up[i];
          adj[n.b][i] -= up[i];
        }
        break;
      case Op::kMul: {
        touch(n.a);
        touch(n.b);
        const Tensor &va = nodes_[n.a].value, &vb = nodes_[n.b].value;
        for (std::size_t i = 0; i < up.size(); ++i) {
          adj[n.a][i] += up[i] * vb[i];
          adj[n.b][i] += up[i] * va[i];
        }
        break;
      }
      case Op::kScale:
        touch(n.a);
        for (std::size_t i = 0; i < up.size(); ++i)
          adj[n.a][i] += n.c * up[i];
        break;
      case Op::kAddConst:
        touch(n.a);
        for (std::size_t i = 0; i < up.size(); ++i) adj[n.a][i] += up[i];
        break;
      case Op::kMatmul: {
        touch(n.a);
        touch(n.b);
        const Tensor &va = nodes_[n.a].value, &vb = nodes_[n.b].value;
        const std::size_t m = va.shape()[0], k = va.shape()[1],
                          p = vb.shape()[1];
        // dA = up . B^T ; dB = A^T . up
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < p; ++j) {
            const double u = up[i * p + j];
            if (u == 0.0) continue;
            for (std::size_t t = 0; t < k; ++t) {
              adj[n.a][i * k + t] += u * vb[t * p + j];
              adj[n.b][t * p + j] += u * va[i * k + t];
            }
          }
        break;
      }
      case Op::kAddRowBias: {
        touch(n.a);
        touch(n.b);
        const std::size_t rows = n.value.shape()[0],
                          cols = n.value.shape()[1];
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) {
            adj[n.a][r * cols + c] += up[r * cols + c];
            adj[n.b][c] += up[r * cols + c];
          }
        break;
      }
      case Op::kAddChanBias: {
        touch(n.a);
        touch(n.b);
        const std::size_t N = n.value.shape()[0], F = n.value.shape()[1],
                          hw = n.value.shape()[2] * n.value.shape()[3];
        for (std::size_t n0 = 0; n0 < N; ++n0)
          for (std::size_t f = 0; f < F; ++f)
            for (std::size_t i = 0; i < hw; ++i) {
              adj[n.a][(n0 * F + f) * hw + i] += up[(n0 * F + f) * hw + i];
              adj[n.b][f] += up[(n0 * F + f) * hw + i];
            }
        break;
      }
      case Op::kConv2d: {
        touch(n.a);
        touch(n.b);
        const Tensor &vx = nodes_[n.a].value, &vw = nodes_[n.b].value;
        const std::size_t C = vx.shape()[1], H = vx.shape()[2],
                          W = vx.shape()[3];
        const std::size_t N = n.value.shape()[0], F = n.value.shape()[1],
                          Ho = n.value.shape()[2], Wo = n.value.shape()[3];
        const std::size_t kh = vw.shape()[2], kw = vw.shape()[3];
        const int p = n.padding, s = n.stride;
        for (std::size_t n0 = 0; n0 < N; ++n0)
          for (std::size_t f = 0; f < F; ++f)
            for (std::size_t oh = 0; oh < Ho; ++oh)
              for (std::size_t ow = 0; ow < Wo; ++ow) {
                const double u = up[((n0 * F + f) * Ho + oh) * Wo + ow];
                if (u == 0.0) continue;
                for (std::size_t c = 0; c < C; ++c)
                  for (std::size_t i = 0; i < kh; ++i)
                    for (std::size_t j = 0; j < kw; ++j) {
                      const std::ptrdiff_t ih =
                          static_cast<std::ptrdiff_t>(oh * s + i) - p;
                      const std::ptrdiff_t iw =
                          static_cast<std::ptrdiff_t>(ow * s + j) - p;
                      if (ih < 0 || iw < 0 ||
                          ih >= static_cast<std::ptrdiff_t>(H) ||
                          iw >= static_cast<std::ptrdiff_t>(W))
                        continue;
                      adj[n.a][((n0 * C + c) * H + ih) * W + iw] +=
                          u * vw[((f * C + c) * kh + i) * kw + j];
                      adj[n.b][((f * C + c) * kh + i) * kw + j] +=
                          u * vx[((n0 * C + c) * H + ih) * W + iw];
                    }
              }
        break;
      }
      case Op::kRelu: {
        touch(n.a);
        const Tensor& vx = nodes_[n.a].value;
        // subgradient at exactly 0 is 0
        for (std::size_t i = 0; i < up.size(); ++i)
          if (vx[i] > 0.0) adj[n.a][i] += up[i];
        break;
      }
      case Op::kTanh:
        touch(n.a);
        for (std::size_t i = 0; i < up.size(); ++i)
          adj[n.a][i] += up[i] * (1.0 - n.value[i] * n.value[i]);
        break;
      case Op::kSum:
        touch(n.a);
        for (std::size_t i = 0; i < adj[n.a].size(); ++i)
          adj[n.a][i] += up[0];
        break;
      case Op::kSoftmaxCe: {
        touch(n.a);
        const std::size_t N = n.saved.shape()[0], K = n.saved.shape()[1];
        const double u = up[0] / static_cast<double>(N);
        for (std::size_t r = 0; r < N; ++r)
          for (std::size_t k = 0; k < K; ++k) {
            double g = n.saved[r * K + k];
            if (static_cast<int>(k) == n.labels[r]) g -= 1.0;
            adj[n.a][r * K + k] += u * g;
          }
        break;
      }
      case Op::kMse: {
        touch(n.a);
        touch(n.b);
        const Tensor &vp = nodes_[n.a].value, &vt = nodes_[n.b].value;
        const double u = up[0] * 2.0 / static_cast<double>(vp.size());
        for (std::size_t i = 0; i < vp.size(); ++i) {
          adj[n.a][i] += u * (vp[i] - vt[i]);
          adj[n.b][i] -= u * (vp[i] - vt[i]);
        }
        break;
      }
      case Op::kCwMargin: {
        touch(n.a);
        const std::size_t N = n.saved.shape()[0];
        const std::size_t K = nodes_[n.a].value.shape()[1];
        for (std::size_t r = 0; r < N; ++r) {
          if (n.saved[r * 2] == 0.0) continue;
          const std::size_t y = static_cast<std::size_t>(n.labels[r]);
          const std::size_t other =
              static_cast<std::size_t>(n.saved[r * 2 + 1]);
          const double sgn = n.flag ? -1.0 : 1.0;
          adj[n.a][r * K + y] += sgn * up[0];
          adj[n.a][r * K + other] -= sgn * up[0];
        }
        break;
      }
      case Op::kCustom: {
        touch(n.a);
        Tensor g = n.vjp(nodes_[n.a].value, up);
        if (!g.same_shape(nodes_[n.a].value))
          throw std::invalid_argument(
              "custom backward returned shape " + shape_str(g.shape()) +
              ", expected " + shape_str(nodes_[n.a].value.shape()));
        for (std::size_t i = 0; i < g.size(); ++i) adj[n.a][i] += g[i];
        break;
      }
    }
  }
  for (std::size_t i = 0; i < adj.size(); ++i)
    if (!live[i]) adj[i] = Tensor(nodes_[i].value.shape());
  return Gradient(std::move(adj));
}

ValueId tape_reshape(Tape& tape, ValueId x, Shape target) {
  Tensor v = tape.value(x).reshaped(target);
  return tape.custom(x, std::move(v), [](const Tensor& in, const Tensor& up) {
    return up.reshaped(in.shape());
  });
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace advgrad
