#include "defenses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace advgrad {

ValueId Preprocessor::record(Tape& tape, ValueId x) const {
  Tensor out = apply(tape.value(x));
  const Preprocessor* self = this;
  return tape.custom(x, std::move(out),
                     [self](const Tensor& in, const Tensor& up) {
                       return self->vjp(in, up);
                     });
}

namespace {

// reflect-101: index -1 maps to 1, index H maps to H-2
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (static_cast<std::ptrdiff_t>(n) - 1);
  i = ((i % period) + period) % period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

// Treat the last two dims as H x W; everything before is batch/channel.
void spatial_dims(const Shape& s, std::size_t& outer, std::size_t& h,
                  std::size_t& w) {
  if (s.size() < 2)
    throw std::invalid_argument("2d filter: input rank must be >= 2, got " +
                                shape_str(s));
  h = s[s.size() - 2];
  w = s[s.size() - 1];
  outer = shape_numel(s) / (h * w);
}

}  // namespace

Tensor bit_squeeze(const Tensor& x, int bit_depth) {
  if (bit_depth < 1 || bit_depth > 8)
    throw std::invalid_argument("bit_squeeze: bit depth must be in 1..8, got " +
                                std::to_string(bit_depth));
  const double levels = std::ldexp(1.0, bit_depth) - 1.0;
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = round_half_away(out[i] * levels) / levels;
  return out;
}

Tensor median_smooth_2d(const Tensor& x, int kernel) {
  if (kernel < 1 || kernel % 2 == 0)
    throw std::invalid_argument("median_smooth_2d: kernel must be odd, got " +
                                std::to_string(kernel));
  std::size_t outer, h, w;
  spatial_dims(x.shape(), outer, h, w);
  if (static_cast<std::size_t>(kernel) > std::min(h, w))
    throw std::invalid_argument("median_smooth_2d: kernel exceeds image size");
  const int r = kernel / 2;
  Tensor out(x.shape());
  std::vector<double> window;
  window.reserve(static_cast<std::size_t>(kernel) * kernel);
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * h * w;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        window.clear();
        for (int di = -r; di <= r; ++di)
          for (int dj = -r; dj <= r; ++dj) {
            const std::size_t ii = reflect(static_cast<std::ptrdiff_t>(i) + di, h);
            const std::size_t jj = reflect(static_cast<std::ptrdiff_t>(j) + dj, w);
            window.push_back(x[base + ii * w + jj]);
          }
        std::nth_element(window.begin(), window.begin() + window.size() / 2,
                         window.end());
        out[base + i * w + j] = window[window.size() / 2];
      }
  }
  return out;
}

Tensor linear_smooth_2d(const Tensor& x, const Tensor& kernel) {
  if (kernel.shape().size() != 2)
    throw std::invalid_argument("linear_smooth_2d: kernel must be 2d");
  const std::size_t kh = kernel.shape()[0], kw = kernel.shape()[1];
  std::size_t outer, h, w;
  spatial_dims(x.shape(), outer, h, w);
  const int rh = static_cast<int>(kh) / 2, rw = static_cast<int>(kw) / 2;
  Tensor out(x.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * h * w;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        double acc = 0.0;
        for (std::size_t a = 0; a < kh; ++a)
          for (std::size_t b = 0; b < kw; ++b) {
            const std::size_t ii = reflect(
                static_cast<std::ptrdiff_t>(i) + static_cast<int>(a) - rh, h);
            const std::size_t jj = reflect(
                static_cast<std::ptrdiff_t>(j) + static_cast<int>(b) - rw, w);
            acc += kernel[a * kw + b] * x[base + ii * w + jj];
          }
        out[base + i * w + j] = acc;
      }
  }
  return out;
}

Tensor average_kernel(int k) {
  if (k < 1 || k % 2 == 0)
    throw std::invalid_argument("average kernel size must be odd");
  return Tensor::full({static_cast<std::size_t>(k), static_cast<std::size_t>(k)},
                      1.0 / (static_cast<double>(k) * k));
}

Tensor gaussian_kernel(int k, double sigma) {
  if (k < 1 || k % 2 == 0)
    throw std::invalid_argument("gaussian kernel size must be odd");
  if (!(sigma > 0.0))
    throw std::invalid_argument("gaussian kernel: sigma must be > 0");
  Tensor kern({static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
  const int r = k / 2;
  double total = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double d2 = static_cast<double>((i - r) * (i - r) + (j - r) * (j - r));
      kern[static_cast<std::size_t>(i * k + j)] =
          std::exp(-d2 / (2.0 * sigma * sigma));
      total += kern[static_cast<std::size_t>(i * k + j)];
    }
  for (std::size_t i = 0; i < kern.size(); ++i) kern[i] /= total;
  return kern;
}

namespace {

// Orthonormal DCT-II basis, 8x8.
const std::array<double, 64>& dct_matrix() {
  static const std::array<double, 64> m = [] {
    std::array<double, 64> c{};
    for (int u = 0; u < 8; ++u) {
      const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int v = 0; v < 8; ++v)
        c[u * 8 + v] = a * std::cos((2.0 * v + 1.0) * u * M_PI / 16.0);
    }
    return c;
  }();
  return m;
}

// ITU-T T.81 luminance quantization table.
constexpr std::array<int, 64> kLuminanceTable = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

void block_transform(double block[64], const std::array<double, 64>& table) {
  const auto& C = dct_matrix();
  double tmp[64], coef[64];
  // coef = C * block * C^T
  for (int u = 0; u < 8; ++u)
    for (int j = 0; j < 8; ++j) {
      double s = 0.0;
      for (int t = 0; t < 8; ++t) s += C[u * 8 + t] * block[t * 8 + j];
      tmp[u * 8 + j] = s;
    }
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int t = 0; t < 8; ++t) s += tmp[u * 8 + t] * C[v * 8 + t];
      coef[u * 8 + v] = s;
    }
  // a unit step is a no-op: no information is removed, so skip the rounding
  // and keep the DCT roundtrip exact
  for (int i = 0; i < 64; ++i)
    if (table[i] != 1.0)
      coef[i] = round_half_away(coef[i] / table[i]) * table[i];
  // block = C^T * coef * C
  for (int i = 0; i < 8; ++i)
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int t = 0; t < 8; ++t) s += C[t * 8 + i] * coef[t * 8 + v];
      tmp[i * 8 + v] = s;
    }
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      double s = 0.0;
      for (int t = 0; t < 8; ++t) s += tmp[i * 8 + t] * C[t * 8 + j];
      block[i * 8 + j] = s;
    }
}

}  // namespace

std::array<double, 64> jpeg_quant_table(int quality) {
  if (quality < 1 || quality > 100)
    throw std::invalid_argument("jpeg: quality must be in 1..100, got " +
                                std::to_string(quality));
  const double scale =
      quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;
  std::array<double, 64> t{};
  for (int i = 0; i < 64; ++i) {
    double v = std::floor((kLuminanceTable[i] * scale + 50.0) / 100.0);
    t[i] = std::max(1.0, v);
  }
  return t;
}

Tensor jpeg_filter_with_table(const Tensor& x,
                              const std::array<double, 64>& table) {
  std::size_t outer, h, w;
  spatial_dims(x.shape(), outer, h, w);
  const std::size_t hp = (h + 7) / 8 * 8, wp = (w + 7) / 8 * 8;
  Tensor out(x.shape());
  std::vector<double> padded(hp * wp);
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * h * w;
    // edge replication to multiples of 8, scaled to the [-128, 127] range
    for (std::size_t i = 0; i < hp; ++i)
      for (std::size_t j = 0; j < wp; ++j) {
        const std::size_t ii = std::min(i, h - 1), jj = std::min(j, w - 1);
        padded[i * wp + j] = x[base + ii * w + jj] * 255.0 - 128.0;
      }
    double block[64];
    for (std::size_t bi = 0; bi < hp; bi += 8)
      for (std::size_t bj = 0; bj < wp; bj += 8) {
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j)
            block[i * 8 + j] = padded[(bi + i) * wp + bj + j];
        block_transform(block, table);
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j)
            padded[(bi + i) * wp + bj + j] = block[i * 8 + j];
      }
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        out[base + i * w + j] = std::min(
            1.0, std::max(0.0, (padded[i * wp + j] + 128.0) / 255.0));
  }
  return out;
}

Tensor jpeg_filter(const Tensor& x, int quality) {
  return jpeg_filter_with_table(x, jpeg_quant_table(quality));
}

namespace {

class BitSqueezer final : public Preprocessor {
 public:
  explicit BitSqueezer(int b) : b_(b) {
    if (b < 1 || b > 8)
      throw std::invalid_argument("bitsqueeze: bit depth must be in 1..8");
  }
  std::string describe() const override {
    return "bitsqueeze:" + std::to_string(b_);
  }
  Tensor apply(const Tensor& x) const override { return bit_squeeze(x, b_); }
  Tensor vjp(const Tensor& x, const Tensor&) const override {
    return Tensor(x.shape());  // staircase: zero almost everywhere
  }
  bool differentiable() const override { return false; }

 private:
  int b_;
};

class MedianSmoother final : public Preprocessor {
 public:
  explicit MedianSmoother(int k) : k_(k) {
    if (k < 1 || k % 2 == 0)
      throw std::invalid_argument("median: kernel must be odd");
  }
  std::string describe() const override {
    return "median:" + std::to_string(k_);
  }
  Tensor apply(const Tensor& x) const override {
    return median_smooth_2d(x, k_);
  }
  // upstream routes to the window element that held the median
  Tensor vjp(const Tensor& x, const Tensor& up) const override;

 private:
  int k_;
};

Tensor MedianSmoother::vjp(const Tensor& x, const Tensor& up) const {
  std::size_t outer, h, w;
  spatial_dims(x.shape(), outer, h, w);
  const int r = k_ / 2;
  Tensor g(x.shape());
  std::vector<std::pair<double, std::size_t>> window;
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * h * w;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        window.clear();
        for (int di = -r; di <= r; ++di)
          for (int dj = -r; dj <= r; ++dj) {
            const std::size_t ii = reflect(static_cast<std::ptrdiff_t>(i) + di, h);
            const std::size_t jj = reflect(static_cast<std::ptrdiff_t>(j) + dj, w);
            window.emplace_back(x[base + ii * w + jj], base + ii * w + jj);
          }
        std::nth_element(window.begin(), window.begin() + window.size() / 2,
                         window.end());
        g[window[window.size() / 2].second] += up[base + i * w + j];
      }
  }
  return g;
}

class LinearSmoother final : public Preprocessor {
 public:
  LinearSmoother(std::string desc, Tensor kernel)
      : desc_(std::move(desc)), kernel_(std::move(kernel)) {}
  std::string describe() const override { return desc_; }
  Tensor apply(const Tensor& x) const override {
    return linear_smooth_2d(x, kernel_);
  }
  Tensor vjp(const Tensor& x, const Tensor& up) const override;

 private:
  std::string desc_;
  Tensor kernel_;
};

Tensor LinearSmoother::vjp(const Tensor& x, const Tensor& up) const {
  // scatter: out[i,j] read x[reflect(i+a-r), reflect(j+b-r)], so the adjoint
  // accumulates up[i,j]*w[a,b] back at those positions
  std::size_t outer, h, w;
  spatial_dims(x.shape(), outer, h, w);
  const std::size_t kh = kernel_.shape()[0], kw = kernel_.shape()[1];
  const int rh = static_cast<int>(kh) / 2, rw = static_cast<int>(kw) / 2;
  Tensor g(x.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * h * w;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double u = up[base + i * w + j];
        if (u == 0.0) continue;
        for (std::size_t a = 0; a < kh; ++a)
          for (std::size_t b = 0; b < kw; ++b) {
            const std::size_t ii = reflect(
                static_cast<std::ptrdiff_t>(i) + static_cast<int>(a) - rh, h);
            const std::size_t jj = reflect(
                static_cast<std::ptrdiff_t>(j) + static_cast<int>(b) - rw, w);
            g[base + ii * w + jj] += u * kernel_[a * kw + b];
          }
      }
  }
  return g;
}

class JpegFilter final : public Preprocessor {
 public:
  explicit JpegFilter(int q) : q_(q), table_(jpeg_quant_table(q)) {}
  std::string describe() const override { return "jpeg:" + std::to_string(q_); }
  Tensor apply(const Tensor& x) const override {
    return jpeg_filter_with_table(x, table_);
  }
  Tensor vjp(const Tensor& x, const Tensor&) const override {
    return Tensor(x.shape());  // quantizer: zero almost everywhere
  }
  bool differentiable() const override { return false; }

 private:
  int q_;
  std::array<double, 64> table_;
};

}  // namespace

PreprocessorPtr make_bit_squeezer(int bit_depth) {
  return std::make_shared<BitSqueezer>(bit_depth);
}
PreprocessorPtr make_median_smoother(int kernel) {
  return std::make_shared<MedianSmoother>(kernel);
}
PreprocessorPtr make_average_smoother(int kernel) {
  return std::make_shared<LinearSmoother>("average:" + std::to_string(kernel),
                                          average_kernel(kernel));
}
PreprocessorPtr make_gaussian_smoother(int kernel, double sigma) {
  std::ostringstream d;
  d << "gaussian:" << kernel << ':' << sigma;
  return std::make_shared<LinearSmoother>(d.str(),
                                          gaussian_kernel(kernel, sigma));
}
PreprocessorPtr make_conv_smoother(Tensor kernel) {
  std::ostringstream d;
  d << "convsmooth:" << kernel.shape()[0] << 'x' << kernel.shape()[1];
  return std::make_shared<LinearSmoother>(d.str(), std::move(kernel));
}
PreprocessorPtr make_jpeg_filter(int quality) {
  return std::make_shared<JpegFilter>(quality);
}

Tensor DefensePipeline::apply(const Tensor& x) const {
  Tensor cur = x;
  for (const auto& s : stages_) cur = s->apply(cur);
  return cur;
}

ValueId DefensePipeline::record(Tape& tape, ValueId x) const {
  ValueId cur = x;
  for (const auto& s : stages_) cur = s->record(tape, cur);
  return cur;
}

std::string DefensePipeline::describe() const {
  std::string d;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    if (i) d += ',';
    d += stages_[i]->describe();
  }
  return d;
}

PreprocessorPtr make_preprocessor(const std::string& token) {
  std::vector<std::string> parts;
  std::stringstream ss(token);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  if (parts.empty()) throw std::invalid_argument("empty defense stage");
  auto want = [&](std::size_t n) {
    if (parts.size() != n + 1)
      throw std::invalid_argument("defense stage '" + token + "': expected " +
                                  std::to_string(n) + " parameter(s)");
  };
  try {
    if (parts[0] == "bitsqueeze") {
      want(1);
      return make_bit_squeezer(std::stoi(parts[1]));
    }
    if (parts[0] == "median") {
      want(1);
      return make_median_smoother(std::stoi(parts[1]));
    }
    if (parts[0] == "average") {
      want(1);
      return make_average_smoother(std::stoi(parts[1]));
    }
    if (parts[0] == "gaussian") {
      want(2);
      return make_gaussian_smoother(std::stoi(parts[1]), std::stod(parts[2]));
    }
    if (parts[0] == "jpeg") {
      want(1);
      return make_jpeg_filter(std::stoi(parts[1]));
    }
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception&) {
    throw std::invalid_argument("defense stage '" + token +
                                "': bad parameter");
  }
  throw std::invalid_argument(
      "unknown defense '" + parts[0] +
      "' (known: bitsqueeze, median, average, gaussian, jpeg)");
}

DefensePipeline DefensePipeline::parse(const std::string& spec) {
  std::vector<PreprocessorPtr> stages;
  if (!spec.empty()) {
    std::stringstream ss(spec);
    std::string token;
    while (std::getline(ss, token, ',')) stages.push_back(make_preprocessor(token));
  }
  return DefensePipeline(std::move(stages));
}

}  // namespace advgrad
