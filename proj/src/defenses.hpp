#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "tensor.hpp"

namespace advgrad {

// A forward input transformation preserving shape and the [0,1] range.
// `vjp` is the transformation's own local backward (zero almost everywhere
// for the quantizers); the bpda module substitutes it when asked to.
class Preprocessor {
 public:
  virtual ~Preprocessor() = default;
  virtual std::string describe() const = 0;
  virtual Tensor apply(const Tensor& x) const = 0;
  virtual Tensor vjp(const Tensor& x, const Tensor& upstream) const = 0;
  // False for quantizers whose true derivative is zero almost everywhere;
  // those are the stages a straight-through wrapper targets.
  virtual bool differentiable() const { return true; }
  // Record forward+backward on a tape as a single node.
  ValueId record(Tape& tape, ValueId x) const;
};

using PreprocessorPtr = std::shared_ptr<const Preprocessor>;

// Quantize to 2^b levels; rounding half away from zero.
Tensor bit_squeeze(const Tensor& x, int bit_depth);

// Per-channel sliding-window median, reflect padding, odd kernel.
Tensor median_smooth_2d(const Tensor& x, int kernel);

// Per-channel 2-D cross-correlation with an arbitrary kernel, reflect padding.
Tensor linear_smooth_2d(const Tensor& x, const Tensor& kernel);
Tensor average_kernel(int k);
Tensor gaussian_kernel(int k, double sigma);

// Lossy JPEG-style quantization: 8x8 block DCT against the quality-scaled
// standard luminance table. No entropy coding, grayscale only.
Tensor jpeg_filter(const Tensor& x, int quality);
// Test hook: same transform against an explicit quantization table
// (row-major 8x8). The all-ones table makes the roundtrip lossless.
Tensor jpeg_filter_with_table(const Tensor& x,
                              const std::array<double, 64>& table);
std::array<double, 64> jpeg_quant_table(int quality);

PreprocessorPtr make_bit_squeezer(int bit_depth);
PreprocessorPtr make_median_smoother(int kernel);
PreprocessorPtr make_average_smoother(int kernel);
PreprocessorPtr make_gaussian_smoother(int kernel, double sigma);
PreprocessorPtr make_conv_smoother(Tensor kernel);
PreprocessorPtr make_jpeg_filter(int quality);

// Ordered stages applied left to right.
class DefensePipeline {
 public:
  DefensePipeline() = default;
  explicit DefensePipeline(std::vector<PreprocessorPtr> stages)
      : stages_(std::move(stages)) {}

  Tensor apply(const Tensor& x) const;
  ValueId record(Tape& tape, ValueId x) const;
  std::string describe() const;  // "median:3,bitsqueeze:1"
  std::size_t size() const { return stages_.size(); }
  bool empty() const { return stages_.empty(); }
  const PreprocessorPtr& stage(std::size_t i) const { return stages_.at(i); }
  std::vector<PreprocessorPtr>& stages() { return stages_; }

  // Grammar: comma-separated name:param[:param] stages, e.g.
  // "median:3,bitsqueeze:1,gaussian:5:1.0,jpeg:75". Empty string -> empty
  // pipeline.
  static DefensePipeline parse(const std::string& spec);

 private:
  std::vector<PreprocessorPtr> stages_;
};

PreprocessorPtr make_preprocessor(const std::string& token);

}  // namespace advgrad
