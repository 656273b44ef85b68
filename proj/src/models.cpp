#include "models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "errors.hpp"

namespace advgrad {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'V', 'G'};
constexpr std::uint32_t kFormatVersion = 1;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(part);
  return out;
}

std::size_t parse_dim(const std::string& s) {
  std::size_t pos = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(s, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad architecture descriptor token '" + s + "'");
  }
  if (pos != s.size() || v == 0)
    throw std::invalid_argument("bad architecture descriptor token '" + s + "'");
  return v;
}

}  // namespace

Tensor Model::adapt_input(const Tensor& images) const {
  if (images.shape().empty())
    throw std::invalid_argument("adapt_input: empty shape");
  const std::size_t n = images.shape()[0];
  const std::size_t per = images.size() / n;
  if (per != input_size())
    throw std::invalid_argument("adapt_input: example size " +
                                std::to_string(per) + " != model input size " +
                                std::to_string(input_size()));
  Shape s{n};
  for (auto d : input_shape()) s.push_back(d);
  return images.reshaped(s);
}

MlpClassifier::MlpClassifier(std::vector<std::size_t> widths,
                             std::vector<DenseLayer> layers)
    : widths_(std::move(widths)), layers_(std::move(layers)) {
  if (widths_.size() < 2 || layers_.size() != widths_.size() - 1)
    throw std::invalid_argument("mlp: inconsistent layer structure");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Shape want{widths_[i], widths_[i + 1]};
    if (layers_[i].w.shape() != want || layers_[i].b.size() != widths_[i + 1])
      throw std::invalid_argument("mlp: layer " + std::to_string(i) +
                                  " parameter shape mismatch");
  }
}

std::string MlpClassifier::descriptor() const {
  std::string d = "mlp:";
  for (std::size_t i = 0; i < widths_.size(); ++i) {
    if (i) d += '-';
    d += std::to_string(widths_[i]);
  }
  return d;
}

ValueId MlpClassifier::predict_logits(Tape& tape, ValueId x,
                                      std::vector<ValueId>* param_ids) const {
  if (tape.value(x).shape().size() != 2 ||
      tape.value(x).shape()[1] != widths_.front())
    throw std::invalid_argument("predict: input shape " +
                                shape_str(tape.value(x).shape()) +
                                " does not match model input width " +
                                std::to_string(widths_.front()));
  ValueId h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    ValueId w = tape.leaf(layers_[i].w);
    ValueId b = tape.leaf(layers_[i].b);
    if (param_ids) {
      param_ids->push_back(w);
      param_ids->push_back(b);
    }
    h = tape.add_row_bias(tape.matmul(h, w), b);
    if (i + 1 < layers_.size()) h = tape.relu(h);
  }
  return h;
}

ValueId MlpClassifier::predict_features(Tape& tape, ValueId x,
                                        std::size_t layer_index) const {
  if (layer_index >= layers_.size())
    throw std::out_of_range("predict_features: layer index " +
                            std::to_string(layer_index) + " out of range [0," +
                            std::to_string(layers_.size()) + ")");
  ValueId h = x;
  for (std::size_t i = 0; i <= layer_index; ++i) {
    ValueId w = tape.leaf(layers_[i].w);
    ValueId b = tape.leaf(layers_[i].b);
    h = tape.add_row_bias(tape.matmul(h, w), b);
    if (i + 1 < layers_.size()) h = tape.relu(h);
  }
  return h;
}

std::vector<Tensor*> MlpClassifier::param_tensors() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  return out;
}

std::vector<const Tensor*> MlpClassifier::param_tensors() const {
  std::vector<const Tensor*> out;
  for (auto& l : layers_) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  return out;
}

ConvClassifier::ConvClassifier(Shape input_chw, std::vector<ConvLayer> convs,
                               std::vector<DenseLayer> dense)
    : input_chw_(std::move(input_chw)),
      convs_(std::move(convs)),
      dense_(std::move(dense)) {
  if (input_chw_.size() != 3 || convs_.empty() || dense_.empty())
    throw std::invalid_argument("conv model: need CxHxW input, >=1 conv, >=1 dense");
  // walk the spatial dimensions to validate consistency
  std::size_t c = input_chw_[0], h = input_chw_[1], w = input_chw_[2];
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const auto& cl = convs_[i];
    const auto& ws = cl.w.shape();
    if (ws.size() != 4 || ws[1] != c)
      throw std::invalid_argument("conv layer " + std::to_string(i) +
                                  ": channel mismatch");
    const std::size_t p = static_cast<std::size_t>(cl.padding);
    if (ws[2] > h + 2 * p || ws[3] > w + 2 * p)
      throw std::invalid_argument("conv layer " + std::to_string(i) +
                                  ": kernel larger than padded input");
    h = (h + 2 * p - ws[2]) / cl.stride + 1;
    w = (w + 2 * p - ws[3]) / cl.stride + 1;
    c = ws[0];
  }
  flat_after_conv_ = c * h * w;
  if (dense_.front().w.shape()[0] != flat_after_conv_)
    throw std::invalid_argument("conv model: dense head expects " +
                                std::to_string(dense_.front().w.shape()[0]) +
                                " inputs, conv stack yields " +
                                std::to_string(flat_after_conv_));
}

std::size_t ConvClassifier::num_classes() const {
  return dense_.back().w.shape()[1];
}

std::string ConvClassifier::descriptor() const {
  std::ostringstream d;
  d << "conv:" << input_chw_[0] << 'x' << input_chw_[1] << 'x' << input_chw_[2];
  for (const auto& cl : convs_) {
    const auto& ws = cl.w.shape();
    d << ":c" << ws[0] << 'x' << ws[2] << 'x' << ws[3] << 's' << cl.stride
      << 'p' << cl.padding;
  }
  for (const auto& dl : dense_) d << ":d" << dl.w.shape()[1];
  return d.str();
}

ValueId ConvClassifier::forward_to(Tape& tape, ValueId x, std::size_t upto,
                                   std::vector<ValueId>* param_ids) const {
  // copy: pushing nodes may reallocate the tape's storage
  const Shape xs = tape.value(x).shape();
  if (xs.size() != 4 || xs[1] != input_chw_[0] || xs[2] != input_chw_[1] ||
      xs[3] != input_chw_[2])
    throw std::invalid_argument("predict: input shape " + shape_str(xs) +
                                " does not match model input " +
                                shape_str(input_chw_));
  ValueId h = x;
  std::size_t layer = 0;
  for (const auto& cl : convs_) {
    if (layer >= upto) return h;
    ValueId w = tape.leaf(cl.w);
    ValueId b = tape.leaf(cl.b);
    if (param_ids) {
      param_ids->push_back(w);
      param_ids->push_back(b);
    }
    h = tape.relu(tape.add_chan_bias(tape.conv2d(h, w, cl.stride, cl.padding), b));
    ++layer;
  }
  h = tape_reshape(tape, h, {xs[0], flat_after_conv_});
  for (std::size_t i = 0; i < dense_.size(); ++i) {
    if (layer >= upto) return h;
    ValueId w = tape.leaf(dense_[i].w);
    ValueId b = tape.leaf(dense_[i].b);
    if (param_ids) {
      param_ids->push_back(w);
      param_ids->push_back(b);
    }
    h = tape.add_row_bias(tape.matmul(h, w), b);
    if (i + 1 < dense_.size()) h = tape.relu(h);
    ++layer;
  }
  return h;
}

ValueId ConvClassifier::predict_logits(Tape& tape, ValueId x,
                                       std::vector<ValueId>* param_ids) const {
  return forward_to(tape, x, depth(), param_ids);
}

ValueId ConvClassifier::predict_features(Tape& tape, ValueId x,
                                         std::size_t layer_index) const {
  if (layer_index >= depth())
    throw std::out_of_range("predict_features: layer index " +
                            std::to_string(layer_index) + " out of range [0," +
                            std::to_string(depth()) + ")");
  return forward_to(tape, x, layer_index + 1, nullptr);
}

std::vector<Tensor*> ConvClassifier::param_tensors() {
  std::vector<Tensor*> out;
  for (auto& l : convs_) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  for (auto& l : dense_) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  return out;
}

std::vector<const Tensor*> ConvClassifier::param_tensors() const {
  std::vector<const Tensor*> out;
  for (auto& l : convs_) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  for (auto& l : dense_) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  return out;
}

std::unique_ptr<Model> model_from_descriptor(const std::string& descriptor) {
  auto parts = split(descriptor, ':');
  if (parts.empty())
    throw std::invalid_argument("empty architecture descriptor");
  if (parts[0] == "mlp") {
    if (parts.size() != 2)
      throw std::invalid_argument("mlp descriptor: expected mlp:w0-w1-...-wk");
    std::vector<std::size_t> widths;
    for (const auto& tok : split(parts[1], '-')) widths.push_back(parse_dim(tok));
    if (widths.size() < 2)
      throw std::invalid_argument("mlp descriptor: need at least two widths");
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
      layers.push_back({Tensor({widths[i], widths[i + 1]}),
                        Tensor({widths[i + 1]})});
    return std::make_unique<MlpClassifier>(std::move(widths), std::move(layers));
  }
  if (parts[0] == "conv") {
    if (parts.size() < 3)
      throw std::invalid_argument(
          "conv descriptor: expected conv:CxHxW:cFxKHxKWsSpP...:dN...");
    auto dims = split(parts[1], 'x');
    if (dims.size() != 3)
      throw std::invalid_argument("conv descriptor: input must be CxHxW");
    Shape chw{parse_dim(dims[0]), parse_dim(dims[1]), parse_dim(dims[2])};
    std::vector<ConvLayer> convs;
    std::vector<std::size_t> dense_widths;
    std::size_t in_c = chw[0];
    for (std::size_t i = 2; i < parts.size(); ++i) {
      const std::string& tok = parts[i];
      if (tok.size() >= 2 && tok[0] == 'c') {
        if (!dense_widths.empty())
          throw std::invalid_argument(
              "conv descriptor: conv layer after dense layer");
        unsigned f, kh, kw, s, p;
        if (std::sscanf(tok.c_str(), "c%ux%ux%us%up%u", &f, &kh, &kw, &s, &p) != 5 ||
            f == 0 || kh == 0 || kw == 0 || s == 0)
          throw std::invalid_argument("conv descriptor: bad conv token '" +
                                      tok + "'");
        convs.push_back({Tensor({f, in_c, kh, kw}), Tensor({f}),
                         static_cast<int>(s), static_cast<int>(p)});
        in_c = f;
      } else if (tok.size() >= 2 && tok[0] == 'd') {
        dense_widths.push_back(parse_dim(tok.substr(1)));
      } else {
        throw std::invalid_argument("conv descriptor: bad token '" + tok + "'");
      }
    }
    if (convs.empty() || dense_widths.empty())
      throw std::invalid_argument(
          "conv descriptor: need at least one conv and one dense layer");
    // infer the flat width the conv stack produces
    std::size_t c = chw[0], h = chw[1], w = chw[2];
    for (const auto& cl : convs) {
      const auto& ws = cl.w.shape();
      const std::size_t p = static_cast<std::size_t>(cl.padding);
      if (ws[2] > h + 2 * p || ws[3] > w + 2 * p)
        throw std::invalid_argument("conv descriptor: kernel larger than input");
      h = (h + 2 * p - ws[2]) / cl.stride + 1;
      w = (w + 2 * p - ws[3]) / cl.stride + 1;
      c = ws[0];
    }
    std::vector<DenseLayer> dense;
    std::size_t in_w = c * h * w;
    for (auto out_w : dense_widths) {
      dense.push_back({Tensor({in_w, out_w}), Tensor({out_w})});
      in_w = out_w;
    }
    return std::make_unique<ConvClassifier>(std::move(chw), std::move(convs),
                                            std::move(dense));
  }
  throw std::invalid_argument("unknown architecture kind '" + parts[0] + "'");
}

std::unique_ptr<Model> init_params(const std::string& descriptor,
                                   std::uint64_t seed) {
  auto model = model_from_descriptor(descriptor);
  std::mt19937_64 rng(seed);
  auto params = model->param_tensors();
  // weight/bias pairs in layer order; biases stay zero
  for (std::size_t i = 0; i + 1 < params.size(); i += 2) {
    Tensor& w = *params[i];
    const auto& s = w.shape();
    double fan_in, fan_out;
    if (s.size() == 2) {
      fan_in = static_cast<double>(s[0]);
      fan_out = static_cast<double>(s[1]);
    } else {  // F x C x kh x kw
      fan_in = static_cast<double>(s[1] * s[2] * s[3]);
      fan_out = static_cast<double>(s[0] * s[2] * s[3]);
    }
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = dist(rng);
  }
  return model;
}

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw FormatError(std::string("model file: truncated ") + what);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("model file: cannot open '" + path + "' for write");
  os.write(kMagic, 4);
  write_u32(os, kFormatVersion);
  const std::string desc = model.descriptor();
  write_u32(os, static_cast<std::uint32_t>(desc.size()));
  os.write(desc.data(), static_cast<std::streamsize>(desc.size()));
  for (const Tensor* t : model.param_tensors())
    os.write(reinterpret_cast<const char*>(t->data()),
             static_cast<std::streamsize>(t->size() * sizeof(double)));
  if (!os) throw FormatError("model file: write failed for '" + path + "'");
}

std::unique_ptr<Model> load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("model file: cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("model file: bad magic in '" + path + "'");
  const std::uint32_t version = read_u32(is, "version");
  if (version != kFormatVersion)
    throw FormatError("model file: unsupported format version " +
                      std::to_string(version));
  const std::uint32_t desc_len = read_u32(is, "descriptor length");
  std::string desc(desc_len, '\0');
  if (!is.read(desc.data(), desc_len))
    throw FormatError("model file: truncated descriptor");
  std::unique_ptr<Model> model;
  try {
    model = model_from_descriptor(desc);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
  for (Tensor* t : model->param_tensors())
    if (!is.read(reinterpret_cast<char*>(t->data()),
                 static_cast<std::streamsize>(t->size() * sizeof(double))))
      throw FormatError("model file: parameter payload shorter than the "
                        "architecture '" + desc + "' requires");
  is.peek();
  if (!is.eof())
    throw FormatError("model file: trailing bytes after parameter payload");
  return model;
}

}  // namespace advgrad
