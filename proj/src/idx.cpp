#include "idx.hpp"

#include <cmath>
#include <fstream>
#include <vector>

#include "errors.hpp"

namespace advgrad {

namespace {

struct IdxPayload {
  std::vector<std::size_t> dims;
  std::vector<unsigned char> data;
};

IdxPayload read_idx(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("idx: cannot open '" + path + "'");
  unsigned char header[4];
  if (!is.read(reinterpret_cast<char*>(header), 4))
    throw FormatError("idx '" + path + "': truncated header at offset 0");
  if (header[0] != 0 || header[1] != 0)
    throw FormatError("idx '" + path +
                      "': bytes at offset 0-1 must be zero");
  if (header[2] != 0x08)
    throw FormatError("idx '" + path + "': type byte at offset 2 is " +
                      std::to_string(header[2]) +
                      ", expected 0x08 (unsigned byte)");
  const unsigned ndims = header[3];
  if (ndims == 0)
    throw FormatError("idx '" + path + "': zero dimensions at offset 3");
  IdxPayload out;
  std::size_t total = 1;
  for (unsigned d = 0; d < ndims; ++d) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
      throw FormatError("idx '" + path + "': truncated size field at offset " +
                        std::to_string(4 + 4 * d));
    const std::size_t dim = (static_cast<std::size_t>(b[0]) << 24) |
                            (static_cast<std::size_t>(b[1]) << 16) |
                            (static_cast<std::size_t>(b[2]) << 8) |
                            static_cast<std::size_t>(b[3]);
    if (dim == 0)
      throw FormatError("idx '" + path + "': zero dimension size at offset " +
                        std::to_string(4 + 4 * d));
    out.dims.push_back(dim);
    total *= dim;
  }
  out.data.resize(total);
  if (!is.read(reinterpret_cast<char*>(out.data.data()),
               static_cast<std::streamsize>(total)))
    throw FormatError("idx '" + path + "': payload truncated, expected " +
                      std::to_string(total) + " bytes from offset " +
                      std::to_string(4 + 4 * ndims));
  is.peek();
  if (!is.eof())
    throw FormatError("idx '" + path + "': trailing bytes after offset " +
                      std::to_string(4 + 4 * ndims + total));
  return out;
}

}  // namespace

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  IdxPayload imgs = read_idx(images_path);
  IdxPayload labs = read_idx(labels_path);
  if (imgs.dims.size() < 2)
    throw FormatError("idx '" + images_path +
                      "': image file needs at least 2 dimensions");
  if (labs.dims.size() != 1)
    throw FormatError("idx '" + labels_path +
                      "': label file must be 1-dimensional");
  if (imgs.dims[0] != labs.dims[0])
    throw FormatError("idx: image count " + std::to_string(imgs.dims[0]) +
                      " != label count " + std::to_string(labs.dims[0]));
  Shape shape(imgs.dims.begin(), imgs.dims.end());
  std::vector<double> pixels(imgs.data.size());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    pixels[i] = static_cast<double>(imgs.data[i]) / 255.0;
  std::vector<int> labels(labs.data.begin(), labs.data.end());
  return {Tensor(std::move(shape), std::move(pixels)), std::move(labels)};
}

namespace {

void write_idx_header(std::ofstream& os, const std::vector<std::size_t>& dims) {
  const unsigned char head[4] = {0, 0, 0x08,
                                 static_cast<unsigned char>(dims.size())};
  os.write(reinterpret_cast<const char*>(head), 4);
  for (std::size_t d : dims) {
    const unsigned char b[4] = {static_cast<unsigned char>((d >> 24) & 0xff),
                                static_cast<unsigned char>((d >> 16) & 0xff),
                                static_cast<unsigned char>((d >> 8) & 0xff),
                                static_cast<unsigned char>(d & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
  }
}

}  // namespace

void save_idx_images(const Dataset& dataset, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("idx: cannot open '" + path + "' for write");
  write_idx_header(os, std::vector<std::size_t>(dataset.images.shape().begin(),
                                                dataset.images.shape().end()));
  for (std::size_t i = 0; i < dataset.images.size(); ++i) {
    const double v = std::min(1.0, std::max(0.0, dataset.images[i]));
    const unsigned char b =
        static_cast<unsigned char>(round_half_away(v * 255.0));
    os.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!os) throw FormatError("idx: write failed for '" + path + "'");
}

void save_idx_labels(const Dataset& dataset, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("idx: cannot open '" + path + "' for write");
  write_idx_header(os, {dataset.labels.size()});
  for (int l : dataset.labels) {
    const unsigned char b = static_cast<unsigned char>(l);
    os.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!os) throw FormatError("idx: write failed for '" + path + "'");
}

}  // namespace advgrad
