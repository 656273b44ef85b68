#pragma once

#include <string>

#include "training.hpp"

namespace advgrad {

// IDX (MNIST-layout) parser: 2 zero bytes, 0x08 type byte, dimension count,
// big-endian u32 sizes, raw unsigned bytes. Pixels land in [0,1] as v/255.
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path);

// Writers, for generating test corpora in the same format.
void save_idx_images(const Dataset& dataset, const std::string& path);
void save_idx_labels(const Dataset& dataset, const std::string& path);

}  // namespace advgrad
