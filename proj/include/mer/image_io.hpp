#pragma once

#include <string>

#include "mer/tensor.hpp"

namespace mer {

// Reads an 8-bit PNG/JPEG/BMP (detected by magic bytes, not extension) into an
// H x W x 3 tensor with values raw/255. Grayscale inputs replicate to three
// channels, RGBA drops alpha. 16-bit files are rejected.
TensorF load_image(const std::string& path);

// Writes an 8-bit PNG (gray / RGB / RGBA by channel count), byte = round(v*255).
// Output is deterministic: save -> load -> save reproduces the file exactly.
void save_image(const TensorF& img, const std::string& path);

}  // namespace mer
