#pragma once

#include <string>
#include <vector>

#include "lw/tensor.hpp"

namespace lw {

// Pixel images are {3,H,W} tensors with values in [0,1]; latents are {4,h,w}.
// Both travel as plain tensors, validated at module boundaries.
using PixelImage = Tensor;
using LatentTensor = Tensor;

void check_pixel_image(const Tensor& x, const char* who);
void check_latent(const Tensor& x, const char* who);

void clamp01(Tensor& x);

// Rec.601 luminance averaged over the image.
Real gray_mean(const Tensor& x);

Tensor center_crop(const Tensor& x, int out_h, int out_w);
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);

// PNG for datasets and artifacts; JPEG backs the compression attack.
Tensor load_image(const std::string& path);
void save_png(const Tensor& x, const std::string& path);
std::vector<unsigned char> encode_jpeg(const Tensor& x, int quality);
Tensor decode_jpeg(const std::vector<unsigned char>& bytes);

}  // namespace lw
