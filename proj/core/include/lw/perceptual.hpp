#pragma once

#include <functional>

#include "lw/autograd.hpp"

namespace lw {

// Differentiable visual-similarity loss between image batches {B,3,H,W};
// callers may substitute their own (e.g. a learned perceptual metric).
using PerceptualFn = std::function<ag::Var(const ag::Var& a, const ag::Var& b)>;

// Mean single-scale SSIM over an 11x11 Gaussian window (sigma 1.5),
// valid-region only. Requires H,W >= 11.
ag::Var ssim_index_var(const ag::Var& a, const ag::Var& b);

// Uniform mean of per-scale SSIM over up to max_scales octaves (2x average
// pooling between octaves); scales that no longer fit the window are dropped.
ag::Var ms_ssim_var(const ag::Var& a, const ag::Var& b, int max_scales = 3);

// 1 - ms_ssim: zero iff the images are identical.
ag::Var perceptual_loss_default(const ag::Var& a, const ag::Var& b);

PerceptualFn default_perceptual();

}  // namespace lw
