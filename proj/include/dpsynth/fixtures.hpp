#pragma once

#include <cstdint>

#include "dpsynth/dataset.hpp"

namespace dpsynth {

/// Synthetic 8x8x1 "digit" dataset with K=10 classes: one blocky glyph
/// template per class plus per-sample jitter. Values are f32-representable
/// so save/load round-trips are bit-exact.
Dataset make_toy_digits(std::size_t n, uint64_t seed);

/// 2-D mixture of three Gaussians inside the unit square, stored as
/// [N,1,2,1] images with one class per component.
Dataset make_three_gaussians(std::size_t n, uint64_t seed);

} // namespace dpsynth
