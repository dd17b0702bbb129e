#pragma once

#include <cstdint>
#include <vector>

#include "nexus/volume.hpp"

namespace nexus {

/// 2D binary mask helpers over row-major [H, W] grids, 3x3 square
/// (8-connected) structuring element. Pixels outside the image are
/// background for erosion/dilation taken alone; opening/closing handle
/// the border so that closing stays extensive (it never erodes an object
/// just for touching the image edge).
namespace morph {

using Mask = std::vector<std::uint8_t>;

Mask erode(const Mask& in, std::size_t h, std::size_t w);
Mask dilate(const Mask& in, std::size_t h, std::size_t w);
Mask open(const Mask& in, std::size_t h, std::size_t w);
Mask close(const Mask& in, std::size_t h, std::size_t w);

} // namespace morph

/// Morphological cleanup of a predicted label map: per slice, the binary
/// tumor mask (labels > 0) is opened then closed. Pixels the cleanup
/// removes revert to 0; pixels the closing adds take the majority tumor
/// label of their 8-neighborhood in the original map (ties to the lower
/// label, background-only neighborhoods stay 0). No pixel outside the
/// 1-pixel neighborhood of the original mask is ever touched.
LabelMap morph_cleanup(const LabelMap& map);

} // namespace nexus
