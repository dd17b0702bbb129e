#pragma once

#include <string>

#include "nexus/volume.hpp"

namespace nexus {

/// Writes one PPM (P6) image per slice into dir: the first modality as a
/// windowed grayscale background with tumor classes tinted red (necrosis,
/// 1), green (edema, 2), blue (non-enhancing, 3) and yellow (enhancing, 4).
/// Files are named slice_000.ppm, slice_001.ppm, ...
void write_overlays(const VolumeSet& vol, const LabelMap& labels, const std::string& dir);

} // namespace nexus
