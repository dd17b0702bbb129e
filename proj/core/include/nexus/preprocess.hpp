#pragma once

#include <vector>

#include "nexus/tensor.hpp"
#include "nexus/volume.hpp"

namespace nexus {

/// Percentile of a sample by linear interpolation between closest ranks.
/// p in [0, 100]; values need not be sorted.
double percentile(std::vector<double> values, double p);

/// Intensity normalization of one [H, W] slice: values below the 1st or
/// above the 99th percentile of the nonzero pixels are clamped, then the
/// nonzero pixels are standardized to mean 0 / std 1. Zero (background)
/// pixels stay zero; a slice whose nonzero pixels are constant
/// (std < 1e-8) comes back all zeros.
Tensor normalize_slice(const Tensor& slice);

enum class NormScope { per_slice, per_volume };

/// Applies intensity normalization to every modality. per_slice treats
/// each [H, W] slice independently; per_volume pools statistics and
/// percentiles over the whole [D, H, W] grid.
VolumeSet preprocess_volume(const VolumeSet& vol, NormScope scope = NormScope::per_slice);

} // namespace nexus
