#pragma once

#include <array>
#include <cstdint>

#include "nexus/volume.hpp"

namespace nexus {

/// Synthetic tumor description for phantom volumes. The tumor is a sphere
/// of concentric zones: necrotic core (label 1), enhancing rim (4),
/// non-enhancing band (3) and surrounding edema (2). radius <= 0 produces
/// a tumor-free phantom.
struct TumorSpec {
    double radius = 10.0; // outer edema radius in voxels
    /// Tumor center offset from the brain center, in fractions of the
    /// brain semi-axes (kept inside the brain).
    std::array<double, 3> center_offset = {0.15, 0.12, -0.10};
    double noise_std = 4.0; // additive Gaussian intensity noise inside the head

    bool tumor_free() const { return radius <= 0.0; }
};

/// Labeled 4-modality phantom: an ellipsoidal head with three tissue
/// bands (WM/GM/CSF analogues, distinct per-modality contrast) plus the
/// tumor of `spec`. Labels encode the generative geometry exactly; with
/// noise_std = 0 the modalities are piecewise constant. Intensities are
/// quantized through binary32 so NXV1 round-trips bit-exactly.
VolumeSet generate_phantom(std::uint64_t seed, std::size_t depth, std::size_t height,
                           std::size_t width, const TumorSpec& spec = {});

} // namespace nexus
