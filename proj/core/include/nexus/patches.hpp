#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nexus/tensor.hpp"
#include "nexus/volume.hpp"

namespace nexus {

struct VoxelIndex {
    std::size_t slice = 0, row = 0, col = 0;
};

/// Co-centric patch pair classifying the shared center pixel: a 4x33x33
/// context patch and a 4x15x15 local patch cut from the same slice.
struct PatchPair {
    Tensor big;   // [4, 33, 33]
    Tensor small; // [4, 15, 15]
    VoxelIndex center;
    std::size_t volume = 0; // index into the sampled volume list
    std::optional<int> label;
};

/// Cuts the patch pair centered at `center`. Regions outside the volume
/// are zero-filled (the volume is conceptually zero-padded so every pixel
/// is labelable). With standardize = true each modality plane is shifted
/// and scaled to mean 0 / variance 1; constant planes become all zeros.
PatchPair extract_patch_pair(const VolumeSet& vol, const VoxelIndex& center,
                             bool standardize = true);

enum class SamplerMode { balanced, true_distribution };

struct SamplerSpec {
    SamplerMode mode = SamplerMode::balanced;
    std::size_t count = 0;
    std::uint64_t seed = 0;
};

/// Draws patch pairs from labeled volumes. Volumes are taken raw: the
/// brain mask comes from raw nonzero intensities and patches are cut from
/// per-slice-normalized copies. balanced draws equal counts per present
/// class (+-1, uniform over that class's brain voxels, with replacement);
/// true_distribution draws centers uniformly over all brain voxels so
/// class frequencies follow the data. absent_out, when given, receives
/// labels that had no eligible center (their quota is redistributed).
std::vector<PatchPair> sample_patches(const std::vector<VolumeSet>& vols,
                                      const SamplerSpec& spec,
                                      std::vector<int>* absent_out = nullptr);

} // namespace nexus
