#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nexus/tensor.hpp"

namespace nexus {

/// Per-voxel class labels over a [D, H, W] grid, values 0..4
/// (0 healthy, 1 necrosis, 2 edema, 3 non-enhancing, 4 enhancing).
struct LabelMap {
    std::size_t depth = 0, height = 0, width = 0;
    std::vector<std::uint8_t> labels;

    LabelMap() = default;
    LabelMap(std::size_t d, std::size_t h, std::size_t w)
        : depth(d), height(h), width(w), labels(d * h * w, 0) {}

    std::size_t size() const { return labels.size(); }
    std::uint8_t& at(std::size_t s, std::size_t r, std::size_t c) {
        return labels[(s * height + r) * width + c];
    }
    std::uint8_t at(std::size_t s, std::size_t r, std::size_t c) const {
        return labels[(s * height + r) * width + c];
    }
    bool same_extents(const LabelMap& o) const {
        return depth == o.depth && height == o.height && width == o.width;
    }
    /// Count per label value 0..4.
    std::vector<std::size_t> histogram() const;
};

/// Co-registered 4-modality volume (T1, T1c, T2, T2-Flair in that order)
/// plus optional per-voxel labels. Intensities live in doubles in memory;
/// the file payload is binary32, so producers quantize through float.
struct VolumeSet {
    std::vector<Tensor> modalities; // 4 tensors [D, H, W]
    std::optional<LabelMap> labels;

    std::size_t depth() const { return modalities.empty() ? 0 : modalities[0].extent(0); }
    std::size_t height() const { return modalities.empty() ? 0 : modalities[0].extent(1); }
    std::size_t width() const { return modalities.empty() ? 0 : modalities[0].extent(2); }

    /// Throws unless all four modalities (and labels, if present) share
    /// extents and labels stay within 0..4.
    void validate() const;

    /// True where any modality is nonzero; zero intensity in all four
    /// modalities marks background/air. Meaningful on raw (pre-normalized)
    /// volumes.
    std::vector<std::uint8_t> brain_mask() const;
};

// NXV1 volume format: magic "NXV1", u32 version, u32 D, H, W,
// u8 modalityCount, u8 hasLabels, each modality as binary32 row-major
// (slice-major), then labels as u8 if present; little-endian throughout.
// A label map alone is stored with modalityCount = 0.

void write_volume(const VolumeSet& vol, const std::string& path);
VolumeSet read_volume(const std::string& path);

void write_labelmap(const LabelMap& map, const std::string& path);
LabelMap read_labelmap(const std::string& path);

} // namespace nexus
