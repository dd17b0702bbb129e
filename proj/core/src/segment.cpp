#include "nexus/segment.hpp"

#include <algorithm>

#include "nexus/error.hpp"
#include "nexus/patches.hpp"
#include "nexus/preprocess.hpp"

namespace nexus {

namespace {

constexpr std::size_t kBig = 33;
constexpr std::size_t kSmall = 15;

} // namespace

LabelMap segment_slices(NexusModel& model, const VolumeSet& vol, std::size_t slice_begin,
                        std::size_t slice_end, std::size_t batch_size) {
    vol.validate();
    if (vol.modalities.size() != 4) throw ShapeError("segment: volume must have 4 modalities");
    if (batch_size == 0) throw ParamError("segment: batch size must be positive");
    slice_end = std::min(slice_end, vol.depth());

    const auto mask = vol.brain_mask();
    const VolumeSet norm = preprocess_volume(vol);

    LabelMap out(vol.depth(), vol.height(), vol.width());
    const std::size_t H = vol.height(), W = vol.width();

    std::vector<VoxelIndex> pending;
    pending.reserve(batch_size);

    auto flush = [&]() {
        if (pending.empty()) return;
        const std::size_t B = pending.size();
        Tensor big({B, 4, kBig, kBig});
        Tensor small({B, 4, kSmall, kSmall});
        for (std::size_t i = 0; i < B; ++i) {
            PatchPair p = extract_patch_pair(norm, pending[i]);
            std::copy(p.big.data(), p.big.data() + p.big.size(),
                      big.data() + i * 4 * kBig * kBig);
            std::copy(p.small.data(), p.small.data() + p.small.size(),
                      small.data() + i * 4 * kSmall * kSmall);
        }
        const Tensor probs = model.forward_batch(big, small, Mode::infer);
        const std::size_t K = probs.extent(1);
        for (std::size_t i = 0; i < B; ++i) {
            const double* row = probs.data() + i * K;
            std::size_t best = 0;
            for (std::size_t k = 1; k < K; ++k)
                if (row[k] > row[best]) best = k; // strict: ties keep the lower label
            out.at(pending[i].slice, pending[i].row, pending[i].col) =
                static_cast<std::uint8_t>(best);
        }
        pending.clear();
    };

    for (std::size_t s = slice_begin; s < slice_end; ++s) {
        for (std::size_t r = 0; r < H; ++r) {
            for (std::size_t c = 0; c < W; ++c) {
                if (!mask[(s * H + r) * W + c]) continue;
                pending.push_back({s, r, c});
                if (pending.size() == batch_size) flush();
            }
        }
    }
    flush();
    return out;
}

LabelMap segment_volume(NexusModel& model, const VolumeSet& vol, std::size_t batch_size) {
    return segment_slices(model, vol, 0, vol.depth(), batch_size);
}

} // namespace nexus
