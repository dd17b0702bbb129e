#include "nexus/patches.hpp"

#include <cmath>

#include "nexus/error.hpp"
#include "nexus/preprocess.hpp"
#include "nexus/rng.hpp"

namespace nexus {

namespace {

constexpr std::size_t kBig = 33;
constexpr std::size_t kSmall = 15;
constexpr std::size_t kClasses = 5;

void cut_plane(const Tensor& modality, std::size_t s, std::size_t r, std::size_t c,
               std::size_t extent, double* dst) {
    const std::size_t H = modality.extent(1), W = modality.extent(2);
    const long half = static_cast<long>(extent / 2);
    const double* src = modality.data() + s * H * W;
    for (std::size_t i = 0; i < extent; ++i) {
        const long ri = static_cast<long>(r) - half + static_cast<long>(i);
        for (std::size_t j = 0; j < extent; ++j) {
            const long cj = static_cast<long>(c) - half + static_cast<long>(j);
            const bool inside = ri >= 0 && ri < static_cast<long>(H) && cj >= 0 &&
                                cj < static_cast<long>(W);
            dst[i * extent + j] = inside ? src[ri * static_cast<long>(W) + cj] : 0.0;
        }
    }
}

void standardize_plane(double* p, std::size_t n) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += p[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = p[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    if (var < 1e-12) {
        for (std::size_t i = 0; i < n; ++i) p[i] = 0.0;
        return;
    }
    const double inv = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < n; ++i) p[i] = (p[i] - mean) * inv;
}

} // namespace

PatchPair extract_patch_pair(const VolumeSet& vol, const VoxelIndex& center, bool standardize) {
    vol.validate();
    if (center.slice >= vol.depth() || center.row >= vol.height() || center.col >= vol.width())
        throw BoundsError("patch center outside volume");

    PatchPair pair;
    pair.center = center;
    pair.big = Tensor({vol.modalities.size(), kBig, kBig});
    pair.small = Tensor({vol.modalities.size(), kSmall, kSmall});
    for (std::size_t m = 0; m < vol.modalities.size(); ++m) {
        cut_plane(vol.modalities[m], center.slice, center.row, center.col, kBig,
                  pair.big.data() + m * kBig * kBig);
        cut_plane(vol.modalities[m], center.slice, center.row, center.col, kSmall,
                  pair.small.data() + m * kSmall * kSmall);
        if (standardize) {
            standardize_plane(pair.big.data() + m * kBig * kBig, kBig * kBig);
            standardize_plane(pair.small.data() + m * kSmall * kSmall, kSmall * kSmall);
        }
    }
    if (vol.labels) pair.label = static_cast<int>(vol.labels->at(center.slice, center.row, center.col));
    return pair;
}

namespace {

struct Center {
    std::uint32_t vol;
    std::uint32_t slice, row, col;
};

} // namespace

std::vector<PatchPair> sample_patches(const std::vector<VolumeSet>& vols,
                                      const SamplerSpec& spec, std::vector<int>* absent_out) {
    if (vols.empty()) throw ParamError("sample_patches: no volumes");
    if (spec.count == 0) throw ParamError("sample_patches: count must be positive");
    for (const VolumeSet& v : vols) {
        v.validate();
        if (!v.labels) throw ConfigError("sample_patches: volumes must carry labels");
    }

    std::vector<VolumeSet> normalized;
    normalized.reserve(vols.size());
    for (const VolumeSet& v : vols) normalized.push_back(preprocess_volume(v));

    // Eligible centers per class, restricted to the raw brain mask.
    std::vector<std::vector<Center>> per_class(kClasses);
    for (std::size_t vi = 0; vi < vols.size(); ++vi) {
        const VolumeSet& v = vols[vi];
        const auto mask = v.brain_mask();
        const std::size_t H = v.height(), W = v.width();
        for (std::size_t s = 0; s < v.depth(); ++s)
            for (std::size_t r = 0; r < H; ++r)
                for (std::size_t c = 0; c < W; ++c) {
                    const std::size_t flat = (s * H + r) * W + c;
                    if (!mask[flat]) continue;
                    const std::uint8_t label = v.labels->labels[flat];
                    per_class[label].push_back({static_cast<std::uint32_t>(vi),
                                                static_cast<std::uint32_t>(s),
                                                static_cast<std::uint32_t>(r),
                                                static_cast<std::uint32_t>(c)});
                }
    }

    Rng root(spec.seed);
    std::vector<PatchPair> out;
    out.reserve(spec.count);

    auto emit = [&](const Center& c) {
        PatchPair p = extract_patch_pair(normalized[c.vol], {c.slice, c.row, c.col});
        p.volume = c.vol;
        // The label comes from the untouched label map; normalization does
        // not move voxels, so this equals labels[center] by construction.
        out.push_back(std::move(p));
    };

    if (spec.mode == SamplerMode::true_distribution) {
        std::vector<Center> all;
        for (auto& pc : per_class) all.insert(all.end(), pc.begin(), pc.end());
        if (all.empty()) throw ConfigError("sample_patches: volumes have empty brain masks");
        Rng rng = root.child(99);
        for (std::size_t i = 0; i < spec.count; ++i) emit(all[rng.below(all.size())]);
        return out;
    }

    std::vector<int> present;
    for (std::size_t c = 0; c < kClasses; ++c) {
        if (!per_class[c].empty())
            present.push_back(static_cast<int>(c));
        else if (absent_out)
            absent_out->push_back(static_cast<int>(c));
    }
    if (present.empty()) throw ConfigError("sample_patches: volumes have empty brain masks");

    // Equal quotas over present classes; the remainder goes to the lowest
    // labels so counts differ by at most one.
    std::vector<std::size_t> quota(present.size(), spec.count / present.size());
    for (std::size_t i = 0; i < spec.count % present.size(); ++i) ++quota[i];

    std::vector<Rng> streams;
    streams.reserve(present.size());
    for (int c : present) streams.push_back(root.child(static_cast<std::uint64_t>(c)));

    // Round-robin over classes so any prefix of the result stays balanced.
    bool progressed = true;
    while (progressed) {
        progressed = false;
        for (std::size_t i = 0; i < present.size(); ++i) {
            if (quota[i] == 0) continue;
            const auto& pool = per_class[static_cast<std::size_t>(present[i])];
            emit(pool[streams[i].below(pool.size())]);
            --quota[i];
            progressed = true;
        }
    }
    return out;
}

} // namespace nexus
