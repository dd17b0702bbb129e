#include "nexus/phantom.hpp"

#include <cmath>

#include "nexus/error.hpp"
#include "nexus/rng.hpp"

namespace nexus {

namespace {

// Intensity tables in arbitrary scanner units, T1 / T1c / T2 / T2-Flair.
constexpr double kTissue[3][4] = {
    {105.0, 105.0, 45.0, 55.0}, // WM
    {80.0, 80.0, 65.0, 70.0},   // GM
    {35.0, 35.0, 110.0, 30.0},  // CSF
};
constexpr double kZone[4][4] = {
    {45.0, 40.0, 95.0, 85.0},   // 1 necrosis
    {70.0, 68.0, 100.0, 105.0}, // 2 edema
    {60.0, 60.0, 85.0, 90.0},   // 3 non-enhancing
    {70.0, 125.0, 75.0, 80.0},  // 4 enhancing (contrast uptake on T1c)
};

// Zone boundaries as fractions of the tumor radius, inside out:
// necrosis, enhancing rim, non-enhancing band, edema.
constexpr double kCore = 0.40, kRim = 0.60, kBand = 0.75;

} // namespace

VolumeSet generate_phantom(std::uint64_t seed, std::size_t depth, std::size_t height,
                           std::size_t width, const TumorSpec& spec) {
    if (depth == 0 || height == 0 || width == 0)
        throw ParamError("phantom extents must be positive");
    if (!(spec.noise_std >= 0.0)) throw ParamError("phantom noise_std must be >= 0");

    const double cz = (static_cast<double>(depth) - 1.0) / 2.0;
    const double cy = (static_cast<double>(height) - 1.0) / 2.0;
    const double cx = (static_cast<double>(width) - 1.0) / 2.0;
    const double az = 0.42 * static_cast<double>(depth);
    const double ay = 0.42 * static_cast<double>(height);
    const double ax = 0.42 * static_cast<double>(width);

    const double tz = cz + spec.center_offset[0] * az;
    const double ty = cy + spec.center_offset[1] * ay;
    const double tx = cx + spec.center_offset[2] * ax;

    VolumeSet vol;
    for (int m = 0; m < 4; ++m) vol.modalities.emplace_back(Shape{depth, height, width});
    vol.labels = LabelMap(depth, height, width);

    Rng noise = Rng(seed).child(7);

    for (std::size_t s = 0; s < depth; ++s) {
        for (std::size_t r = 0; r < height; ++r) {
            for (std::size_t c = 0; c < width; ++c) {
                const double dz = (static_cast<double>(s) - cz) / az;
                const double dy = (static_cast<double>(r) - cy) / ay;
                const double dx = (static_cast<double>(c) - cx) / ax;
                const double rhat = std::sqrt(dz * dz + dy * dy + dx * dx);
                const std::size_t flat = (s * height + r) * width + c;
                if (rhat >= 1.0) continue; // air stays exactly zero

                int tissue = 0; // WM
                if (rhat < 0.18 || rhat > 0.92)
                    tissue = 2; // CSF: ventricle core and rim
                else if (rhat >= 0.70)
                    tissue = 1; // GM shell

                int label = 0;
                if (!spec.tumor_free()) {
                    const double ds = static_cast<double>(s) - tz;
                    const double dr = static_cast<double>(r) - ty;
                    const double dc = static_cast<double>(c) - tx;
                    const double dist = std::sqrt(ds * ds + dr * dr + dc * dc) / spec.radius;
                    if (dist < kCore)
                        label = 1;
                    else if (dist < kRim)
                        label = 4;
                    else if (dist < kBand)
                        label = 3;
                    else if (dist < 1.0)
                        label = 2;
                }

                vol.labels->labels[flat] = static_cast<std::uint8_t>(label);
                for (int m = 0; m < 4; ++m) {
                    double v = label == 0 ? kTissue[tissue][m] : kZone[label - 1][m];
                    if (spec.noise_std > 0.0) v += noise.gaussian(spec.noise_std);
                    // Head voxels stay nonzero so the brain mask is exact.
                    v = std::max(v, 1.0);
                    vol.modalities[m][flat] = static_cast<double>(static_cast<float>(v));
                }
            }
        }
    }
    return vol;
}

} // namespace nexus
