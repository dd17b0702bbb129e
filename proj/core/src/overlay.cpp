#include "nexus/overlay.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "nexus/error.hpp"

namespace nexus {

void write_overlays(const VolumeSet& vol, const LabelMap& labels, const std::string& dir) {
    vol.validate();
    if (labels.depth != vol.depth() || labels.height != vol.height() ||
        labels.width != vol.width())
        throw ShapeError("overlay: label extents do not match volume");

    const Tensor& base = vol.modalities[0];
    double lo = base[0], hi = base[0];
    for (std::size_t i = 0; i < base.size(); ++i) {
        lo = std::min(lo, base[i]);
        hi = std::max(hi, base[i]);
    }
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;

    // label -> RGB tint
    const unsigned char tint[5][3] = {
        {0, 0, 0}, {255, 0, 0}, {0, 255, 0}, {0, 0, 255}, {255, 255, 0}};

    const std::size_t H = vol.height(), W = vol.width();
    std::vector<unsigned char> row(W * 3);
    for (std::size_t s = 0; s < vol.depth(); ++s) {
        char name[32];
        std::snprintf(name, sizeof(name), "slice_%03zu.ppm", s);
        std::ofstream f(dir + "/" + name, std::ios::binary);
        if (!f) throw IoError("cannot write overlay image in " + dir);
        f << "P6\n" << W << " " << H << "\n255\n";
        for (std::size_t r = 0; r < H; ++r) {
            for (std::size_t c = 0; c < W; ++c) {
                const double v = base[(s * H + r) * W + c];
                const auto g = static_cast<unsigned char>((v - lo) * scale);
                const std::uint8_t lbl = labels.at(s, r, c);
                if (lbl == 0) {
                    row[c * 3] = row[c * 3 + 1] = row[c * 3 + 2] = g;
                } else {
                    // Half gray, half tint keeps anatomy visible under the label.
                    for (int ch = 0; ch < 3; ++ch)
                        row[c * 3 + ch] =
                            static_cast<unsigned char>((g + tint[lbl][ch]) / 2);
                }
            }
            f.write(reinterpret_cast<const char*>(row.data()),
                    static_cast<std::streamsize>(row.size()));
        }
        if (!f) throw IoError("overlay write failed in " + dir);
    }
}

} // namespace nexus
