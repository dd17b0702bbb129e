#include "nexus/morphology.hpp"

#include <array>

namespace nexus {

namespace morph {

namespace {

/// Pads by `pad` background pixels per side.
Mask padded(const Mask& in, std::size_t h, std::size_t w, std::size_t pad) {
    Mask out((h + 2 * pad) * (w + 2 * pad), 0);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c)
            out[(r + pad) * (w + 2 * pad) + (c + pad)] = in[r * w + c];
    return out;
}

Mask cropped(const Mask& in, std::size_t h, std::size_t w, std::size_t pad) {
    Mask out(h * w, 0);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c)
            out[r * w + c] = in[(r + pad) * (w + 2 * pad) + (c + pad)];
    return out;
}

Mask erode_raw(const Mask& in, std::size_t h, std::size_t w) {
    Mask out(h * w, 0);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            if (r == 0 || c == 0 || r + 1 == h || c + 1 == w) continue; // border sees background
            bool all = true;
            for (int dr = -1; dr <= 1 && all; ++dr)
                for (int dc = -1; dc <= 1; ++dc)
                    if (!in[(r + dr) * w + (c + dc)]) {
                        all = false;
                        break;
                    }
            out[r * w + c] = all ? 1 : 0;
        }
    }
    return out;
}

Mask dilate_raw(const Mask& in, std::size_t h, std::size_t w) {
    Mask out(h * w, 0);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            bool any = false;
            for (int dr = -1; dr <= 1 && !any; ++dr) {
                const long rr = static_cast<long>(r) + dr;
                if (rr < 0 || rr >= static_cast<long>(h)) continue;
                for (int dc = -1; dc <= 1; ++dc) {
                    const long cc = static_cast<long>(c) + dc;
                    if (cc < 0 || cc >= static_cast<long>(w)) continue;
                    if (in[rr * static_cast<long>(w) + cc]) {
                        any = true;
                        break;
                    }
                }
            }
            out[r * w + c] = any ? 1 : 0;
        }
    }
    return out;
}

} // namespace

Mask erode(const Mask& in, std::size_t h, std::size_t w) { return erode_raw(in, h, w); }
Mask dilate(const Mask& in, std::size_t h, std::size_t w) { return dilate_raw(in, h, w); }

Mask open(const Mask& in, std::size_t h, std::size_t w) {
    return dilate_raw(erode_raw(in, h, w), h, w);
}

Mask close(const Mask& in, std::size_t h, std::size_t w) {
    // On a 1-pixel padded grid the dilation can extend past the image, so
    // the subsequent erosion matches the infinite-grid closing at every
    // image pixel; objects touching the border are not eaten.
    const std::size_t ph = h + 2, pw = w + 2;
    const Mask grown = dilate_raw(padded(in, h, w, 1), ph, pw);
    return cropped(erode_raw(grown, ph, pw), h, w, 1);
}

} // namespace morph

LabelMap morph_cleanup(const LabelMap& map) {
    LabelMap out(map.depth, map.height, map.width);
    const std::size_t H = map.height, W = map.width;
    morph::Mask mask(H * W);
    for (std::size_t s = 0; s < map.depth; ++s) {
        const std::uint8_t* in = map.labels.data() + s * H * W;
        std::uint8_t* dst = out.labels.data() + s * H * W;
        for (std::size_t i = 0; i < H * W; ++i) mask[i] = in[i] > 0 ? 1 : 0;
        const morph::Mask cleaned = morph::close(morph::open(mask, H, W), H, W);
        for (std::size_t r = 0; r < H; ++r) {
            for (std::size_t c = 0; c < W; ++c) {
                const std::size_t i = r * W + c;
                if (!cleaned[i]) {
                    dst[i] = 0;
                    continue;
                }
                if (in[i] > 0) {
                    dst[i] = in[i];
                    continue;
                }
                // Added by closing: majority tumor label of the original
                // 8-neighborhood, ties to the lower label.
                std::array<int, 5> votes{};
                for (int dr = -1; dr <= 1; ++dr) {
                    const long rr = static_cast<long>(r) + dr;
                    if (rr < 0 || rr >= static_cast<long>(H)) continue;
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        const long cc = static_cast<long>(c) + dc;
                        if (cc < 0 || cc >= static_cast<long>(W)) continue;
                        ++votes[in[rr * static_cast<long>(W) + cc]];
                    }
                }
                int best = 0, best_votes = 0;
                for (int lbl = 1; lbl <= 4; ++lbl)
                    if (votes[lbl] > best_votes) {
                        best = lbl;
                        best_votes = votes[lbl];
                    }
                dst[i] = static_cast<std::uint8_t>(best);
            }
        }
    }
    return out;
}

} // namespace nexus
