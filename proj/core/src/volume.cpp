#include "nexus/volume.hpp"

#include <cstring>
#include <fstream>

#include "nexus/error.hpp"

namespace nexus {

std::vector<std::size_t> LabelMap::histogram() const {
    std::vector<std::size_t> h(5, 0);
    for (std::uint8_t v : labels) {
        if (v > 4) throw ShapeError("label map holds value " + std::to_string(v) + " > 4");
        ++h[v];
    }
    return h;
}

void VolumeSet::validate() const {
    if (modalities.size() != 4)
        throw ShapeError("volume must carry exactly 4 modalities, has " +
                         std::to_string(modalities.size()));
    for (const Tensor& m : modalities) {
        if (m.rank() != 3) throw ShapeError("modality tensors must be rank 3 [D,H,W]");
        if (m.shape() != modalities[0].shape())
            throw ShapeError("modalities disagree on extents");
    }
    if (labels) {
        if (labels->depth != depth() || labels->height != height() || labels->width != width())
            throw ShapeError("label extents do not match modalities");
        for (std::uint8_t v : labels->labels)
            if (v > 4) throw ShapeError("labels must lie in 0..4");
    }
}

std::vector<std::uint8_t> VolumeSet::brain_mask() const {
    const std::size_t n = depth() * height() * width();
    std::vector<std::uint8_t> mask(n, 0);
    for (const Tensor& m : modalities) {
        const double* p = m.data();
        for (std::size_t i = 0; i < n; ++i)
            if (p[i] != 0.0) mask[i] = 1;
    }
    return mask;
}

namespace {

constexpr char kVolMagic[4] = {'N', 'X', 'V', '1'};
constexpr std::uint32_t kVolVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    char buf[sizeof(T)];
    in.read(buf, sizeof(T));
    if (!in) throw IoError("volume read: truncated stream");
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

void write_header(std::ostream& out, std::uint32_t d, std::uint32_t h, std::uint32_t w,
                  std::uint8_t modality_count, std::uint8_t has_labels) {
    out.write(kVolMagic, 4);
    write_le<std::uint32_t>(out, kVolVersion);
    write_le<std::uint32_t>(out, d);
    write_le<std::uint32_t>(out, h);
    write_le<std::uint32_t>(out, w);
    write_le<std::uint8_t>(out, modality_count);
    write_le<std::uint8_t>(out, has_labels);
}

struct VolHeader {
    std::uint32_t d, h, w;
    std::uint8_t modality_count, has_labels;
};

VolHeader read_header(std::istream& in, const std::string& path) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kVolMagic, 4) != 0)
        throw IoError("not an NXV1 volume: " + path);
    const auto version = read_le<std::uint32_t>(in);
    if (version != kVolVersion)
        throw VersionError("unsupported NXV1 version " + std::to_string(version) + " in " + path);
    VolHeader hd{};
    hd.d = read_le<std::uint32_t>(in);
    hd.h = read_le<std::uint32_t>(in);
    hd.w = read_le<std::uint32_t>(in);
    hd.modality_count = read_le<std::uint8_t>(in);
    hd.has_labels = read_le<std::uint8_t>(in);
    if (hd.d == 0 || hd.h == 0 || hd.w == 0)
        throw IoError("NXV1 header has zero extent in " + path);
    return hd;
}

} // namespace

void write_volume(const VolumeSet& vol, const std::string& path) {
    vol.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open volume for writing: " + path);
    write_header(f, static_cast<std::uint32_t>(vol.depth()),
                 static_cast<std::uint32_t>(vol.height()),
                 static_cast<std::uint32_t>(vol.width()),
                 static_cast<std::uint8_t>(vol.modalities.size()),
                 vol.labels ? std::uint8_t{1} : std::uint8_t{0});
    std::vector<float> buf;
    for (const Tensor& m : vol.modalities) {
        buf.resize(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) buf[i] = static_cast<float>(m[i]);
        f.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (vol.labels)
        f.write(reinterpret_cast<const char*>(vol.labels->labels.data()),
                static_cast<std::streamsize>(vol.labels->labels.size()));
    if (!f) throw IoError("volume write failed: " + path);
}

VolumeSet read_volume(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open volume: " + path);
    const VolHeader hd = read_header(f, path);
    if (hd.modality_count != 4)
        throw IoError("expected 4 modalities in " + path + ", found " +
                      std::to_string(hd.modality_count));
    VolumeSet vol;
    const std::size_t n = static_cast<std::size_t>(hd.d) * hd.h * hd.w;
    std::vector<float> buf(n);
    for (std::size_t m = 0; m < hd.modality_count; ++m) {
        f.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(n * sizeof(float)));
        if (!f) throw IoError("volume payload truncated: " + path);
        Tensor t({hd.d, hd.h, hd.w});
        for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(buf[i]);
        vol.modalities.push_back(std::move(t));
    }
    if (hd.has_labels) {
        LabelMap lm(hd.d, hd.h, hd.w);
        f.read(reinterpret_cast<char*>(lm.labels.data()), static_cast<std::streamsize>(n));
        if (!f) throw IoError("label payload truncated: " + path);
        vol.labels = std::move(lm);
    }
    vol.validate();
    return vol;
}

void write_labelmap(const LabelMap& map, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open label map for writing: " + path);
    write_header(f, static_cast<std::uint32_t>(map.depth),
                 static_cast<std::uint32_t>(map.height),
                 static_cast<std::uint32_t>(map.width), 0, 1);
    f.write(reinterpret_cast<const char*>(map.labels.data()),
            static_cast<std::streamsize>(map.labels.size()));
    if (!f) throw IoError("label map write failed: " + path);
}

LabelMap read_labelmap(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open label map: " + path);
    const VolHeader hd = read_header(f, path);
    if (hd.modality_count != 0 || !hd.has_labels)
        throw IoError("not a labels-only NXV1 file: " + path);
    LabelMap lm(hd.d, hd.h, hd.w);
    f.read(reinterpret_cast<char*>(lm.labels.data()),
           static_cast<std::streamsize>(lm.labels.size()));
    if (!f) throw IoError("label payload truncated: " + path);
    return lm;
}

} // namespace nexus
