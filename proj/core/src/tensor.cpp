#include "nexus/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include "nexus/error.hpp"

namespace nexus {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

namespace {

std::size_t checked_size(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) throw ShapeError("tensor extent must be >= 1, got shape " + shape_str(shape));
        n *= e;
    }
    return n;
}

} // namespace

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

Tensor::Tensor(std::initializer_list<std::size_t> shape, double fill)
    : Tensor(Shape(shape), fill) {}

std::size_t Tensor::flat_index(const std::vector<std::size_t>& coords) const {
    if (coords.size() != shape_.size())
        throw ShapeError("coordinate rank " + std::to_string(coords.size()) +
                         " does not match tensor rank " + std::to_string(shape_.size()));
    std::size_t flat = 0;
    for (std::size_t d = 0; d < shape_.size(); ++d) {
        if (coords[d] >= shape_[d])
            throw BoundsError("coordinate out of range in dim " + std::to_string(d));
        flat = flat * shape_[d] + coords[d];
    }
    return flat;
}

std::vector<std::size_t> Tensor::coords(std::size_t flat) const {
    std::vector<std::size_t> c(shape_.size());
    for (std::size_t d = shape_.size(); d-- > 0;) {
        c[d] = flat % shape_[d];
        flat /= shape_[d];
    }
    return c;
}

Tensor Tensor::reshaped(Shape shape) const {
    if (checked_size(shape) != data_.size())
        throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                         " changes element count");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
}

void Tensor::fill(double value) {
    std::fill(data_.begin(), data_.end(), value);
}

void Tensor::gaussian_fill(Rng& rng, double std) {
    if (!(std > 0.0)) throw ParamError("gaussian_fill: std must be positive");
    for (double& v : data_) v = rng.gaussian(std);
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

Tensor elementwise(const Tensor& a, const Tensor& b, ElemOp op) {
    if (!a.same_shape(b))
        throw ShapeError("elementwise: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const std::size_t n = a.size();
    switch (op) {
        case ElemOp::add:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
            break;
        case ElemOp::sub:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
            break;
        case ElemOp::mul:
            for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
            break;
        case ElemOp::max:
            for (std::size_t i = 0; i < n; ++i) po[i] = std::max(pa[i], pb[i]);
            break;
    }
    return out;
}

Tensor operator+(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElemOp::add); }
Tensor operator-(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElemOp::sub); }
Tensor operator*(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElemOp::mul); }

namespace {

// All integer fields little-endian. Host is assumed little-endian or
// byte-swapped here; these helpers keep the on-disk layout fixed.

template <typename T>
void write_le(std::ostream& out, T value) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
    std::reverse(buf, buf + sizeof(T));
#endif
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!in) throw IoError("tensor read: truncated stream");
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
    std::reverse(buf, buf + sizeof(T));
#endif
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

constexpr char kTensorMagic[4] = {'N', 'X', 'T', '1'};

} // namespace

void Tensor::write(std::ostream& out) const {
    out.write(kTensorMagic, 4);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape_.size()));
    for (std::size_t e : shape_) write_le<std::uint64_t>(out, e);
    for (double v : data_) write_le<double>(out, v);
    if (!out) throw IoError("tensor write failed");
}

Tensor Tensor::read(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kTensorMagic, 4) != 0)
        throw IoError("tensor read: bad magic, expected NXT1");
    const auto rank = read_le<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& e : shape) e = read_le<std::uint64_t>(in);
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = read_le<double>(in);
    return t;
}

} // namespace nexus
