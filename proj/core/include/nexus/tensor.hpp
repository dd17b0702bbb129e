#pragma once

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <string>
#include <vector>

#include "nexus/rng.hpp"

namespace nexus {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

/// Dense N-dimensional array of doubles in row-major order.
///
/// Invariants: every extent is >= 1 and data.size() == product(extents).
/// Values are held in 64-bit floats; all training math runs in double so
/// finite-difference gradient checks stay tight.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(std::initializer_list<std::size_t> shape, double fill = 0.0);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t dim) const { return shape_[dim]; }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    /// Row-major flat index of a coordinate tuple.
    std::size_t flat_index(const std::vector<std::size_t>& coords) const;
    /// Inverse of flat_index.
    std::vector<std::size_t> coords(std::size_t flat) const;

    /// Same data, new extents; product must match.
    Tensor reshaped(Shape shape) const;

    void fill(double value);
    void zero() { fill(0.0); }

    /// Overwrites every element with an i.i.d. N(0, std^2) draw.
    void gaussian_fill(Rng& rng, double std);

    double sum() const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

    // Serialization: magic "NXT1", u32 rank, u64 extents[rank], then
    // IEEE-754 binary64 payload in row-major order, little-endian.
    void write(std::ostream& out) const;
    static Tensor read(std::istream& in);

private:
    Shape shape_;
    std::vector<double> data_;
};

enum class ElemOp { add, sub, mul, max };

/// Pointwise combination of two equal-shaped tensors.
Tensor elementwise(const Tensor& a, const Tensor& b, ElemOp op);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b); // pointwise

} // namespace nexus
