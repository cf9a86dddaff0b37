// SPDX-License-Identifier: Apache-2.0
//
// Dense feature maps and 2-D scalar fields with boundary-aware stencil access.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdeblur {

#ifdef PDEBLUR_FLOAT32
using Real = float;
#else
using Real = double;
#endif

/// Thrown when a caller breaks a documented precondition (bad index, bad shape).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ShapeError : public ContractError {
public:
    using ContractError::ContractError;
};

enum class BoundaryMode { Replicate, Periodic, ZeroPad };

std::string to_string(BoundaryMode mode);
BoundaryMode boundary_from_string(const std::string& name);

/// Resolves a possibly out-of-range coordinate `i` on an axis of length `n`.
/// Returns -1 when the boundary rule yields an implicit zero (ZeroPad).
inline std::ptrdiff_t resolve_index(std::ptrdiff_t i, std::ptrdiff_t n, BoundaryMode mode) {
    if (i >= 0 && i < n) return i;
    switch (mode) {
    case BoundaryMode::Replicate:
        return i < 0 ? 0 : n - 1;
    case BoundaryMode::Periodic: {
        std::ptrdiff_t r = i % n;
        return r < 0 ? r + n : r;
    }
    case BoundaryMode::ZeroPad:
        break;
    }
    return -1;
}

struct Shape {
    std::size_t batch = 0;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t numel() const { return batch * channels * height * width; }
    std::size_t plane_size() const { return height * width; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Read-only view of one (batch, channel) plane, row-major over (height, width).
struct ConstPlane {
    std::span<const Real> data;
    std::size_t height = 0;
    std::size_t width = 0;

    Real at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
};

/// 4-D (batch, channel, height, width) row-major tensor.
class FeatureMap {
public:
    FeatureMap() = default;
    explicit FeatureMap(Shape shape, Real fill = Real(0));
    FeatureMap(Shape shape, std::vector<Real> data);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    std::span<Real> data() { return data_; }
    std::span<const Real> data() const { return data_; }
    const std::vector<Real>& values() const { return data_; }

    std::size_t offset(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
        return ((b * shape_.channels + c) * shape_.height + y) * shape_.width + x;
    }
    Real& at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) { return data_[offset(b, c, y, x)]; }
    Real at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const { return data_[offset(b, c, y, x)]; }

    std::span<Real> plane(std::size_t b, std::size_t c);
    ConstPlane plane(std::size_t b, std::size_t c) const;

    bool all_finite() const;

    friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

private:
    Shape shape_;
    std::vector<Real> data_;
};

/// A single 2-D field, e.g. one channel of a velocity component.
class ScalarField2D {
public:
    ScalarField2D() = default;
    ScalarField2D(std::size_t height, std::size_t width, Real fill = Real(0));
    ScalarField2D(std::size_t height, std::size_t width, std::vector<Real> data);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t size() const { return data_.size(); }

    Real& at(std::size_t y, std::size_t x) { return data_[y * width_ + x]; }
    Real at(std::size_t y, std::size_t x) const { return data_[y * width_ + x]; }

    std::span<Real> data() { return data_; }
    std::span<const Real> data() const { return data_; }
    ConstPlane view() const { return {data_, height_, width_}; }

    friend bool operator==(const ScalarField2D&, const ScalarField2D&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<Real> data_;
};

/// Stencil neighbour of (x, y) displaced by (dx, dy); x indexes columns, y rows.
/// Throws ContractError if the base index lies outside the field.
Real neighbor(const ConstPlane& field, std::size_t x, std::size_t y, int dx, int dy, BoundaryMode mode);
Real neighbor(const ScalarField2D& field, std::size_t x, std::size_t y, int dx, int dy, BoundaryMode mode);

enum class ElementwiseOp { Add, Sub, Mul };

FeatureMap elementwise(const FeatureMap& a, const FeatureMap& b, ElementwiseOp op);

/// Row-major sequential accumulation; bitwise reproducible for identical input.
Real reduce_sum(const FeatureMap& a);
Real reduce_max_abs(const FeatureMap& a);

void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* what);

} // namespace pdeblur
