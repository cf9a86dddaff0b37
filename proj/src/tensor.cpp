// SPDX-License-Identifier: Apache-2.0

#include "pdeblur/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace pdeblur {

std::string to_string(BoundaryMode mode) {
    switch (mode) {
    case BoundaryMode::Replicate: return "replicate";
    case BoundaryMode::Periodic: return "periodic";
    case BoundaryMode::ZeroPad: return "zeropad";
    }
    return "unknown";
}

BoundaryMode boundary_from_string(const std::string& name) {
    if (name == "replicate") return BoundaryMode::Replicate;
    if (name == "periodic") return BoundaryMode::Periodic;
    if (name == "zeropad") return BoundaryMode::ZeroPad;
    throw ContractError("unknown boundary mode '" + name + "'");
}

std::string to_string(const Shape& s) {
    return "(" + std::to_string(s.batch) + "," + std::to_string(s.channels) + "," +
           std::to_string(s.height) + "," + std::to_string(s.width) + ")";
}

FeatureMap::FeatureMap(Shape shape, Real fill) : shape_(shape), data_(shape.numel(), fill) {}

FeatureMap::FeatureMap(Shape shape, std::vector<Real> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
        throw ShapeError("feature map data length " + std::to_string(data_.size()) +
                         " does not match shape " + to_string(shape_));
    }
}

std::span<Real> FeatureMap::plane(std::size_t b, std::size_t c) {
    return std::span<Real>(data_).subspan(offset(b, c, 0, 0), shape_.plane_size());
}

ConstPlane FeatureMap::plane(std::size_t b, std::size_t c) const {
    return {std::span<const Real>(data_).subspan(offset(b, c, 0, 0), shape_.plane_size()), shape_.height,
            shape_.width};
}

bool FeatureMap::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

ScalarField2D::ScalarField2D(std::size_t height, std::size_t width, Real fill)
    : height_(height), width_(width), data_(height * width, fill) {}

ScalarField2D::ScalarField2D(std::size_t height, std::size_t width, std::vector<Real> data)
    : height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != height_ * width_) {
        throw ShapeError("scalar field data length " + std::to_string(data_.size()) + " does not match " +
                         std::to_string(height_) + "x" + std::to_string(width_));
    }
}

Real neighbor(const ConstPlane& field, std::size_t x, std::size_t y, int dx, int dy, BoundaryMode mode) {
    if (x >= field.width || y >= field.height) {
        throw ContractError("neighbor: base index (" + std::to_string(x) + "," + std::to_string(y) +
                            ") outside " + std::to_string(field.width) + "x" + std::to_string(field.height) +
                            " field");
    }
    const auto w = static_cast<std::ptrdiff_t>(field.width);
    const auto h = static_cast<std::ptrdiff_t>(field.height);
    const auto nx = resolve_index(static_cast<std::ptrdiff_t>(x) + dx, w, mode);
    const auto ny = resolve_index(static_cast<std::ptrdiff_t>(y) + dy, h, mode);
    if (nx < 0 || ny < 0) return Real(0);
    return field.at(static_cast<std::size_t>(ny), static_cast<std::size_t>(nx));
}

Real neighbor(const ScalarField2D& field, std::size_t x, std::size_t y, int dx, int dy, BoundaryMode mode) {
    return neighbor(field.view(), x, y, dx, dy, mode);
}

void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

FeatureMap elementwise(const FeatureMap& a, const FeatureMap& b, ElementwiseOp op) {
    require_same_shape(a, b, "elementwise");
    FeatureMap out(a.shape());
    auto o = out.data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        switch (op) {
        case ElementwiseOp::Add: o[i] = x[i] + y[i]; break;
        case ElementwiseOp::Sub: o[i] = x[i] - y[i]; break;
        case ElementwiseOp::Mul: o[i] = x[i] * y[i]; break;
        }
    }
    return out;
}

Real reduce_sum(const FeatureMap& a) {
    Real acc = 0;
    for (Real v : a.data()) acc += v;
    return acc;
}

Real reduce_max_abs(const FeatureMap& a) {
    Real m = 0;
    for (Real v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

} // namespace pdeblur
