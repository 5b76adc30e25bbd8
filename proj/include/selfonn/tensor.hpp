#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "selfonn/errors.hpp"

namespace selfonn {

/// Dimensions of a dense tensor, outermost first. Rank is capped at 5, which
/// covers the largest shape in use: [Q, Cout, Cin, Kh, Kw].
class Shape {
public:
    static constexpr std::size_t max_rank = 5;

    Shape() = default;

    Shape(std::initializer_list<std::size_t> dims) { assign(dims.begin(), dims.end()); }

    explicit Shape(std::span<const std::size_t> dims) { assign(dims.begin(), dims.end()); }

    std::size_t rank() const noexcept { return rank_; }
    std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
    std::span<const std::size_t> dims() const noexcept { return {dims_.data(), rank_}; }

    /// Product of the dims; 0 for the default-constructed (empty) shape.
    std::size_t elements() const noexcept { return elements_; }

    std::string to_string() const {
        std::string s = "[";
        for (std::size_t i = 0; i < rank_; ++i) {
            if (i != 0) s += ",";
            s += std::to_string(dims_[i]);
        }
        return s + "]";
    }

    friend bool operator==(const Shape& a, const Shape& b) noexcept {
        return a.rank_ == b.rank_ && std::equal(a.dims_.begin(), a.dims_.begin() + a.rank_, b.dims_.begin());
    }

private:
    template <typename It>
    void assign(It first, It last) {
        const auto n = static_cast<std::size_t>(std::distance(first, last));
        if (n == 0 || n > max_rank) throw DimensionError("shape rank must be in [1, 5], got " + std::to_string(n));
        rank_ = n;
        elements_ = 1;
        std::size_t i = 0;
        for (auto it = first; it != last; ++it, ++i) {
            if (*it == 0) throw DimensionError("shape dims must be >= 1");
            if (elements_ > std::numeric_limits<std::size_t>::max() / sizeof(double) / *it)
                throw DimensionError("shape element count overflows addressable memory");
            dims_[i] = *it;
            elements_ *= *it;
        }
    }

    std::array<std::size_t, max_rank> dims_{};
    std::size_t rank_ = 0;
    std::size_t elements_ = 0;
};

/// Read-only view of tensor data: a shape plus a span over row-major values.
struct ConstTensorView {
    Shape shape;
    std::span<const double> data;

    ConstTensorView() = default;
    ConstTensorView(Shape s, std::span<const double> d) : shape(s), data(d) {
        if (d.size() != s.elements())
            throw DimensionError("view of shape " + s.to_string() + " over " + std::to_string(d.size()) + " values");
    }

    std::size_t size() const noexcept { return data.size(); }
    double operator[](std::size_t i) const { return data[i]; }
};

/// Dense, row-major, double-precision tensor with value semantics.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.elements(), fill) {}

    Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
        if (data_.size() != shape_.elements())
            throw DimensionError("tensor of shape " + shape_.to_string() + " given " + std::to_string(data_.size()) +
                                 " values");
    }

    explicit Tensor(ConstTensorView v) : shape_(v.shape), data_(v.data.begin(), v.data.end()) {}

    /// Construction from untrusted input: NaN and Inf are rejected.
    static Tensor from_external(Shape shape, std::vector<double> data) {
        for (std::size_t i = 0; i < data.size(); ++i)
            if (!std::isfinite(data[i])) throw InputError("non-finite value at flat index " + std::to_string(i));
        return Tensor(shape, std::move(data));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    template <typename... Idx>
    double& operator()(Idx... idx) {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }
    template <typename... Idx>
    double operator()(Idx... idx) const {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }

    ConstTensorView view() const { return ConstTensorView(shape_, data_); }
    operator ConstTensorView() const { return view(); }

    /// Same data, different shape with an equal element count.
    Tensor reshaped(Shape s) const& { return Tensor(s, data_); }
    Tensor reshaped(Shape s) && { return Tensor(s, std::move(data_)); }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != shape_.rank()) throw DimensionError("index rank does not match " + shape_.to_string());
        std::size_t off = 0;
        std::size_t axis = 0;
        for (std::size_t i : idx) {
            if (i >= shape_[axis]) throw DimensionError("index out of range for " + shape_.to_string());
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off;
    }

    Shape shape_;
    std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("dot of mismatched lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace selfonn
