#pragma once

/// @file
/// Dense row-major 2-D array of doubles. Vectors are 1 x n or n x 1,
/// scalars are 1 x 1.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "compgen/error.hpp"

namespace compgen {

struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
    return "(" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + ")";
}

class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : shape_{rows, cols}, data_(rows * cols, fill) {}
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
        : shape_{rows, cols}, data_(std::move(values)) {
        require(data_.size() == shape_.size(), ErrorCode::ShapeMismatch,
                "value count " + std::to_string(data_.size()) + " does not match shape " +
                    to_string(shape_));
    }

    static Tensor scalar(double v) { return Tensor(1, 1, v); }
    static Tensor row(std::span<const double> v) {
        return Tensor(1, v.size(), std::vector<double>(v.begin(), v.end()));
    }
    static Tensor column(std::span<const double> v) {
        return Tensor(v.size(), 1, std::vector<double>(v.begin(), v.end()));
    }

    const Shape& shape() const { return shape_; }
    /// Extents as a list, outermost first.
    std::array<std::size_t, 2> extents() const { return {shape_.rows, shape_.cols}; }
    std::size_t rows() const { return shape_.rows; }
    std::size_t cols() const { return shape_.cols; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_.cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.cols + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double item() const {
        require(data_.size() == 1, ErrorCode::ShapeMismatch, "item() on non-scalar " + to_string(shape_));
        return data_[0];
    }

    std::span<double> row_span(std::size_t r) { return {data_.data() + r * shape_.cols, shape_.cols}; }
    std::span<const double> row_span(std::size_t r) const {
        return {data_.data() + r * shape_.cols, shape_.cols};
    }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
        return true;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Rows of `source` selected by `indices`, in order.
inline Tensor gather_rows(const Tensor& source, std::span<const std::size_t> indices) {
    Tensor out(indices.size(), source.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        auto src = source.row_span(indices[i]);
        std::copy(src.begin(), src.end(), out.row_span(i).begin());
    }
    return out;
}

/// Columns [begin, begin + count) of `source`.
inline Tensor slice_columns(const Tensor& source, std::size_t begin, std::size_t count) {
    require(begin + count <= source.cols(), ErrorCode::ShapeMismatch, "column slice out of range");
    Tensor out(source.rows(), count);
    for (std::size_t r = 0; r < source.rows(); ++r) {
        for (std::size_t c = 0; c < count; ++c) {
            out(r, c) = source(r, begin + c);
        }
    }
    return out;
}

} // namespace compgen
