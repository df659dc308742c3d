#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sor::nn {

/// Dense N-dimensional array of 64-bit floats, row-major.
///
/// Shapes are validated on construction; product(shape) always equals
/// data.size(). Zero-sized dimensions are permitted (they arise when pruning
/// removes every channel of a block), negative ones are not.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0);
    Tensor(std::vector<int> shape, std::vector<double> data);

    const std::vector<int>& shape() const { return shape_; }
    int dim(std::size_t axis) const { return shape_[axis]; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Rank-specific accessors, row-major.
    double& at3(int h, int w, int c) {
        return data_[(static_cast<std::size_t>(h) * shape_[1] + w) * shape_[2] + c];
    }
    double at3(int h, int w, int c) const {
        return data_[(static_cast<std::size_t>(h) * shape_[1] + w) * shape_[2] + c];
    }
    double& at2(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
    double at2(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

    void fill(double v);
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// True iff every element is finite (no NaN/Inf).
    bool all_finite() const;

    std::string shape_str() const;

    bool operator==(const Tensor& other) const = default;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::size_t shape_product(const std::vector<int>& shape);

}  // namespace sor::nn
