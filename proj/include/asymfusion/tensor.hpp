#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace asymfusion {

/// Batch x channel x height x width extents. All four are >= 1.
struct Shape {
    int n = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

/// Raised when operands disagree on an extent. `axis()` names the offending
/// axis ("N", "C", "H", "W", or an op-specific label such as "Cin").
class DimensionError : public std::invalid_argument {
  public:
    DimensionError(std::string axis, const std::string& what)
        : std::invalid_argument(what), axis_(std::move(axis)) {}
    const std::string& axis() const { return axis_; }

  private:
    std::string axis_;
};

/// Dense rank-4 double tensor in row-major NCHW order.
class Tensor {
  public:
    Tensor() : Tensor(Shape{}) {}
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(shape, 0.0); }
    static Tensor ones(Shape shape) { return Tensor(shape, 1.0); }
    static Tensor scalar(double v) { return Tensor(Shape{}, v); }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }
    const std::vector<double>& values() const { return data_; }

    std::size_t index(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    double& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
    double at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Scalar value of a one-element tensor.
    double item() const;

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

  private:
    Shape shape_;
    std::vector<double> data_;
};

/// Per-pixel class indices, N x H x W.
struct LabelMap {
    int n = 1;
    int h = 1;
    int w = 1;
    std::vector<int> data;

    LabelMap() = default;
    LabelMap(int n_, int h_, int w_, int fill = 0)
        : n(n_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * h_ * w_, fill) {}
    std::size_t size() const { return data.size(); }
    int& at(int i, int y, int x) { return data[(static_cast<std::size_t>(i) * h + y) * w + x]; }
    int at(int i, int y, int x) const { return data[(static_cast<std::size_t>(i) * h + y) * w + x]; }
    bool operator==(const LabelMap&) const = default;
};

/// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

/// FNV-1a over the raw bytes of the payload; used for bit-exact comparisons.
std::uint64_t checksum(const Tensor& t);

}  // namespace asymfusion
