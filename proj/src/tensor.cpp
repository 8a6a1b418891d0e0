#include "asymfusion/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace asymfusion {

std::string Shape::str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
}

namespace {

void check_extents(const Shape& s) {
    const char* names[] = {"N", "C", "H", "W"};
    const int dims[] = {s.n, s.c, s.h, s.w};
    for (int i = 0; i < 4; ++i) {
        if (dims[i] < 1) {
            throw DimensionError(names[i], std::string("tensor extent ") + names[i] +
                                               " must be >= 1, got " + std::to_string(dims[i]));
        }
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
    check_extents(shape_);
    data_.assign(shape_.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    check_extents(shape_);
    if (data_.size() != shape_.numel()) {
        throw DimensionError("data", "tensor payload has " + std::to_string(data_.size()) +
                                         " values, shape " + shape_.str() + " needs " +
                                         std::to_string(shape_.numel()));
    }
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw DimensionError("numel", "item() on tensor of shape " + shape_.str());
    }
    return data_[0];
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("shape", "max_abs_diff: " + a.shape().str() + " vs " + b.shape().str());
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

std::uint64_t checksum(const Tensor& t) {
    std::uint64_t hash = 1469598103934665603ULL;
    for (double v : t.data()) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof(double));
        for (unsigned char b : bytes) {
            hash ^= b;
            hash *= 1099511628211ULL;
        }
    }
    return hash;
}

}  // namespace asymfusion
