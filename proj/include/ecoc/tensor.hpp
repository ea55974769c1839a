#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecoc {

// Dense row-major tensor of doubles with a dynamic shape. Scalars use
// shape {1}. All compute lives on the Tape (tape.hpp); this type only
// owns storage.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> values)
        : shape_(std::move(shape)), data_(std::move(values)) {
        if (data_.size() != count(shape_)) {
            throw std::invalid_argument("Tensor: value count " + std::to_string(data_.size()) +
                                        " does not match shape product " +
                                        std::to_string(count(shape_)));
        }
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    static Tensor filled(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        return t;
    }

    std::size_t size() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Scalar extraction; throws unless size() == 1.
    double item() const {
        if (data_.size() != 1) {
            throw std::invalid_argument("Tensor::item: tensor has " +
                                        std::to_string(data_.size()) + " elements");
        }
        return data_[0];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    std::string shape_string() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        return shape.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline bool all_finite(const Tensor& t) {
    for (double v : t.values()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

inline double l2_norm_of(const Tensor& t) {
    double s = 0.0;
    for (double v : t.values()) s += v * v;
    return std::sqrt(s);
}

}  // namespace ecoc
