#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sofar/error.hpp"
#include "sofar/rng.hpp"

namespace sofar {

// Extents of a rank-4 (batch, channels, height, width) array.
struct Shape {
    int64_t n = 0, c = 0, h = 0, w = 0;

    int64_t numel() const { return n * c * h * w; }
    bool operator==(const Shape& o) const = default;
    std::string str() const;
};

// Dense float32 array in row-major (N,C,H,W) order. The single numeric
// carrier for activations, weights and gradients on the training path.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape s, float fill = 0.0f) : shape_(s), data_(check_size(s), fill) {}
    Tensor(Shape s, std::vector<float> data);

    static Tensor zeros(Shape s) { return Tensor(s, 0.0f); }
    static Tensor full(Shape s, float v) { return Tensor(s, v); }
    static Tensor from(Shape s, std::initializer_list<float> vals);
    static Tensor randn(Shape s, Rng& rng, float stddev = 1.0f);
    static Tensor rand_uniform(Shape s, Rng& rng, float lo, float hi);

    const Shape& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    float& at(int64_t n, int64_t c, int64_t h, int64_t w) {
        return data_[static_cast<size_t>(((n * shape_.c + c) * shape_.h + h) * shape_.w + w)];
    }
    float at(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return data_[static_cast<size_t>(((n * shape_.c + c) * shape_.h + h) * shape_.w + w)];
    }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }
    bool all_finite() const;
    double sum() const;  // accumulated in double

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    static size_t check_size(Shape s);

    Shape shape_{};
    std::vector<float> data_;
};

}  // namespace sofar
