#include "sofar/tensor.hpp"

#include <cmath>

namespace sofar {

std::string Shape::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
}

size_t Tensor::check_size(Shape s) {
    SOFAR_CHECK_SHAPE(s.n >= 0 && s.c >= 0 && s.h >= 0 && s.w >= 0,
                      "tensor shape has negative extent " + s.str());
    return static_cast<size_t>(s.numel());
}

Tensor::Tensor(Shape s, std::vector<float> data) : shape_(s), data_(std::move(data)) {
    SOFAR_CHECK_SHAPE(static_cast<int64_t>(data_.size()) == s.numel(),
                      "data length " + std::to_string(data_.size()) + " does not match shape " +
                          s.str());
}

Tensor Tensor::from(Shape s, std::initializer_list<float> vals) {
    return Tensor(s, std::vector<float>(vals));
}

Tensor Tensor::randn(Shape s, Rng& rng, float stddev) {
    Tensor t(s);
    for (auto& v : t.data_) v = static_cast<float>(rng.normal(0.0, stddev));
    return t;
}

Tensor Tensor::rand_uniform(Shape s, Rng& rng, float lo, float hi) {
    Tensor t(s);
    for (auto& v : t.data_) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

bool Tensor::all_finite() const {
    for (float v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::sum() const {
    double acc = 0.0;
    for (float v : data_) acc += v;
    return acc;
}

}  // namespace sofar
