#include "sofar/binarize.hpp"

#include <cmath>

namespace sofar::binarize {

std::vector<float> weight_scales(const Tensor& w, ScaleMode mode) {
    SOFAR_CHECK(!w.empty(), "binarize_weights: empty weight tensor");
    const Shape s = w.shape();
    if (mode == ScaleMode::PerLayer) {
        double acc = 0.0;
        for (int64_t i = 0; i < w.numel(); ++i) acc += std::fabs(w[i]);
        return {static_cast<float>(acc / static_cast<double>(w.numel()))};
    }
    const int64_t per_filter = s.c * s.h * s.w;
    std::vector<float> scale(static_cast<size_t>(s.n));
    for (int64_t o = 0; o < s.n; ++o) {
        double acc = 0.0;
        const float* base = w.data() + o * per_filter;
        for (int64_t i = 0; i < per_filter; ++i) acc += std::fabs(base[i]);
        scale[static_cast<size_t>(o)] = static_cast<float>(acc / static_cast<double>(per_filter));
    }
    return scale;
}

std::pair<Tensor, std::vector<float>> binarize_weights(const Tensor& w, ScaleMode mode) {
    auto scale = weight_scales(w, mode);
    Tensor wb(w.shape());
    const Shape s = w.shape();
    const int64_t per_filter = s.c * s.h * s.w;
    for (int64_t o = 0; o < s.n; ++o) {
        float e = mode == ScaleMode::PerLayer ? scale[0] : scale[static_cast<size_t>(o)];
        for (int64_t i = 0; i < per_filter; ++i) {
            int64_t idx = o * per_filter + i;
            wb[idx] = e * sign_pm1(w[idx]);
        }
    }
    return {std::move(wb), std::move(scale)};
}

Tensor weight_grad_ste(const Tensor& upstream, const std::vector<float>& scale, ScaleMode mode) {
    const Shape s = upstream.shape();
    if (mode == ScaleMode::PerFilter)
        SOFAR_CHECK_SHAPE(static_cast<int64_t>(scale.size()) == s.n,
                          "weight_grad_ste: scale count does not match filter count");
    Tensor g(s);
    const int64_t per_filter = s.c * s.h * s.w;
    for (int64_t o = 0; o < s.n; ++o) {
        float e = mode == ScaleMode::PerLayer ? scale[0] : scale[static_cast<size_t>(o)];
        for (int64_t i = 0; i < per_filter; ++i) {
            int64_t idx = o * per_filter + i;
            g[idx] = e * upstream[idx];
        }
    }
    return g;
}

Tensor binarize_activations(const Tensor& a) {
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = sign_pm1(a[i]);
    return out;
}

float activation_grad_coeff(float a) {
    if (a > -1.0f && a < 0.0f) return 2.0f + 2.0f * a;
    if (a >= 0.0f && a < 1.0f) return 2.0f - 2.0f * a;
    return 0.0f;
}

Tensor activation_grad_piecewise(const Tensor& a, const Tensor& upstream) {
    SOFAR_CHECK_SHAPE(a.same_shape(upstream),
                      "activation_grad_piecewise: shape mismatch " + a.shape().str() + " vs " +
                          upstream.shape().str());
    Tensor g(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) g[i] = upstream[i] * activation_grad_coeff(a[i]);
    return g;
}

}  // namespace sofar::binarize
