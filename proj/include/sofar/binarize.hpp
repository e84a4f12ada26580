#pragma once

#include <memory>
#include <vector>

#include "sofar/graph.hpp"
#include "sofar/tensor.hpp"

namespace sofar {

struct BitPacked;  // bit-plane weight cache, see bitplane.hpp / bitconv.hpp

// Latent full-precision weights of a binary conv together with the derived
// per-filter scale. The scale is recomputed from the latent weights, never
// trained, and is excluded from parameter counts.
struct BinConvParams {
    Tensor latent_weights;                 // (out, in, kH, kW)
    std::vector<float> scale;              // E, one per filter (or size 1 for PerLayer)
    ScaleMode scale_mode = ScaleMode::PerFilter;
    std::shared_ptr<const BitPacked> packed;  // optional inference cache
};

namespace binarize {

// sign with sign(0) = +1. The same convention is used by the bit-packing
// path; the two must never disagree.
inline float sign_pm1(float x) { return x >= 0.0f ? 1.0f : -1.0f; }

// W_b = E * sign(W), E = mean(|W|) taken per filter (or over the layer).
// Returns the binarized weights and the scale vector.
std::pair<Tensor, std::vector<float>> binarize_weights(const Tensor& w,
                                                       ScaleMode mode = ScaleMode::PerFilter);

// Just the scale vector E of binarize_weights.
std::vector<float> weight_scales(const Tensor& w, ScaleMode mode = ScaleMode::PerFilter);

// dL/dW ~= E * dL/dW_b, broadcast per filter. No clipping.
Tensor weight_grad_ste(const Tensor& upstream, const std::vector<float>& scale,
                       ScaleMode mode = ScaleMode::PerFilter);

// A_b = sign(A), elementwise, output in {-1,+1}.
Tensor binarize_activations(const Tensor& a);

// Piecewise polynomial surrogate for d sign(A) / dA:
//   2 + 2A on (-1, 0),  2 - 2A on [0, 1),  0 otherwise.
float activation_grad_coeff(float a);

// upstream * g(A), elementwise.
Tensor activation_grad_piecewise(const Tensor& a, const Tensor& upstream);

}  // namespace binarize
}  // namespace sofar
