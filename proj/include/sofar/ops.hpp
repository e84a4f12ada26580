#pragma once

#include "sofar/tensor.hpp"

namespace sofar::ops {

// Zero-padded 2D convolution, NCHW, square kernel. weight is (Cout,Cin,k,k).
Tensor conv2d_forward(const Tensor& input, const Tensor& weight, int stride, int padding);

// Gradient w.r.t. the input of conv2d_forward.
Tensor conv2d_backward_input(const Tensor& upstream, const Tensor& weight, Shape input_shape,
                             int stride, int padding);

// Gradient w.r.t. the weights of conv2d_forward.
Tensor conv2d_backward_weight(const Tensor& upstream, const Tensor& input, Shape weight_shape,
                              int stride, int padding);

// Scales every element of output channel o by s[o] in place.
void scale_channels_inplace(Tensor& t, const std::vector<float>& s);

Tensor maxpool_forward(const Tensor& input, int kernel, int stride, int padding,
                       std::vector<int64_t>& argmax);
Tensor maxpool_backward(const Tensor& upstream, Shape input_shape,
                        const std::vector<int64_t>& argmax);

Tensor avgpool_forward(const Tensor& input, int kernel, int stride);
Tensor avgpool_backward(const Tensor& upstream, Shape input_shape, int kernel, int stride);

Tensor global_avgpool_forward(const Tensor& input);
Tensor global_avgpool_backward(const Tensor& upstream, Shape input_shape);

struct BatchNormCache {
    Tensor xhat;
    std::vector<float> mean, inv_std;
    bool train_mode = false;
};

// Train mode normalizes with batch statistics and updates the running
// estimates (running = momentum*running + (1-momentum)*batch, biased
// variance). Eval mode uses the running estimates.
Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         Tensor& running_mean, Tensor& running_var, float eps, float momentum,
                         bool train_mode, BatchNormCache& cache);

// Returns grad w.r.t. input; accumulates dgamma/dbeta.
Tensor batchnorm_backward(const Tensor& upstream, const Tensor& gamma,
                          const BatchNormCache& cache, const Tensor& running_var, float eps,
                          Tensor& dgamma, Tensor& dbeta);

Tensor linear_forward(const Tensor& input, const Tensor& weight, const Tensor& bias);
Tensor linear_backward_input(const Tensor& upstream, const Tensor& weight, Shape input_shape);
void linear_backward_params(const Tensor& upstream, const Tensor& input, Tensor& dweight,
                            Tensor& dbias);

// Per-sample negative log softmax likelihood; labels are (N,1,1,1) holding
// class indices as floats. probs is cached for the backward pass.
Tensor softmax_cross_entropy_forward(const Tensor& logits, const Tensor& labels, Tensor& probs);
Tensor softmax_cross_entropy_backward(const Tensor& upstream, const Tensor& probs,
                                      const Tensor& labels);

}  // namespace sofar::ops
