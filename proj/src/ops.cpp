#include "sofar/ops.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "sofar/error.hpp"
#include "sofar/graph.hpp"

namespace sofar::ops {

namespace {

// im2col: (Cin*k*k) x (Hout*Wout) patch matrix for one image, zero padding.
void im2col(const float* img, int64_t cin, int64_t h, int64_t w, int kernel, int stride,
            int padding, int64_t oh, int64_t ow, float* col) {
    const int64_t plane = h * w;
    int64_t row = 0;
    for (int64_t c = 0; c < cin; ++c) {
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx, ++row) {
                float* dst = col + row * oh * ow;
                for (int64_t y = 0; y < oh; ++y) {
                    int64_t iy = y * stride - padding + ky;
                    if (iy < 0 || iy >= h) {
                        std::memset(dst + y * ow, 0, sizeof(float) * static_cast<size_t>(ow));
                        continue;
                    }
                    const float* src_row = img + c * plane + iy * w;
                    int64_t x = 0;
                    for (; x < ow; ++x) {
                        int64_t ix = x * stride - padding + kx;
                        dst[y * ow + x] = (ix >= 0 && ix < w) ? src_row[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

// col2im: scatter-add transpose of im2col.
void col2im(const float* col, int64_t cin, int64_t h, int64_t w, int kernel, int stride,
            int padding, int64_t oh, int64_t ow, float* img) {
    const int64_t plane = h * w;
    int64_t row = 0;
    for (int64_t c = 0; c < cin; ++c) {
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx, ++row) {
                const float* src = col + row * oh * ow;
                for (int64_t y = 0; y < oh; ++y) {
                    int64_t iy = y * stride - padding + ky;
                    if (iy < 0 || iy >= h) continue;
                    float* dst_row = img + c * plane + iy * w;
                    for (int64_t x = 0; x < ow; ++x) {
                        int64_t ix = x * stride - padding + kx;
                        if (ix >= 0 && ix < w) dst_row[ix] += src[y * ow + x];
                    }
                }
            }
        }
    }
}

// C[m,n] += A[m,k] * B[k,n], all row-major dense. Inner loop over n
// vectorizes; accumulation order is fixed, keeping runs bit-deterministic.
void gemm_acc(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t p = 0; p < k; ++p) {
            const float av = a[i * k + p];
            if (av == 0.0f) continue;
            const float* brow = b + p * n;
            float* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] += A^T[m,k] * B[k,n] where A is stored (k,m).
void gemm_at_acc(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t p = 0; p < k; ++p) {
        const float* arow = a + p * m;
        const float* brow = b + p * n;
        for (int64_t i = 0; i < m; ++i) {
            const float av = arow[i];
            if (av == 0.0f) continue;
            float* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,k] += A[m,n] * B^T[n,k] where B is stored (k,n).
void gemm_bt_acc(const float* a, const float* b, float* c, int64_t m, int64_t n, int64_t k) {
    for (int64_t i = 0; i < m; ++i) {
        const float* arow = a + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const float* brow = b + p * n;
            double acc = 0.0;
            for (int64_t j = 0; j < n; ++j) acc += static_cast<double>(arow[j]) * brow[j];
            c[i * k + p] += static_cast<float>(acc);
        }
    }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, int stride, int padding) {
    const Shape is = input.shape();
    const Shape ws = weight.shape();
    SOFAR_CHECK_SHAPE(is.c == ws.c, "conv2d: channel mismatch");
    const int kernel = static_cast<int>(ws.h);
    const Shape os = conv_output_shape(is, static_cast<int>(ws.n), kernel, stride, padding);
    Tensor out(os);

    const int64_t patch = ws.c * kernel * kernel;
    const int64_t cols = os.h * os.w;
    std::vector<float> col(static_cast<size_t>(patch * cols));
    for (int64_t n = 0; n < is.n; ++n) {
        im2col(input.data() + n * is.c * is.h * is.w, is.c, is.h, is.w, kernel, stride, padding,
               os.h, os.w, col.data());
        gemm_acc(weight.data(), col.data(), out.data() + n * os.c * cols, os.c, patch, cols);
    }
    return out;
}

Tensor conv2d_backward_input(const Tensor& upstream, const Tensor& weight, Shape input_shape,
                             int stride, int padding) {
    const Shape us = upstream.shape();
    const Shape ws = weight.shape();
    const int kernel = static_cast<int>(ws.h);
    const int64_t patch = ws.c * kernel * kernel;
    const int64_t cols = us.h * us.w;
    Tensor din(input_shape, 0.0f);
    std::vector<float> col(static_cast<size_t>(patch * cols));
    for (int64_t n = 0; n < input_shape.n; ++n) {
        std::fill(col.begin(), col.end(), 0.0f);
        // col = W^T * upstream
        gemm_at_acc(weight.data(), upstream.data() + n * us.c * cols, col.data(), patch, us.c,
                    cols);
        col2im(col.data(), input_shape.c, input_shape.h, input_shape.w, kernel, stride, padding,
               us.h, us.w, din.data() + n * input_shape.c * input_shape.h * input_shape.w);
    }
    return din;
}

Tensor conv2d_backward_weight(const Tensor& upstream, const Tensor& input, Shape weight_shape,
                              int stride, int padding) {
    const Shape us = upstream.shape();
    const Shape is = input.shape();
    const int kernel = static_cast<int>(weight_shape.h);
    const int64_t patch = weight_shape.c * kernel * kernel;
    const int64_t cols = us.h * us.w;
    Tensor dw(weight_shape, 0.0f);
    std::vector<float> col(static_cast<size_t>(patch * cols));
    for (int64_t n = 0; n < is.n; ++n) {
        im2col(input.data() + n * is.c * is.h * is.w, is.c, is.h, is.w, kernel, stride, padding,
               us.h, us.w, col.data());
        // dW += upstream * col^T
        gemm_bt_acc(upstream.data() + n * us.c * cols, col.data(), dw.data(), us.c, cols, patch);
    }
    return dw;
}

void scale_channels_inplace(Tensor& t, const std::vector<float>& s) {
    const Shape sh = t.shape();
    const int64_t plane = sh.h * sh.w;
    const bool scalar = s.size() == 1;
    for (int64_t n = 0; n < sh.n; ++n)
        for (int64_t c = 0; c < sh.c; ++c) {
            const float e = scalar ? s[0] : s[static_cast<size_t>(c)];
            float* base = t.data() + (n * sh.c + c) * plane;
            for (int64_t i = 0; i < plane; ++i) base[i] *= e;
        }
}

Tensor maxpool_forward(const Tensor& input, int kernel, int stride, int padding,
                       std::vector<int64_t>& argmax) {
    const Shape is = input.shape();
    const int64_t oh = (is.h + 2 * padding - kernel) / stride + 1;
    const int64_t ow = (is.w + 2 * padding - kernel) / stride + 1;
    Tensor out(Shape{is.n, is.c, oh, ow});
    argmax.assign(static_cast<size_t>(out.numel()), -1);
    int64_t oi = 0;
    for (int64_t n = 0; n < is.n; ++n)
        for (int64_t c = 0; c < is.c; ++c) {
            const float* plane = input.data() + (n * is.c + c) * is.h * is.w;
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t x = 0; x < ow; ++x, ++oi) {
                    float best = -std::numeric_limits<float>::infinity();
                    int64_t best_idx = -1;
                    for (int ky = 0; ky < kernel; ++ky) {
                        int64_t iy = y * stride - padding + ky;
                        if (iy < 0 || iy >= is.h) continue;
                        for (int kx = 0; kx < kernel; ++kx) {
                            int64_t ix = x * stride - padding + kx;
                            if (ix < 0 || ix >= is.w) continue;
                            float v = plane[iy * is.w + ix];
                            if (v > best) {
                                best = v;
                                best_idx = (n * is.c + c) * is.h * is.w + iy * is.w + ix;
                            }
                        }
                    }
                    out[oi] = best;
                    argmax[static_cast<size_t>(oi)] = best_idx;
                }
        }
    return out;
}

Tensor maxpool_backward(const Tensor& upstream, Shape input_shape,
                        const std::vector<int64_t>& argmax) {
    Tensor din(input_shape, 0.0f);
    for (int64_t i = 0; i < upstream.numel(); ++i) {
        int64_t idx = argmax[static_cast<size_t>(i)];
        if (idx >= 0) din[idx] += upstream[i];
    }
    return din;
}

Tensor avgpool_forward(const Tensor& input, int kernel, int stride) {
    const Shape is = input.shape();
    const int64_t oh = (is.h - kernel) / stride + 1;
    const int64_t ow = (is.w - kernel) / stride + 1;
    Tensor out(Shape{is.n, is.c, oh, ow});
    const float inv = 1.0f / static_cast<float>(kernel * kernel);
    int64_t oi = 0;
    for (int64_t n = 0; n < is.n; ++n)
        for (int64_t c = 0; c < is.c; ++c) {
            const float* plane = input.data() + (n * is.c + c) * is.h * is.w;
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t x = 0; x < ow; ++x, ++oi) {
                    float acc = 0.0f;
                    for (int ky = 0; ky < kernel; ++ky)
                        for (int kx = 0; kx < kernel; ++kx)
                            acc += plane[(y * stride + ky) * is.w + (x * stride + kx)];
                    out[oi] = acc * inv;
                }
        }
    return out;
}

Tensor avgpool_backward(const Tensor& upstream, Shape input_shape, int kernel, int stride) {
    const Shape us = upstream.shape();
    Tensor din(input_shape, 0.0f);
    const float inv = 1.0f / static_cast<float>(kernel * kernel);
    int64_t oi = 0;
    for (int64_t n = 0; n < us.n; ++n)
        for (int64_t c = 0; c < us.c; ++c) {
            float* plane = din.data() + (n * input_shape.c + c) * input_shape.h * input_shape.w;
            for (int64_t y = 0; y < us.h; ++y)
                for (int64_t x = 0; x < us.w; ++x, ++oi) {
                    const float g = upstream[oi] * inv;
                    for (int ky = 0; ky < kernel; ++ky)
                        for (int kx = 0; kx < kernel; ++kx)
                            plane[(y * stride + ky) * input_shape.w + (x * stride + kx)] += g;
                }
        }
    return din;
}

Tensor global_avgpool_forward(const Tensor& input) {
    const Shape is = input.shape();
    Tensor out(Shape{is.n, is.c, 1, 1});
    const int64_t plane = is.h * is.w;
    for (int64_t n = 0; n < is.n; ++n)
        for (int64_t c = 0; c < is.c; ++c) {
            const float* base = input.data() + (n * is.c + c) * plane;
            double acc = 0.0;
            for (int64_t i = 0; i < plane; ++i) acc += base[i];
            out.at(n, c, 0, 0) = static_cast<float>(acc / static_cast<double>(plane));
        }
    return out;
}

Tensor global_avgpool_backward(const Tensor& upstream, Shape input_shape) {
    Tensor din(input_shape);
    const int64_t plane = input_shape.h * input_shape.w;
    const float inv = 1.0f / static_cast<float>(plane);
    for (int64_t n = 0; n < input_shape.n; ++n)
        for (int64_t c = 0; c < input_shape.c; ++c) {
            const float g = upstream.at(n, c, 0, 0) * inv;
            float* base = din.data() + (n * input_shape.c + c) * plane;
            for (int64_t i = 0; i < plane; ++i) base[i] = g;
        }
    return din;
}

Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         Tensor& running_mean, Tensor& running_var, float eps, float momentum,
                         bool train_mode, BatchNormCache& cache) {
    const Shape is = input.shape();
    const int64_t plane = is.h * is.w;
    const int64_t m = is.n * plane;  // elements per channel
    Tensor out(is);
    cache.train_mode = train_mode;
    cache.mean.assign(static_cast<size_t>(is.c), 0.0f);
    cache.inv_std.assign(static_cast<size_t>(is.c), 0.0f);
    cache.xhat = Tensor(is);

    for (int64_t c = 0; c < is.c; ++c) {
        float mu, var;
        if (train_mode) {
            double acc = 0.0;
            for (int64_t n = 0; n < is.n; ++n) {
                const float* base = input.data() + (n * is.c + c) * plane;
                for (int64_t i = 0; i < plane; ++i) acc += base[i];
            }
            mu = static_cast<float>(acc / static_cast<double>(m));
            double vacc = 0.0;
            for (int64_t n = 0; n < is.n; ++n) {
                const float* base = input.data() + (n * is.c + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    double d = base[i] - mu;
                    vacc += d * d;
                }
            }
            var = static_cast<float>(vacc / static_cast<double>(m));
            running_mean[c] = momentum * running_mean[c] + (1.0f - momentum) * mu;
            running_var[c] = momentum * running_var[c] + (1.0f - momentum) * var;
        } else {
            mu = running_mean[c];
            var = running_var[c];
        }
        const float inv_std = 1.0f / std::sqrt(var + eps);
        cache.mean[static_cast<size_t>(c)] = mu;
        cache.inv_std[static_cast<size_t>(c)] = inv_std;
        const float g = gamma[c], b = beta[c];
        for (int64_t n = 0; n < is.n; ++n) {
            const float* src = input.data() + (n * is.c + c) * plane;
            float* dst = out.data() + (n * is.c + c) * plane;
            float* xh = cache.xhat.data() + (n * is.c + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                xh[i] = (src[i] - mu) * inv_std;
                dst[i] = g * xh[i] + b;
            }
        }
    }
    return out;
}

Tensor batchnorm_backward(const Tensor& upstream, const Tensor& gamma,
                          const BatchNormCache& cache, const Tensor& running_var, float eps,
                          Tensor& dgamma, Tensor& dbeta) {
    const Shape is = upstream.shape();
    const int64_t plane = is.h * is.w;
    const int64_t m = is.n * plane;
    Tensor din(is);

    for (int64_t c = 0; c < is.c; ++c) {
        const float inv_std = cache.train_mode
                                  ? cache.inv_std[static_cast<size_t>(c)]
                                  : 1.0f / std::sqrt(running_var[c] + eps);
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        if (cache.train_mode) {
            for (int64_t n = 0; n < is.n; ++n) {
                const float* dy = upstream.data() + (n * is.c + c) * plane;
                const float* xh = cache.xhat.data() + (n * is.c + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    sum_dy += dy[i];
                    sum_dy_xhat += static_cast<double>(dy[i]) * xh[i];
                }
            }
            dgamma[c] += static_cast<float>(sum_dy_xhat);
            dbeta[c] += static_cast<float>(sum_dy);
            const float mean_dy = static_cast<float>(sum_dy / static_cast<double>(m));
            const float mean_dy_xhat = static_cast<float>(sum_dy_xhat / static_cast<double>(m));
            const float g = gamma[c];
            for (int64_t n = 0; n < is.n; ++n) {
                const float* dy = upstream.data() + (n * is.c + c) * plane;
                const float* xh = cache.xhat.data() + (n * is.c + c) * plane;
                float* dx = din.data() + (n * is.c + c) * plane;
                for (int64_t i = 0; i < plane; ++i)
                    dx[i] = g * inv_std * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
            }
        } else {
            // running statistics are constants: the map is per-channel affine
            const float g = gamma[c];
            for (int64_t n = 0; n < is.n; ++n) {
                const float* dy = upstream.data() + (n * is.c + c) * plane;
                const float* xh = cache.xhat.data() + (n * is.c + c) * plane;
                float* dx = din.data() + (n * is.c + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    dx[i] = dy[i] * g * inv_std;
                    sum_dy += dy[i];
                    sum_dy_xhat += static_cast<double>(dy[i]) * xh[i];
                }
            }
            dgamma[c] += static_cast<float>(sum_dy_xhat);
            dbeta[c] += static_cast<float>(sum_dy);
        }
    }
    return din;
}

Tensor linear_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    const Shape is = input.shape();
    const int64_t in_features = is.c * is.h * is.w;
    const int64_t out_features = weight.shape().n;
    SOFAR_CHECK_SHAPE(weight.shape().c == in_features, "linear: feature mismatch");
    Tensor out(Shape{is.n, out_features, 1, 1});
    for (int64_t n = 0; n < is.n; ++n) {
        const float* x = input.data() + n * in_features;
        for (int64_t o = 0; o < out_features; ++o) {
            const float* wrow = weight.data() + o * in_features;
            double acc = bias.empty() ? 0.0 : bias[o];
            for (int64_t i = 0; i < in_features; ++i) acc += static_cast<double>(wrow[i]) * x[i];
            out.at(n, o, 0, 0) = static_cast<float>(acc);
        }
    }
    return out;
}

Tensor linear_backward_input(const Tensor& upstream, const Tensor& weight, Shape input_shape) {
    const int64_t in_features = input_shape.c * input_shape.h * input_shape.w;
    const int64_t out_features = weight.shape().n;
    Tensor din(input_shape, 0.0f);
    for (int64_t n = 0; n < input_shape.n; ++n) {
        float* dx = din.data() + n * in_features;
        for (int64_t o = 0; o < out_features; ++o) {
            const float g = upstream.at(n, o, 0, 0);
            if (g == 0.0f) continue;
            const float* wrow = weight.data() + o * in_features;
            for (int64_t i = 0; i < in_features; ++i) dx[i] += g * wrow[i];
        }
    }
    return din;
}

void linear_backward_params(const Tensor& upstream, const Tensor& input, Tensor& dweight,
                            Tensor& dbias) {
    const Shape is = input.shape();
    const int64_t in_features = is.c * is.h * is.w;
    const int64_t out_features = dweight.shape().n;
    for (int64_t n = 0; n < is.n; ++n) {
        const float* x = input.data() + n * in_features;
        for (int64_t o = 0; o < out_features; ++o) {
            const float g = upstream.at(n, o, 0, 0);
            if (!dbias.empty()) dbias[o] += g;
            if (g == 0.0f) continue;
            float* wrow = dweight.data() + o * in_features;
            for (int64_t i = 0; i < in_features; ++i) wrow[i] += g * x[i];
        }
    }
}

Tensor softmax_cross_entropy_forward(const Tensor& logits, const Tensor& labels, Tensor& probs) {
    const Shape ls = logits.shape();
    const int64_t k = ls.c * ls.h * ls.w;
    probs = Tensor(ls);
    Tensor loss(Shape{ls.n, 1, 1, 1});
    for (int64_t n = 0; n < ls.n; ++n) {
        const float* x = logits.data() + n * k;
        float* p = probs.data() + n * k;
        float mx = x[0];
        for (int64_t i = 1; i < k; ++i) mx = std::max(mx, x[i]);
        double z = 0.0;
        for (int64_t i = 0; i < k; ++i) z += std::exp(static_cast<double>(x[i]) - mx);
        const double logz = std::log(z) + mx;
        for (int64_t i = 0; i < k; ++i)
            p[i] = static_cast<float>(std::exp(static_cast<double>(x[i]) - logz));
        const int64_t label = static_cast<int64_t>(labels[n]);
        SOFAR_CHECK(label >= 0 && label < k,
                    "label " + std::to_string(label) + " out of range [0," + std::to_string(k) +
                        ")");
        loss[n] = static_cast<float>(logz - static_cast<double>(x[label]));
    }
    return loss;
}

Tensor softmax_cross_entropy_backward(const Tensor& upstream, const Tensor& probs,
                                      const Tensor& labels) {
    const Shape ps = probs.shape();
    const int64_t k = ps.c * ps.h * ps.w;
    Tensor dlogits(ps);
    for (int64_t n = 0; n < ps.n; ++n) {
        const float g = upstream[n];
        const float* p = probs.data() + n * k;
        float* d = dlogits.data() + n * k;
        const int64_t label = static_cast<int64_t>(labels[n]);
        for (int64_t i = 0; i < k; ++i) d[i] = g * (p[i] - (i == label ? 1.0f : 0.0f));
    }
    return dlogits;
}

}  // namespace sofar::ops
