#include "sofar/bitconv.hpp"

#include <bit>

#include "sofar/ops.hpp"

namespace sofar {

void pack_weights(BinConvParams& params) {
    const Shape ws = params.latent_weights.shape();
    auto packed = std::make_shared<BitPacked>();
    packed->in_ch = ws.c;
    packed->kernel = static_cast<int>(ws.h);
    packed->filters.reserve(static_cast<size_t>(ws.n));
    const int64_t per_filter = ws.c * ws.h * ws.w;
    for (int64_t o = 0; o < ws.n; ++o)
        packed->filters.push_back(pack_signs(
            std::span<const float>(params.latent_weights.data() + o * per_filter,
                                   static_cast<size_t>(per_filter))));
    params.scale = binarize::weight_scales(params.latent_weights, params.scale_mode);
    params.packed = std::move(packed);
}

PackedPatches pack_input_patches(const Tensor& input, int kernel, int stride, int padding) {
    const Shape is = input.shape();
    const Shape os = conv_output_shape(is, 1, kernel, stride, padding);
    PackedPatches pp;
    pp.batch = is.n;
    pp.out_h = os.h;
    pp.out_w = os.w;
    pp.patch_len = is.c * kernel * kernel;
    pp.words_per_patch = BitPlane::word_count(pp.patch_len);
    const int64_t positions = pp.positions();
    pp.patches.assign(static_cast<size_t>(positions * pp.words_per_patch), 0);
    pp.masks.assign(static_cast<size_t>(positions * pp.words_per_patch), 0);
    pp.valid_counts.assign(static_cast<size_t>(positions), 0);

    int64_t pi = 0;
    for (int64_t n = 0; n < is.n; ++n) {
        const float* img = input.data() + n * is.c * is.h * is.w;
        for (int64_t y = 0; y < os.h; ++y)
            for (int64_t x = 0; x < os.w; ++x, ++pi) {
                uint64_t* patch = pp.patches.data() + pi * pp.words_per_patch;
                uint64_t* mask = pp.masks.data() + pi * pp.words_per_patch;
                int64_t valid = 0;
                int64_t bit = 0;
                for (int64_t c = 0; c < is.c; ++c)
                    for (int ky = 0; ky < kernel; ++ky) {
                        const int64_t iy = y * stride - padding + ky;
                        if (iy < 0 || iy >= is.h) {
                            bit += kernel;
                            continue;
                        }
                        const float* row = img + (c * is.h + iy) * is.w;
                        for (int kx = 0; kx < kernel; ++kx, ++bit) {
                            const int64_t ix = x * stride - padding + kx;
                            if (ix < 0 || ix >= is.w) continue;
                            mask[bit >> 6] |= 1ull << (bit & 63);
                            ++valid;
                            if (row[ix] >= 0.0f) patch[bit >> 6] |= 1ull << (bit & 63);
                        }
                    }
                pp.valid_counts[static_cast<size_t>(pi)] = valid;
            }
    }
    return pp;
}

Tensor binary_conv2d(const PackedPatches& input, const BinConvParams& params, Shape out_shape) {
    SOFAR_CHECK(params.packed != nullptr, "binary_conv2d: weight bit-planes not packed");
    const BitPacked& packed = *params.packed;
    SOFAR_CHECK_SHAPE(input.patch_len == packed.in_ch * packed.kernel * packed.kernel,
                      "binary_conv2d: patch length does not match packed filters");
    const int64_t cout = static_cast<int64_t>(packed.filters.size());
    SOFAR_CHECK_SHAPE(out_shape.c == cout && out_shape.n == input.batch &&
                          out_shape.h == input.out_h && out_shape.w == input.out_w,
                      "binary_conv2d: unexpected output shape");
    Tensor out(out_shape);
    const int64_t plane = out_shape.h * out_shape.w;
    const int64_t nwords = input.words_per_patch;
    const bool per_layer = params.scale_mode == ScaleMode::PerLayer;

    // filters outer, positions inner: one filter's words stay hot while the
    // patch matrix streams through
    for (int64_t o = 0; o < cout; ++o) {
        const uint64_t* fw = packed.filters[static_cast<size_t>(o)].words.data();
        const float e = per_layer ? params.scale[0] : params.scale[static_cast<size_t>(o)];
        int64_t pi = 0;
        for (int64_t n = 0; n < input.batch; ++n) {
            float* dst = out.data() + (n * cout + o) * plane;
            for (int64_t pos = 0; pos < plane; ++pos, ++pi) {
                const uint64_t* pw = input.patches.data() + pi * nwords;
                const uint64_t* mw = input.masks.data() + pi * nwords;
                int64_t agree = 0;
                for (int64_t i = 0; i < nwords; ++i)
                    agree += std::popcount(~(pw[i] ^ fw[i]) & mw[i]);
                const int64_t dot = 2 * agree - input.valid_counts[static_cast<size_t>(pi)];
                dst[pos] = e * static_cast<float>(dot);
            }
        }
    }
    return out;
}

Tensor binary_conv2d(const Tensor& input_signs, const BinConvParams& params, int stride,
                     int padding) {
    SOFAR_CHECK(params.packed != nullptr, "binary_conv2d: weight bit-planes not packed");
    const Shape ws = params.latent_weights.shape();
    SOFAR_CHECK_SHAPE(input_signs.shape().c == ws.c, "binary_conv2d: channel mismatch");
    PackedPatches pp =
        pack_input_patches(input_signs, static_cast<int>(ws.h), stride, padding);
    Shape os = conv_output_shape(input_signs.shape(), static_cast<int>(ws.n),
                                 static_cast<int>(ws.h), stride, padding);
    return binary_conv2d(pp, params, os);
}

Tensor binary_conv2d_reference(const Tensor& input_signs, const Tensor& latent_weights,
                               ScaleMode mode, int stride, int padding) {
    Tensor signed_input = binarize::binarize_activations(input_signs);
    Tensor wsign = binarize::binarize_activations(latent_weights);
    Tensor out = ops::conv2d_forward(signed_input, wsign, stride, padding);
    ops::scale_channels_inplace(out, binarize::weight_scales(latent_weights, mode));
    return out;
}

}  // namespace sofar
