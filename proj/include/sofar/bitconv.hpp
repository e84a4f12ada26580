#pragma once

#include "sofar/binarize.hpp"
#include "sofar/bitplane.hpp"

namespace sofar {

// Packed sign planes of all filters of a binary conv, one BitPlane per output
// channel, each of length Cin*kH*kW in (channel, row, col) order.
struct BitPacked {
    std::vector<BitPlane> filters;
    int64_t in_ch = 0;
    int kernel = 0;
};

// Packed im2col form of a sign input: one patch plane and one validity-mask
// plane per output position, stored as flat word arrays (words_per_patch
// words each, pad bits zero). Mask bit 0 marks a zero-padded position, which
// must contribute exactly 0 to the dot product.
struct PackedPatches {
    int64_t batch = 0, out_h = 0, out_w = 0;
    int64_t patch_len = 0;
    int64_t words_per_patch = 0;
    std::vector<uint64_t> patches;  // positions x words_per_patch
    std::vector<uint64_t> masks;
    std::vector<int64_t> valid_counts;  // popcount of each mask

    int64_t positions() const { return batch * out_h * out_w; }
};

// Populates params.packed from params.latent_weights.
void pack_weights(BinConvParams& params);

PackedPatches pack_input_patches(const Tensor& input, int kernel, int stride, int padding);

// Bit-packed realization of the BinConv2d forward:
//   out[o] = E[o] * (2*popcount(patch XNOR filter & mask) - popcount(mask)).
// Bit-exactly equal to the float path (sign -> zero-padded conv -> scale).
// Throws if params.packed is absent.
Tensor binary_conv2d(const PackedPatches& input, const BinConvParams& params, Shape out_shape);

// Convenience wrapper: packs the input, runs the packed conv.
Tensor binary_conv2d(const Tensor& input_signs, const BinConvParams& params, int stride,
                     int padding);

// Float reference path for the same operation: sign -> conv -> per-filter
// scale, with the conv accumulating the +-1 products directly.
Tensor binary_conv2d_reference(const Tensor& input_signs, const Tensor& latent_weights,
                               ScaleMode mode, int stride, int padding);

}  // namespace sofar
