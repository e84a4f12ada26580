#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sofar/rng.hpp"
#include "sofar/tensor.hpp"

namespace sofar {

enum class DatasetFormat { CifarBinary, Idx };

// In-memory labeled image set. Pixels are kept as raw bytes; batches are
// normalized to [-1, 1] floats on extraction.
struct Dataset {
    int64_t channels = 0, height = 0, width = 0;
    std::vector<uint8_t> pixels;  // sample-major CHW bytes
    std::vector<int> labels;

    int64_t size() const { return static_cast<int64_t>(labels.size()); }
    int64_t sample_bytes() const { return channels * height * width; }
};

// CIFAR binary: records of 1 label byte + 3*32*32 pixel bytes.
// IDX: big-endian magic 0x00000801 (labels) / 0x00000803 (images); the image
// and label files are `path` + "-images" / "-labels" unless `path` itself is
// an images file and a sibling labels file exists.
Dataset load_dataset(const std::string& path, DatasetFormat format);

// Resolves `path` against SOFAR_DATA_DIR when the path does not exist as
// given.
std::string resolve_data_path(const std::string& path);

struct BatchOptions {
    int batch_size = 64;
    bool shuffle = false;
    bool augment = false;  // random crop with 4px zero pad + horizontal flip
    uint64_t seed = 0;
};

struct Batch {
    Tensor images;  // (B,C,H,W), normalized
    Tensor labels;  // (B,1,1,1), class index as float
};

// Deterministic batch stream: a fixed (seed, epoch) pair always yields the
// same order and the same augmentation draws.
class BatchStream {
public:
    BatchStream(const Dataset& ds, BatchOptions opt, int epoch = 0);
    bool next(Batch& out);
    int64_t batches() const;

private:
    const Dataset* ds_;
    BatchOptions opt_;
    std::vector<int64_t> order_;
    int64_t cursor_ = 0;
    Rng rng_;
};

// Writes a synthetic 10-class 32x32x3 dataset in CIFAR binary format:
// class-dependent sinusoidal gratings plus pixel noise. Gives desk-scale
// training something learnable without shipping real data.
void write_synthetic_cifar(const std::string& path, int64_t samples, uint64_t seed,
                           int classes = 10);

}  // namespace sofar
