#include "sofar/data.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "sofar/error.hpp"

namespace sofar {

namespace {

uint32_t read_be32(std::istream& in) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    SOFAR_CHECK(in.good(), "truncated file while reading header");
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | b[3];
}

Dataset load_cifar_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset file '" + path + "'");
    Dataset ds;
    ds.channels = 3;
    ds.height = 32;
    ds.width = 32;
    const int64_t rec = 1 + ds.sample_bytes();
    std::vector<char> buf(static_cast<size_t>(rec));
    while (in.read(buf.data(), rec)) {
        ds.labels.push_back(static_cast<uint8_t>(buf[0]));
        ds.pixels.insert(ds.pixels.end(), buf.begin() + 1, buf.end());
    }
    if (in.gcount() != 0)
        throw IoError("truncated CIFAR record in '" + path + "': " + std::to_string(in.gcount()) +
                      " trailing bytes");
    if (ds.labels.empty()) throw IoError("dataset '" + path + "' contains no records");
    return ds;
}

Dataset load_idx(const std::string& path) {
    std::string images = path, labels;
    namespace fs = std::filesystem;
    if (fs::exists(path + "-images")) {
        images = path + "-images";
        labels = path + "-labels";
    } else {
        // conventional *-images-idx3-ubyte / *-labels-idx1-ubyte pairing
        std::string p = path;
        auto pos = p.find("images");
        SOFAR_CHECK(pos != std::string::npos,
                    "idx dataset '" + path + "': cannot locate the matching labels file");
        labels = p.replace(pos, 6, "labels");
        auto pos3 = labels.find("idx3");
        if (pos3 != std::string::npos) labels.replace(pos3, 4, "idx1");
    }

    std::ifstream li(labels, std::ios::binary);
    if (!li) throw IoError("cannot open idx labels file '" + labels + "'");
    SOFAR_CHECK(read_be32(li) == 0x00000801u, "bad magic in idx labels file '" + labels + "'");
    const uint32_t n_labels = read_be32(li);

    std::ifstream ii(images, std::ios::binary);
    if (!ii) throw IoError("cannot open idx images file '" + images + "'");
    const uint32_t magic = read_be32(ii);
    SOFAR_CHECK(magic == 0x00000803u, "bad magic in idx images file '" + images + "'");
    const uint32_t n = read_be32(ii);
    const uint32_t h = read_be32(ii);
    const uint32_t w = read_be32(ii);
    SOFAR_CHECK(n == n_labels, "idx image/label counts differ");

    Dataset ds;
    ds.channels = 1;
    ds.height = h;
    ds.width = w;
    ds.pixels.resize(static_cast<size_t>(n) * h * w);
    ii.read(reinterpret_cast<char*>(ds.pixels.data()), static_cast<std::streamsize>(ds.pixels.size()));
    SOFAR_CHECK(ii.gcount() == static_cast<std::streamsize>(ds.pixels.size()),
                "truncated idx images file '" + images + "'");
    ds.labels.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        char b;
        li.read(&b, 1);
        SOFAR_CHECK(li.good(), "truncated idx labels file '" + labels + "'");
        ds.labels[i] = static_cast<uint8_t>(b);
    }
    return ds;
}

}  // namespace

std::string resolve_data_path(const std::string& path) {
    namespace fs = std::filesystem;
    if (fs::exists(path)) return path;
    if (const char* root = std::getenv("SOFAR_DATA_DIR")) {
        fs::path candidate = fs::path(root) / path;
        if (fs::exists(candidate)) return candidate.string();
    }
    return path;
}

Dataset load_dataset(const std::string& path, DatasetFormat format) {
    const std::string resolved = resolve_data_path(path);
    return format == DatasetFormat::CifarBinary ? load_cifar_binary(resolved)
                                                : load_idx(resolved);
}

BatchStream::BatchStream(const Dataset& ds, BatchOptions opt, int epoch)
    : ds_(&ds), opt_(opt), rng_(opt.seed * 0x9e3779b97f4a7c15ull + 0x85ebca6bull * (epoch + 1)) {
    SOFAR_CHECK(opt.batch_size >= 1, "batch size must be >= 1");
    order_.resize(static_cast<size_t>(ds.size()));
    for (int64_t i = 0; i < ds.size(); ++i) order_[static_cast<size_t>(i)] = i;
    if (opt_.shuffle) {
        for (int64_t i = ds.size() - 1; i > 0; --i)
            std::swap(order_[static_cast<size_t>(i)],
                      order_[static_cast<size_t>(rng_.below(static_cast<uint64_t>(i + 1)))]);
    }
}

int64_t BatchStream::batches() const {
    return (ds_->size() + opt_.batch_size - 1) / opt_.batch_size;
}

bool BatchStream::next(Batch& out) {
    if (cursor_ >= ds_->size()) return false;
    const int64_t b = std::min<int64_t>(opt_.batch_size, ds_->size() - cursor_);
    const int64_t c = ds_->channels, h = ds_->height, w = ds_->width;
    out.images = Tensor(Shape{b, c, h, w});
    out.labels = Tensor(Shape{b, 1, 1, 1});
    for (int64_t i = 0; i < b; ++i) {
        const int64_t idx = order_[static_cast<size_t>(cursor_ + i)];
        const uint8_t* src = ds_->pixels.data() + idx * ds_->sample_bytes();
        out.labels[i] = static_cast<float>(ds_->labels[static_cast<size_t>(idx)]);

        int64_t dy = 0, dx = 0;
        bool flip = false;
        if (opt_.augment) {
            dy = static_cast<int64_t>(rng_.below(9)) - 4;  // 4px pad crop
            dx = static_cast<int64_t>(rng_.below(9)) - 4;
            flip = rng_.below(2) == 1;
        }
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) {
                    const int64_t sy = y + dy;
                    const int64_t sx = (flip ? w - 1 - x : x) + dx;
                    float v = 0.0f;
                    if (sy >= 0 && sy < h && sx >= 0 && sx < w)
                        v = static_cast<float>(src[(ch * h + sy) * w + sx]) / 255.0f;
                    out.images.at(i, ch, y, x) = (v - 0.5f) * 2.0f;
                }
    }
    cursor_ += b;
    return true;
}

void write_synthetic_cifar(const std::string& path, int64_t samples, uint64_t seed, int classes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create '" + path + "'");
    Rng rng(seed);
    const int h = 32, w = 32;
    for (int64_t s = 0; s < samples; ++s) {
        const int label = static_cast<int>(rng.below(static_cast<uint64_t>(classes)));
        out.put(static_cast<char>(label));
        // orientation and frequency depend on the class; phase is random
        const double angle = 3.14159265358979 * label / classes;
        const double freq = 0.25 + 0.09 * (label % 5);
        const double phase = rng.uniform(0.0, 6.28318);
        const double cx = std::cos(angle), sx = std::sin(angle);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double t = freq * (cx * x + sx * y) + phase + 1.3 * c * (label % 3);
                    double v = 0.5 + 0.4 * std::sin(t) + 0.12 * rng.normal();
                    v = std::min(1.0, std::max(0.0, v));
                    out.put(static_cast<char>(static_cast<int>(v * 255.0)));
                }
    }
}

}  // namespace sofar
