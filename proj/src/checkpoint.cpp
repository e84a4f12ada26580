#include "sofar/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace sofar {

namespace {

void write_u32(std::ostream& out, uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                    static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    SOFAR_CHECK(in.good(), "checkpoint: truncated header");
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
           (uint32_t(b[3]) << 24);
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ostringstream header;
    header << "arch " << ckpt.arch << "\n";
    header << "phase " << ckpt.phase << "\n";
    header << "epoch " << ckpt.epoch << "\n";
    int64_t offset = 0;  // in float elements from payload start
    for (const auto& [name, t] : ckpt.tensors) {
        const Shape s = t.shape();
        header << "tensor " << name << ' ' << s.n << ' ' << s.c << ' ' << s.h << ' ' << s.w << ' '
               << offset << "\n";
        offset += t.numel();
    }
    header << "end\n";
    const std::string h = header.str();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create checkpoint '" + path + "'");
    out.write("SOFA", 4);
    write_u32(out, ckpt.version);
    write_u32(out, static_cast<uint32_t>(h.size()));
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& [name, t] : ckpt.tensors)
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(float)));
    SOFAR_CHECK(out.good(), "checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in.good() || std::memcmp(magic, "SOFA", 4) != 0)
        throw IoError("'" + path + "' is not a checkpoint (bad magic)");
    Checkpoint ckpt;
    ckpt.version = read_u32(in);
    SOFAR_CHECK(ckpt.version == 1, "unsupported checkpoint version " +
                                       std::to_string(ckpt.version));
    const uint32_t hlen = read_u32(in);
    std::string header(hlen, '\0');
    in.read(header.data(), hlen);
    SOFAR_CHECK(in.good(), "checkpoint: truncated header text");

    struct Entry {
        std::string name;
        Shape shape;
    };
    std::vector<Entry> dir;
    std::istringstream hs(header);
    std::string line;
    bool saw_end = false;
    while (std::getline(hs, line)) {
        if (line == "end") {
            saw_end = true;
            break;
        }
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "arch") {
            std::string rest;
            std::getline(ls, rest);
            ckpt.arch = rest.empty() ? "" : rest.substr(1);
        } else if (kw == "phase") {
            ls >> ckpt.phase;
        } else if (kw == "epoch") {
            ls >> ckpt.epoch;
        } else if (kw == "tensor") {
            Entry e;
            int64_t off;
            ls >> e.name >> e.shape.n >> e.shape.c >> e.shape.h >> e.shape.w >> off;
            SOFAR_CHECK(!ls.fail(), "checkpoint: malformed tensor directory line '" + line + "'");
            dir.push_back(e);
        } else if (!kw.empty()) {
            throw IoError("checkpoint: unknown header keyword '" + kw + "'");
        }
    }
    SOFAR_CHECK(saw_end, "checkpoint: header missing terminator");

    for (const auto& e : dir) {
        Tensor t(e.shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
        SOFAR_CHECK(in.gcount() == static_cast<std::streamsize>(t.numel() * sizeof(float)),
                    "checkpoint: truncated payload for tensor '" + e.name + "'");
        ckpt.tensors.emplace_back(e.name, std::move(t));
    }
    return ckpt;
}

void store_graph_state(Checkpoint& ckpt, Graph& g) {
    for (auto& [name, t] : g.named_state()) ckpt.tensors.emplace_back(name, *t);
}

void load_graph_state(const Checkpoint& ckpt, Graph& g) {
    for (auto& [name, t] : g.named_state()) {
        const Tensor* src = ckpt.find(name);
        SOFAR_CHECK(src != nullptr, "checkpoint is missing tensor '" + name + "'");
        SOFAR_CHECK_SHAPE(src->shape() == t->shape(),
                          "checkpoint tensor '" + name + "' has shape " + src->shape().str() +
                              ", graph expects " + t->shape().str());
        *t = *src;
    }
}

}  // namespace sofar
