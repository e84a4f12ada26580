#pragma once

#include <string>
#include <vector>

#include "sofar/graph.hpp"

namespace sofar {

// On disk: magic "SOFA", little-endian u32 version, u32 header byte count,
// structured-text header (arch name, phase, epoch, tensor directory with
// name/shape/offset), then raw little-endian float32 payloads. Round-trips
// bit-exactly.
struct Checkpoint {
    uint32_t version = 1;
    std::string arch;
    std::string phase;
    int epoch = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies graph state (parameters + running statistics) into/out of a
// checkpoint tensor directory. Loading matches by name and ignores entries
// the graph does not have (e.g. optimizer state).
void store_graph_state(Checkpoint& ckpt, Graph& g);
void load_graph_state(const Checkpoint& ckpt, Graph& g);

}  // namespace sofar
