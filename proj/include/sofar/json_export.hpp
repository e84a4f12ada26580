#pragma once

#include <string>

#include "sofar/graph.hpp"

namespace sofar {

// Structural description only (kinds, wiring, attributes, shapes, precision);
// parameter values travel in checkpoints, not here.
std::string graph_to_json(const Graph& g);
Graph graph_from_json(const std::string& text);

}  // namespace sofar
