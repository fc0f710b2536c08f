#pragma once

#include <vector>

#include "amrlab/tensor.hpp"

namespace amr {

/// Per-element observation graph: one node per mesh element, directed edges
/// between neighbouring elements (both directions), scalar edge features and
/// a global feature row.
struct ObservationGraph {
  Tensor node_features;    // [n_nodes, node_dim]
  Tensor edge_features;    // [n_edges, edge_dim]
  Tensor global_features;  // [1, global_dim]
  std::vector<int> senders;
  std::vector<int> receivers;

  int n_nodes() const { return node_features.rows; }
  int n_edges() const { return edge_features.rows; }
};

}  // namespace amr
