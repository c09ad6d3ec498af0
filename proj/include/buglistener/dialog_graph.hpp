#pragma once

#include <map>
#include <string>
#include <vector>

#include "buglistener/corpus.hpp"
#include "buglistener/tensor.hpp"

namespace bl {

// Role-pair dependency of an edge, replier -> replied.
enum class EdgeType { kR2R, kR2D, kD2R, kD2D };

const char* edge_type_name(EdgeType t);
EdgeType parse_edge_type(std::string_view s);
EdgeType assign_edge_type(Role replier, Role replied);

// Directed dialog graph. Vertices follow dialog (chronological) order; an
// edge (i, j) means utterance i replies to utterance j. Isolated vertices
// carry a self-loop so the aggregation layers stay defined on monologues.
struct DialogGraph {
  std::vector<std::string> vertex_ids;
  std::vector<Role> vertex_roles;
  nn::Mat vertex_embeddings;               // n x d, row i = u-bar_i
  std::vector<std::pair<int, int>> edges;  // (replier, replied) indices
  std::vector<EdgeType> edge_types;        // parallel to edges
  std::vector<double> weights;             // parallel to edges

  int vertex_count() const { return static_cast<int>(vertex_ids.size()); }
  // 0/1 adjacency with mask[i][j] = 1 iff edge (i, j) exists
  nn::Mat edge_mask() const;
};

// Vertices, roles, edges and types only; embeddings and weights left empty.
DialogGraph build_graph_topology(const Dialog& dialog);

DialogGraph build_graph(const Dialog& dialog,
                        const std::map<std::string, nn::Mat>& vectors,
                        const nn::Mat& edge_weight_matrix);

// Eq-style bilinear edge weights: w_ij = (u_i^T We u_j) normalized over the
// out-neighbors of i; uniform fallback when the masked row sum is <= eps.
// Writes into graph.weights.
void compute_edge_weights(DialogGraph& graph, const nn::Mat& edge_weight_matrix,
                          double fallback_eps = 1e-12);

std::string graph_to_json(const DialogGraph& graph);
DialogGraph graph_from_json(const std::string& json_text);

}  // namespace bl
