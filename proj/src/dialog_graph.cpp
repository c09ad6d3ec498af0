#include "buglistener/dialog_graph.hpp"

#include <unordered_map>

#include <json.hpp>

namespace bl {

using nlohmann::json;
using nlohmann::ordered_json;
using nn::Mat;

const char* edge_type_name(EdgeType t) {
  switch (t) {
    case EdgeType::kR2R: return "R2R";
    case EdgeType::kR2D: return "R2D";
    case EdgeType::kD2R: return "D2R";
    case EdgeType::kD2D: return "D2D";
  }
  return "";
}

EdgeType parse_edge_type(std::string_view s) {
  if (s == "R2R") return EdgeType::kR2R;
  if (s == "R2D") return EdgeType::kR2D;
  if (s == "D2R") return EdgeType::kD2R;
  if (s == "D2D") return EdgeType::kD2D;
  fail(ErrorCode::kSchema, "unknown edge type: " + std::string(s));
}

EdgeType assign_edge_type(Role replier, Role replied) {
  if (replier == Role::kReporter)
    return replied == Role::kReporter ? EdgeType::kR2R : EdgeType::kR2D;
  return replied == Role::kReporter ? EdgeType::kD2R : EdgeType::kD2D;
}

Mat DialogGraph::edge_mask() const {
  int n = vertex_count();
  Mat mask = Mat::Zero(n, n);
  for (const auto& [i, j] : edges) mask(i, j) = 1.0;
  return mask;
}

DialogGraph build_graph_topology(const Dialog& dialog) {
  DialogGraph g;
  int n = static_cast<int>(dialog.utterances.size());
  if (n == 0)
    fail(ErrorCode::kInvalidArgument, "cannot build graph for empty dialog");
  std::unordered_map<std::string, int> index;
  for (int i = 0; i < n; ++i) {
    const auto& u = dialog.utterances[static_cast<std::size_t>(i)];
    g.vertex_ids.push_back(u.id);
    g.vertex_roles.push_back(u.role);
    index[u.id] = i;
  }

  for (const auto& [replier, replied] : dialog.reply_links) {
    auto a = index.find(replier);
    auto b = index.find(replied);
    if (a == index.end() || b == index.end())
      fail(ErrorCode::kValidation,
           "reply link references utterance outside dialog " + dialog.id);
    g.edges.emplace_back(a->second, b->second);
  }

  // self-loops keep aggregation defined for vertices without any edge
  std::vector<char> touched(static_cast<std::size_t>(n), 0);
  for (const auto& [i, j] : g.edges) {
    touched[static_cast<std::size_t>(i)] = 1;
    touched[static_cast<std::size_t>(j)] = 1;
  }
  for (int i = 0; i < n; ++i)
    if (!touched[static_cast<std::size_t>(i)]) g.edges.emplace_back(i, i);

  for (const auto& [i, j] : g.edges)
    g.edge_types.push_back(
        assign_edge_type(g.vertex_roles[static_cast<std::size_t>(i)],
                         g.vertex_roles[static_cast<std::size_t>(j)]));
  return g;
}

DialogGraph build_graph(const Dialog& dialog,
                        const std::map<std::string, Mat>& vectors,
                        const Mat& edge_weight_matrix) {
  DialogGraph g = build_graph_topology(dialog);
  int n = g.vertex_count();
  long dim = -1;
  for (int i = 0; i < n; ++i) {
    const auto& id = g.vertex_ids[static_cast<std::size_t>(i)];
    auto it = vectors.find(id);
    if (it == vectors.end())
      fail(ErrorCode::kValidation,
           "no utterance vector for '" + id + "' in dialog " + dialog.id);
    if (dim < 0) {
      dim = it->second.cols();
      g.vertex_embeddings = Mat::Zero(n, dim);
    }
    if (it->second.rows() != 1 || it->second.cols() != dim)
      fail(ErrorCode::kInvalidArgument,
           "utterance vector for '" + id + "' has wrong shape");
    g.vertex_embeddings.row(i) = it->second.row(0);
  }
  compute_edge_weights(g, edge_weight_matrix);
  return g;
}

void compute_edge_weights(DialogGraph& graph, const Mat& edge_weight_matrix,
                          double fallback_eps) {
  long d = graph.vertex_embeddings.cols();
  if (edge_weight_matrix.rows() != d || edge_weight_matrix.cols() != d)
    fail(ErrorCode::kInvalidArgument,
         "edge weight matrix must be " + std::to_string(d) + "x" +
             std::to_string(d));
  const Mat& U = graph.vertex_embeddings;
  Mat scores = U * edge_weight_matrix * U.transpose();

  graph.weights.assign(graph.edges.size(), 0.0);
  int n = graph.vertex_count();
  for (int i = 0; i < n; ++i) {
    double denom = 0.0;
    std::vector<std::size_t> out;
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      if (graph.edges[e].first != i) continue;
      out.push_back(e);
      denom += scores(i, graph.edges[e].second);
    }
    if (out.empty()) continue;
    if (denom <= fallback_eps) {
      for (auto e : out) graph.weights[e] = 1.0 / static_cast<double>(out.size());
    } else {
      for (auto e : out)
        graph.weights[e] = scores(i, graph.edges[e].second) / denom;
    }
  }
}

std::string graph_to_json(const DialogGraph& graph) {
  ordered_json j;
  ordered_json vertices = ordered_json::array();
  for (int i = 0; i < graph.vertex_count(); ++i) {
    ordered_json v;
    v["id"] = graph.vertex_ids[static_cast<std::size_t>(i)];
    v["role"] = role_name(graph.vertex_roles[static_cast<std::size_t>(i)]);
    std::vector<double> emb(graph.vertex_embeddings.cols());
    for (long c = 0; c < graph.vertex_embeddings.cols(); ++c)
      emb[static_cast<std::size_t>(c)] = graph.vertex_embeddings(i, c);
    v["embedding"] = emb;
    vertices.push_back(std::move(v));
  }
  j["vertices"] = std::move(vertices);
  ordered_json edges = ordered_json::array();
  for (const auto& [a, b] : graph.edges) edges.push_back({a, b});
  j["edges"] = std::move(edges);
  ordered_json weights = ordered_json::object();
  ordered_json types = ordered_json::object();
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    std::string key = std::to_string(graph.edges[e].first) + "->" +
                      std::to_string(graph.edges[e].second);
    weights[key] = graph.weights[e];
    types[key] = edge_type_name(graph.edge_types[e]);
  }
  j["weights"] = std::move(weights);
  j["types"] = std::move(types);
  return j.dump();
}

DialogGraph graph_from_json(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::kParse, "malformed graph JSON");
  DialogGraph g;
  const auto& vertices = j.at("vertices");
  int n = static_cast<int>(vertices.size());
  long dim = n > 0 ? static_cast<long>(vertices[0].at("embedding").size()) : 0;
  g.vertex_embeddings = Mat::Zero(n, dim);
  for (int i = 0; i < n; ++i) {
    const auto& v = vertices[static_cast<std::size_t>(i)];
    g.vertex_ids.push_back(v.at("id").get<std::string>());
    g.vertex_roles.push_back(v.at("role").get<std::string>() == "REPORTER"
                                 ? Role::kReporter
                                 : Role::kDiscussant);
    const auto& emb = v.at("embedding");
    for (long c = 0; c < dim; ++c)
      g.vertex_embeddings(i, c) = emb[static_cast<std::size_t>(c)].get<double>();
  }
  for (const auto& e : j.at("edges"))
    g.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
  g.weights.resize(g.edges.size());
  g.edge_types.resize(g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    std::string key = std::to_string(g.edges[e].first) + "->" +
                      std::to_string(g.edges[e].second);
    g.weights[e] = j.at("weights").at(key).get<double>();
    g.edge_types[e] = parse_edge_type(j.at("types").at(key).get<std::string>());
  }
  return g;
}

}  // namespace bl
