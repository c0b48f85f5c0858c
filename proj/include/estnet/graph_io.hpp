#pragma once

#include <json.hpp>

#include <ostream>
#include <sstream>

#include "graph.hpp"

namespace estnet {

using json = nlohmann::json;

inline json to_json(const Graph& g) {
  json e = json::array();
  for (const auto& ed : g.edges()) {
    if (!g.directed() && ed.from > ed.to) continue;
    e.push_back({ed.from, ed.to});
  }
  return {{"nodes", g.nodes()}, {"edges", e}, {"directed", g.directed()}};
}

inline Graph graph_from_json(const json& j) {
  std::vector<Edge> es;
  for (const auto& e : j.at("edges")) es.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
  return Graph(j.at("nodes").get<std::vector<int>>(), es, j.value("directed", true));
}

// Weights keyed by edge "u,v" meaning v receives from u.
inline json to_json(const WeightedGraph& wg) {
  json j = to_json(wg.graph());
  json w = json::object();
  for (const auto& e : wg.graph().edges())
    w[std::to_string(e.from) + "," + std::to_string(e.to)] = wg.weight(e.to, e.from);
  j["weights"] = w;
  return j;
}

inline WeightedGraph weighted_graph_from_json(const json& j) {
  Graph g = graph_from_json(j);
  if (!j.contains("weights")) return unit_weights(g);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(g.size(), g.size());
  for (const auto& [key, val] : j.at("weights").items()) {
    auto c = key.find(',');
    if (c == std::string::npos) throw std::invalid_argument("weights: bad edge key '" + key + "'");
    int u = std::stoi(key.substr(0, c)), v = std::stoi(key.substr(c + 1));
    w(g.index(v), g.index(u)) = val.get<double>();
    if (!g.directed()) w(g.index(u), g.index(v)) = val.get<double>();
  }
  return WeightedGraph(g, w);
}

inline std::string to_dot(const Graph& g, const std::string& name = "G") {
  std::ostringstream os;
  const char* arrow = g.directed() ? " -> " : " -- ";
  os << (g.directed() ? "digraph " : "graph ") << name << " {\n";
  for (int v : g.nodes()) os << "  " << v << ";\n";
  for (const auto& e : g.edges()) {
    if (!g.directed() && e.from > e.to) continue;
    os << "  " << e.from << arrow << e.to << ";\n";
  }
  os << "}\n";
  return os.str();
}

inline std::string to_dot(const WeightedGraph& wg, const std::string& name = "G") {
  std::ostringstream os;
  const auto& g = wg.graph();
  const char* arrow = g.directed() ? " -> " : " -- ";
  os << (g.directed() ? "digraph " : "graph ") << name << " {\n";
  for (int v : g.nodes()) os << "  " << v << ";\n";
  for (const auto& e : g.edges()) {
    if (!g.directed() && e.from > e.to) continue;
    os << "  " << e.from << arrow << e.to << " [label=\"" << wg.weight(e.to, e.from) << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace estnet
