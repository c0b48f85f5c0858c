#pragma once

#include "graph_io.hpp"
#include "layout.hpp"

namespace estnet {

inline json to_json(const EndLayout& L) {
  json inter = json::array();
  for (auto [p, i] : L.interference()) inter.push_back({p, i});
  json design = json::object();
  for (int p = 1; p <= L.num_components(); ++p) design[std::to_string(p)] = to_json(L.design(p));
  return {{"agents", L.num_agents()},
          {"partition", L.partition().dims},
          {"comm", to_json(L.comm())},
          {"interference", inter},
          {"design", design}};
}

inline EndLayout layout_from_json(const json& j) {
  Partition part(j.at("partition").get<std::vector<int>>());
  std::vector<ComponentAgent> inter;
  for (const auto& e : j.at("interference")) inter.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
  std::vector<WeightedGraph> design;
  for (int p = 1; p <= part.size(); ++p) {
    const auto key = std::to_string(p);
    if (!j.at("design").contains(key))
      throw std::invalid_argument("layout: missing design graph for component " + key);
    design.push_back(weighted_graph_from_json(j.at("design").at(key)));
  }
  return EndLayout(j.at("agents").get<int>(), part, graph_from_json(j.at("comm")), inter, design);
}

inline json to_json(const std::vector<Violation>& vs) {
  json a = json::array();
  for (const auto& v : vs) a.push_back({{"component", v.component}, {"violation", v.what}});
  return a;
}

}  // namespace estnet
