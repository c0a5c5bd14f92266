#include "sprop/explain.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "json.hpp"
#include "sprop/error.hpp"

namespace sprop {
namespace {

std::string dot_string(std::string_view s) {
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + '"';
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

void check_trace(const TextGraph& graph, const ExplanationTrace& trace) {
  if (trace.attention.size() != graph.nodes.size()) {
    throw GraphError("trace has " + std::to_string(trace.attention.size()) + " attention weights for " +
                     std::to_string(graph.nodes.size()) + " nodes");
  }
  if (trace.edges.size() != graph.edges.size()) {
    throw GraphError("trace has " + std::to_string(trace.edges.size()) + " edge summaries for " +
                     std::to_string(graph.edges.size()) + " edges");
  }
}

std::string export_dot(const TextGraph& graph, const ExplanationTrace& trace, const DotStyle& style) {
  check_trace(graph, trace);
  std::ostringstream out;
  out << "graph explanation {\n";
  out << "  node [fixedsize=true, fontsize=10];\n";
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const auto& n = graph.nodes[i];
    const double size = std::max(style.min_size, style.scale * trace.attention[i]);
    const auto label = n.kind == NodeKind::Sentence ? std::string("S") : n.debug_form;
    out << "  n" << i << " [label=" << dot_string(label) << ", shape=" << (n.kind == NodeKind::Sentence ? "box" : "ellipse")
        << ", width=" << fixed(size, 4) << ", height=" << fixed(size, 4) << ", tooltip=\"attention "
        << fixed(trace.attention[i], 6) << "\"];\n";
  }

  struct Pair {
    DepCategory dep;
    double sum = 0.0;
    std::size_t count = 0;
  };
  std::map<std::pair<std::size_t, std::size_t>, Pair> pairs;
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& edge = graph.edges[e];
    const auto key = std::minmax(edge.src, edge.dst);
    auto [it, fresh] = pairs.try_emplace({key.first, key.second}, Pair{edge.dep});
    it->second.sum += trace.edges[e].mean_abs;
    ++it->second.count;
  }
  for (const auto& [key, p] : pairs) {
    const auto label = std::string(dep_category_name(p.dep)) + " " + fixed(p.sum / static_cast<double>(p.count), 2);
    out << "  n" << key.first << " -- n" << key.second << " [label=" << dot_string(label) << "];\n";
  }
  out << "}\n";
  return out.str();
}

std::string export_json(const TextGraph& graph, const ExplanationTrace& trace) {
  check_trace(graph, trace);
  using json = nlohmann::json;
  json nodes = json::array();
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const auto& n = graph.nodes[i];
    nodes.push_back({{"id", i},
                     {"form", n.kind == NodeKind::Sentence ? std::string("S") : n.debug_form},
                     {"kind", n.kind == NodeKind::Sentence ? "sentence" : "word"},
                     {"sentence", n.sentence},
                     {"position", n.position},
                     {"pos", pos_category_name(n.pos_category)},
                     {"emotion", n.emotion},
                     {"attention", trace.attention[i]}});
  }
  json edges = json::array();
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& edge = graph.edges[e];
    const auto& s = trace.edges[e];
    edges.push_back({{"src", edge.src},
                     {"dst", edge.dst},
                     {"dep", dep_category_name(edge.dep)},
                     {"mean", s.mean},
                     {"l2", s.l2},
                     {"mean_abs", s.mean_abs}});
  }
  const json out = {{"version", "1"}, {"source_id", graph.source_id}, {"nodes", nodes}, {"edges", edges}};
  return out.dump(2) + "\n";
}

}  // namespace sprop
