#pragma once

#include <string>

#include "sprop/graph.hpp"
#include "sprop/model.hpp"

namespace sprop {

// Node diameter in inches: max(min_size, scale * attention).
struct DotStyle {
  double min_size = 0.3;
  double scale = 3.0;
};

// Throws GraphError when the trace does not line up with the graph.
void check_trace(const TextGraph& graph, const ExplanationTrace& trace);

// One node per graph node sized by attention, one edge per unordered node
// pair labeled with its dependency category and mean |s| over both
// directions.
std::string export_dot(const TextGraph& graph, const ExplanationTrace& trace, const DotStyle& style = {});

// Versioned JSON with every value at full double precision.
std::string export_json(const TextGraph& graph, const ExplanationTrace& trace);

}  // namespace sprop
