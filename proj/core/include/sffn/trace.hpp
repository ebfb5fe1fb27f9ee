#pragma once

#include <string>
#include <vector>

namespace sffn {

// One routing decision: which blocks a token selected at one memory layer.
// For cell-level selectors the "blocks" are individual cells (a g = 1 view).
struct RouteEvent {
  int layer = 0;
  int seq = 0;
  int pos = 0;
  int token = 0;
  std::vector<int> blocks;  // ascending
};

struct RoutingTrace {
  std::vector<RouteEvent> events;
  int num_blocks = 0;  // B in the recorded view; 0 = unknown
  int block_size = 0;  // g in the recorded view; 0 = unknown
};

// File format: optional "# geometry blocks=<B> g=<g>" comment, a
// "layer,seq,pos,token_id,blocks" header, then one row per event with the
// block ids joined by '|'. Written atomically.
void write_trace_csv(const std::string& path, const RoutingTrace& trace);

// Rejects malformed rows with the 1-based line number in the message.
RoutingTrace read_trace_csv(const std::string& path);

}  // namespace sffn
