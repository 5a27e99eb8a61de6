#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpnas/graph.hpp"

namespace fpnas {

// Multiply-accumulates of one operator:
//   conv1x1      R^2 * Cin * Cout
//   depthwise    R^2 * k^2 * C        (stride 1)
//   downsample   Rout^2 * k^2 * C     (strided depthwise)
//   squeeze_exc  R^2 * C + 2 * C * max(1, C/4)
//   upsample, add, relu: 0
std::int64_t node_madds(const OpSignature& sig);

// Weights only; batch-norm and biases are folded away.
std::int64_t node_params(const OpSignature& sig);

struct PathCost {
  std::int64_t madds = 0;
  SdoOrder order = SdoOrder::kNoResize;
};

// Cost of bringing `input` to (R, F). For a k-fold down-sample:
//   SDO on:  R*R*k*k*C + R*R*C*F
//   SDO off: kR*kR*C*F + R*R*k*k*F
PathCost merge_path_madds(const FeatureSpec& input, int target_resolution,
                          int target_channels, bool sdo_enabled);

struct CostRow {
  int node = -1;  // -1 for the constant overhead row
  std::string label;
  std::optional<OpSignature> sig;
  std::int64_t madds = 0;
  std::int64_t params = 0;
  double latency_ms = 0.0;
};

struct CostReport {
  std::int64_t madds = 0;
  std::int64_t params = 0;
  double latency_ms = 0.0;
  std::vector<CostRow> rows;
};

// MAdds and params over every node of the graph.
CostReport graph_madds(const ResolvedGraph& graph);
std::int64_t graph_params(const ResolvedGraph& graph);

class LatencyTable {
 public:
  LatencyTable() = default;
  explicit LatencyTable(double constant_overhead_ms);

  void set(const OpSignature& sig, double ms);
  // Throws LookupMissError naming the signature.
  double lookup(const OpSignature& sig) const;
  bool contains(const OpSignature& sig) const { return entries_.count(sig) != 0; }

  double overhead_ms() const { return overhead_ms_; }
  const std::map<OpSignature, double>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  bool operator==(const LatencyTable&) const = default;

 private:
  double overhead_ms_ = 0.0;
  std::map<OpSignature, double> entries_;
};

// Overhead plus the table entry of every node reachable from the graph
// outputs. Rows: one per reachable node, then the overhead row; the total is
// accumulated from the rows in that order.
CostReport estimate_latency(const ResolvedGraph& graph, const LatencyTable& lut);

// Everything at once: one row per node (latency 0 for unreachable nodes)
// plus the overhead row.
CostReport full_cost_report(const ResolvedGraph& graph, const LatencyTable& lut);

// Synthetic per-op latency: (ms_per_madd * madds + fixed_ms) scaled by
// (1 + noise * N(0,1)), clamped at zero. The noise draw for a signature
// depends only on (seed, signature).
struct LatencyModel {
  double ms_per_madd = 1e-7;
  double fixed_ms = 0.05;
  double noise = 0.0;
  std::uint64_t seed = 42;
  double overhead_ms = 100.0;
};

void check_latency_model(const LatencyModel& model);

LatencyTable synth_lut(std::span<const ResolvedGraph> graphs, const LatencyModel& model);
LatencyTable synth_lut(std::span<const OpSignature> signatures, const LatencyModel& model);

// Every signature a cell of this space can produce at the given image size,
// under both 1x1/resize orders.
std::vector<OpSignature> space_signatures(const SearchSpaceDef& space, int image_size);

// LUT file:
//   fpnas-lut 1
//   overhead_ms <ms>
//   <kind> <in_res> <out_res> <in_ch> <out_ch> <kernel> <stride> -> <ms>
// '#' starts a comment line. Values are written with round-trip precision.
std::string format_lut(const LatencyTable& lut);
LatencyTable parse_lut(std::istream& in);
LatencyTable load_lut(const std::string& path);
void save_lut(const std::string& path, const LatencyTable& lut);

// Tab-separated per-node rows plus a TOTAL row.
std::string format_cost_report(const CostReport& report);

}  // namespace fpnas
