#pragma once

#include <array>
#include <compare>
#include <string>
#include <string_view>
#include <vector>

#include "fpnas/cell.hpp"

namespace fpnas {

enum class OpKind {
  kConv1x1,
  kDepthwiseConv,
  kDownsample,  // strided depthwise k x k, stride k
  kUpsample,    // nearest neighbor
  kAdd,
  kSqueezeExcite,
  kRelu,
};

std::string_view to_string(OpKind kind);
OpKind parse_op_kind(std::string_view s);

// Shape-level identity of an operator; the latency table is keyed on it.
struct OpSignature {
  OpKind kind = OpKind::kAdd;
  int in_res = 0;
  int out_res = 0;
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 0;
  int stride = 1;

  bool operator==(const OpSignature&) const = default;
  auto operator<=>(const OpSignature&) const = default;
};

std::string to_string(const OpSignature& sig);

enum class SdoOrder { kResizeThenConv, kConvThenResize, kNoResize };

std::string_view to_string(SdoOrder order);

// Size-dependent ordering: down-sample before the 1x1 conv, up-sample after.
// Throws UnsupportedScaleError unless the ratio is a power of two.
SdoOrder resolve_sdo_order(int input_resolution, int target_resolution);

// Integer resize factor between two resolutions (>= 1).
int resize_ratio(int input_resolution, int target_resolution);

// Ops that bring one input feature to the intermediate shape (R, F).
// Without SDO the 1x1 conv always runs first. Both ops are elided when the
// input already has shape (R, F).
struct MergePath {
  SdoOrder order = SdoOrder::kNoResize;
  std::vector<OpSignature> ops;
};
MergePath merge_path_ops(const FeatureSpec& input, int target_resolution,
                         int target_channels, bool sdo_enabled);

// Ops after the merge: [SE], ReLU, depthwise k x k, ReLU, 1x1 back to C.
std::vector<OpSignature> block_body_ops(int resolution, int expansion,
                                        int channels, int kernel, MergeOp merge);

struct ValueRef {
  bool graph_input = false;
  int index = 0;  // graph input index (level - 3) or node id

  static ValueRef input(int i) { return {true, i}; }
  static ValueRef node(int id) { return {false, id}; }

  bool operator==(const ValueRef&) const = default;
};

enum class NodeRole {
  kPath,        // resize / channel matching on a merge input
  kMerge,       // merge add and optional SE
  kBody,        // ReLU and depthwise conv of a block
  kProjection,  // final 1x1 back to C
  kResidual,    // cell-wide residual
  kRecycle,     // unconsumed-feature recycling
};

std::string_view to_string(NodeRole role);
NodeRole parse_node_role(std::string_view s);

struct Node {
  int id = 0;
  OpSignature sig;
  std::vector<ValueRef> inputs;
  NodeRole role = NodeRole::kPath;
  int repeat = 0;
  std::string block;  // "b<i>" internal, "o<j>" output, "cell" for residual/recycle

  bool operator==(const Node&) const = default;
};

struct Edge {
  ValueRef from;
  int to = 0;

  bool operator==(const Edge&) const = default;
};

// Symbolic operator DAG. Nodes are stored in topological order (inputs
// always reference smaller ids).
struct ResolvedGraph {
  std::vector<FeatureSpec> inputs;  // backbone features, levels 3..6
  std::vector<Node> nodes;
  std::array<ValueRef, kNumOutputs> outputs{};  // by level 3..6
  int repeats = 1;

  FeatureSpec value_spec(const ValueRef& v) const;
  std::vector<Edge> edges() const;

  bool operator==(const ResolvedGraph&) const = default;
};

struct NetworkPlan {
  Cell cell;
  int repeats = 1;
  SpaceFlavor flavor = SpaceFlavor::kResidual;
  bool sdo_enabled = true;
};

NetworkPlan make_plan(const Genome& genome, const SearchSpaceDef& space,
                      const PlanParams& params);

// Chains `repeats` cell instances. Residual flavors prune the cell first and
// add one residual per level per instance; the recycling flavor keeps every
// block and adds unconsumed ones into the same-level output. Nodes that
// cannot reach the final outputs are dropped.
ResolvedGraph expand_network(const NetworkPlan& plan);

// decode + expand in one call.
ResolvedGraph build_graph(const Genome& genome, const SearchSpaceDef& space,
                          const PlanParams& params);

std::vector<bool> reachable_nodes(const ResolvedGraph& graph);
ResolvedGraph prune_graph(const ResolvedGraph& graph);

// Structural problems: forward/dangling edges, shape disagreement along an
// edge, unreachable nodes. Empty for graphs produced by expand_network.
std::vector<std::string> check_graph(const ResolvedGraph& graph);

// Structured text (JSON) export; parse(export(g)) == g and re-export is
// byte-identical.
std::string export_graph(const ResolvedGraph& graph);
ResolvedGraph parse_graph(std::string_view text);
std::string export_dot(const ResolvedGraph& graph);

}  // namespace fpnas
