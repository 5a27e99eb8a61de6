#include "fpnas/graph.hpp"

#include <algorithm>
#include <map>

#include "fpnas/errors.hpp"

namespace fpnas {

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::kConv1x1: return "conv1x1";
    case OpKind::kDepthwiseConv: return "depthwise_conv";
    case OpKind::kDownsample: return "downsample";
    case OpKind::kUpsample: return "upsample";
    case OpKind::kAdd: return "add";
    case OpKind::kSqueezeExcite: return "squeeze_excite";
    case OpKind::kRelu: return "relu";
  }
  return "?";
}

OpKind parse_op_kind(std::string_view s) {
  for (auto k : {OpKind::kConv1x1, OpKind::kDepthwiseConv, OpKind::kDownsample,
                 OpKind::kUpsample, OpKind::kAdd, OpKind::kSqueezeExcite,
                 OpKind::kRelu}) {
    if (to_string(k) == s) return k;
  }
  throw UnsupportedOpError("unknown op kind '" + std::string(s) + "'");
}

std::string to_string(const OpSignature& sig) {
  return std::string(to_string(sig.kind)) + " " + std::to_string(sig.in_res) +
         " " + std::to_string(sig.out_res) + " " + std::to_string(sig.in_ch) +
         " " + std::to_string(sig.out_ch) + " " + std::to_string(sig.kernel) +
         " " + std::to_string(sig.stride);
}

std::string_view to_string(SdoOrder order) {
  switch (order) {
    case SdoOrder::kResizeThenConv: return "resize_then_conv";
    case SdoOrder::kConvThenResize: return "conv_then_resize";
    case SdoOrder::kNoResize: return "no_resize";
  }
  return "?";
}

std::string_view to_string(NodeRole role) {
  switch (role) {
    case NodeRole::kPath: return "path";
    case NodeRole::kMerge: return "merge";
    case NodeRole::kBody: return "body";
    case NodeRole::kProjection: return "projection";
    case NodeRole::kResidual: return "residual";
    case NodeRole::kRecycle: return "recycle";
  }
  return "?";
}

NodeRole parse_node_role(std::string_view s) {
  for (auto r : {NodeRole::kPath, NodeRole::kMerge, NodeRole::kBody,
                 NodeRole::kProjection, NodeRole::kResidual, NodeRole::kRecycle}) {
    if (to_string(r) == s) return r;
  }
  throw ParseError("unknown node role '" + std::string(s) + "'");
}

int resize_ratio(int input_resolution, int target_resolution) {
  if (input_resolution <= 0 || target_resolution <= 0) {
    throw DomainError("resolutions must be positive");
  }
  const int hi = std::max(input_resolution, target_resolution);
  const int lo = std::min(input_resolution, target_resolution);
  const int ratio = hi / lo;
  if (hi % lo != 0 || (ratio & (ratio - 1)) != 0) {
    throw UnsupportedScaleError("resize " + std::to_string(input_resolution) +
                                " -> " + std::to_string(target_resolution) +
                                " is not a power-of-two scale");
  }
  return ratio;
}

SdoOrder resolve_sdo_order(int input_resolution, int target_resolution) {
  resize_ratio(input_resolution, target_resolution);
  if (input_resolution > target_resolution) return SdoOrder::kResizeThenConv;
  if (input_resolution < target_resolution) return SdoOrder::kConvThenResize;
  return SdoOrder::kNoResize;
}

MergePath merge_path_ops(const FeatureSpec& input, int target_resolution,
                         int target_channels, bool sdo_enabled) {
  const int r0 = input.resolution;
  const int r = target_resolution;
  const int c = input.channels;
  const int f = target_channels;
  const int k = resize_ratio(r0, r);

  MergePath path;
  path.order = resolve_sdo_order(r0, r);
  if (!sdo_enabled && path.order == SdoOrder::kResizeThenConv) {
    path.order = SdoOrder::kConvThenResize;
  }

  const auto conv = [](int res, int in_ch, int out_ch) {
    return OpSignature{OpKind::kConv1x1, res, res, in_ch, out_ch, 1, 1};
  };
  const auto resize = [&](int ch) {
    return r0 > r ? OpSignature{OpKind::kDownsample, r0, r, ch, ch, k, k}
                  : OpSignature{OpKind::kUpsample, r0, r, ch, ch, 0, 1};
  };

  switch (path.order) {
    case SdoOrder::kNoResize:
      if (c != f) path.ops.push_back(conv(r, c, f));
      break;
    case SdoOrder::kResizeThenConv:
      path.ops.push_back(resize(c));
      path.ops.push_back(conv(r, c, f));
      break;
    case SdoOrder::kConvThenResize:
      path.ops.push_back(conv(r0, c, f));
      path.ops.push_back(resize(f));
      break;
  }
  return path;
}

std::vector<OpSignature> block_body_ops(int resolution, int expansion,
                                        int channels, int kernel, MergeOp merge) {
  const int r = resolution;
  const int f = expansion;
  std::vector<OpSignature> ops;
  if (merge == MergeOp::kSqueezeExcite) {
    ops.push_back({OpKind::kSqueezeExcite, r, r, f, f, 0, 1});
  }
  ops.push_back({OpKind::kRelu, r, r, f, f, 0, 1});
  ops.push_back({OpKind::kDepthwiseConv, r, r, f, f, kernel, 1});
  ops.push_back({OpKind::kRelu, r, r, f, f, 0, 1});
  ops.push_back({OpKind::kConv1x1, r, r, f, channels, 1, 1});
  return ops;
}

FeatureSpec ResolvedGraph::value_spec(const ValueRef& v) const {
  if (v.graph_input) return inputs.at(v.index);
  const auto& sig = nodes.at(v.index).sig;
  FeatureSpec spec{0, sig.out_res, sig.out_ch};
  for (const auto& in : inputs) {
    if (in.resolution == sig.out_res) spec.level = in.level;
  }
  return spec;
}

std::vector<Edge> ResolvedGraph::edges() const {
  std::vector<Edge> out;
  for (const auto& n : nodes) {
    for (const auto& v : n.inputs) out.push_back({v, n.id});
  }
  return out;
}

NetworkPlan make_plan(const Genome& genome, const SearchSpaceDef& space,
                      const PlanParams& params) {
  if (params.repeats < 1) throw ConfigError("repeats must be >= 1");
  NetworkPlan plan;
  plan.cell = decode_genome(genome, space, params);
  plan.repeats = params.repeats;
  plan.flavor = space.flavor;
  plan.sdo_enabled = space.sdo_enabled;
  return plan;
}

namespace {

class GraphBuilder {
 public:
  explicit GraphBuilder(ResolvedGraph& g) : g_(g) {}

  ValueRef emit(const OpSignature& sig, std::vector<ValueRef> inputs,
                NodeRole role, int repeat, const std::string& block) {
    Node n;
    n.id = static_cast<int>(g_.nodes.size());
    n.sig = sig;
    n.inputs = std::move(inputs);
    n.role = role;
    n.repeat = repeat;
    n.block = block;
    g_.nodes.push_back(std::move(n));
    return ValueRef::node(g_.nodes.back().id);
  }

  // Runs ops as a chain starting from `from`.
  ValueRef chain(ValueRef from, const std::vector<OpSignature>& ops,
                 NodeRole role, int repeat, const std::string& block) {
    for (const auto& op : ops) from = emit(op, {from}, role, repeat, block);
    return from;
  }

 private:
  ResolvedGraph& g_;
};

}  // namespace

ResolvedGraph expand_network(const NetworkPlan& plan) {
  if (plan.repeats < 1) throw ConfigError("repeats must be >= 1");
  const bool residual = plan.flavor == SpaceFlavor::kResidual;
  const Cell cell = residual ? prune_unused_blocks(plan.cell) : plan.cell;
  const int c = cell.channels;

  ResolvedGraph g;
  g.repeats = plan.repeats;
  for (int level = kMinLevel; level <= kMaxLevel; ++level) {
    g.inputs.push_back({level, cell.resolution(level), c});
  }
  GraphBuilder builder(g);

  std::array<ValueRef, kNumLevels> current;
  for (int i = 0; i < kNumLevels; ++i) current[i] = ValueRef::input(i);

  const std::vector<int> unconsumed =
      residual ? std::vector<int>{} : unconsumed_internal_blocks(cell);

  for (int rep = 0; rep < plan.repeats; ++rep) {
    std::vector<ValueRef> internal_vals;
    std::array<ValueRef, kNumOutputs> output_vals;

    const auto lookup = [&](const NodeRef& r) -> ValueRef {
      switch (r.kind) {
        case NodeRef::Kind::kCellInput: return current.at(r.index);
        case NodeRef::Kind::kInternal: return internal_vals.at(r.index);
        case NodeRef::Kind::kOutput: return output_vals.at(r.index);
      }
      throw ConsistencyError("bad node reference");
    };

    const auto realize = [&](const Block& b, const std::string& label) {
      const int res = cell.resolution(b.level);
      std::vector<ValueRef> merged;
      for (const auto& ref : b.inputs) {
        const ValueRef v = lookup(ref);
        const MergePath path =
            merge_path_ops(g.value_spec(v), res, b.expansion, plan.sdo_enabled);
        merged.push_back(builder.chain(v, path.ops, NodeRole::kPath, rep, label));
      }
      const OpSignature add{OpKind::kAdd, res, res, b.expansion, b.expansion, 0, 1};
      ValueRef v = builder.emit(add, merged, NodeRole::kMerge, rep, label);
      for (const auto& op : block_body_ops(res, b.expansion, c, b.kernel, b.merge)) {
        NodeRole role = NodeRole::kBody;
        if (op.kind == OpKind::kSqueezeExcite) role = NodeRole::kMerge;
        if (op.kind == OpKind::kConv1x1) role = NodeRole::kProjection;
        v = builder.emit(op, {v}, role, rep, label);
      }
      return v;
    };

    for (int i = 0; i < static_cast<int>(cell.internal.size()); ++i) {
      internal_vals.push_back(realize(cell.internal[i], "b" + std::to_string(i)));
    }
    for (int j = 0; j < kNumOutputs; ++j) {
      output_vals[j] = realize(cell.outputs[j], "o" + std::to_string(j));
    }

    std::array<ValueRef, kNumLevels> next;
    for (int j = 0; j < kNumOutputs; ++j) {
      const int level = cell.outputs[j].level;
      const int res = cell.resolution(level);
      ValueRef v = output_vals[j];

      std::vector<ValueRef> recycled{v};
      for (int u : unconsumed) {
        if (cell.internal[u].level == level) recycled.push_back(internal_vals[u]);
      }
      if (recycled.size() > 1) {
        const OpSignature add{OpKind::kAdd, res, res, c, c, 0, 1};
        v = builder.emit(add, recycled, NodeRole::kRecycle, rep, "cell");
      }

      if (residual) {
        const ValueRef skip = current[level - kMinLevel];
        const FeatureSpec a = g.value_spec(skip);
        const FeatureSpec b = g.value_spec(v);
        if (a.resolution != b.resolution || a.channels != b.channels) {
          throw ConsistencyError("residual shape mismatch at level " +
                                 std::to_string(level));
        }
        const OpSignature add{OpKind::kAdd, res, res, c, c, 0, 1};
        v = builder.emit(add, {skip, v}, NodeRole::kResidual, rep, "cell");
      }
      next[level - kMinLevel] = v;
    }
    current = next;
  }

  for (int i = 0; i < kNumLevels; ++i) g.outputs[i] = current[i];
  // A cell that never reads some input level leaves the previous instance's
  // output at that level dead (recycling flavor only; residuals keep it).
  return prune_graph(g);
}

ResolvedGraph build_graph(const Genome& genome, const SearchSpaceDef& space,
                          const PlanParams& params) {
  return expand_network(make_plan(genome, space, params));
}

std::vector<bool> reachable_nodes(const ResolvedGraph& graph) {
  std::vector<bool> live(graph.nodes.size(), false);
  std::vector<int> stack;
  for (const auto& o : graph.outputs) {
    if (!o.graph_input) stack.push_back(o.index);
  }
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    if (id < 0 || id >= static_cast<int>(live.size()) || live[id]) continue;
    live[id] = true;
    for (const auto& v : graph.nodes[id].inputs) {
      if (!v.graph_input) stack.push_back(v.index);
    }
  }
  return live;
}

ResolvedGraph prune_graph(const ResolvedGraph& graph) {
  const auto live = reachable_nodes(graph);
  std::vector<int> remap(graph.nodes.size(), -1);
  ResolvedGraph out;
  out.inputs = graph.inputs;
  out.repeats = graph.repeats;
  const auto fix = [&](ValueRef v) {
    if (!v.graph_input) v.index = remap.at(v.index);
    return v;
  };
  for (const auto& n : graph.nodes) {
    if (!live[n.id]) continue;
    Node copy = n;
    copy.id = static_cast<int>(out.nodes.size());
    remap[n.id] = copy.id;
    for (auto& v : copy.inputs) v = fix(v);
    out.nodes.push_back(std::move(copy));
  }
  for (int i = 0; i < kNumOutputs; ++i) out.outputs[i] = fix(graph.outputs[i]);
  return out;
}

std::vector<std::string> check_graph(const ResolvedGraph& graph) {
  std::vector<std::string> problems;
  const int n = static_cast<int>(graph.nodes.size());
  const auto valid = [&](const ValueRef& v, int before) {
    return v.graph_input ? (v.index >= 0 && v.index < static_cast<int>(graph.inputs.size()))
                         : (v.index >= 0 && v.index < before);
  };
  for (int i = 0; i < n; ++i) {
    const Node& node = graph.nodes[i];
    const std::string name = "node " + std::to_string(i);
    if (node.id != i) problems.push_back(name + ": id mismatch");
    if (node.inputs.empty()) problems.push_back(name + ": no inputs");
    const auto& s = node.sig;
    for (const auto& v : node.inputs) {
      if (!valid(v, i)) {
        problems.push_back(name + ": input is not an earlier node or graph input");
        continue;
      }
      const FeatureSpec spec = graph.value_spec(v);
      if (spec.resolution != s.in_res || spec.channels != s.in_ch) {
        problems.push_back(name + ": shape disagrees with its input");
      }
    }
    switch (s.kind) {
      case OpKind::kDownsample:
        if (s.stride < 2 || s.out_res * s.stride != s.in_res || s.in_ch != s.out_ch) {
          problems.push_back(name + ": inconsistent downsample");
        }
        break;
      case OpKind::kUpsample:
        if (s.out_res <= s.in_res || s.in_ch != s.out_ch) {
          problems.push_back(name + ": inconsistent upsample");
        }
        break;
      case OpKind::kConv1x1:
        if (s.in_res != s.out_res) problems.push_back(name + ": 1x1 conv changes resolution");
        break;
      case OpKind::kAdd:
        if (node.inputs.size() < 2) problems.push_back(name + ": add with one input");
        [[fallthrough]];
      case OpKind::kDepthwiseConv:
      case OpKind::kSqueezeExcite:
      case OpKind::kRelu:
        if (s.in_res != s.out_res || s.in_ch != s.out_ch) {
          problems.push_back(name + ": shape-preserving op changes shape");
        }
        break;
    }
  }
  for (const auto& o : graph.outputs) {
    if (!valid(o, n)) problems.push_back("dangling graph output");
  }
  const auto live = reachable_nodes(graph);
  for (int i = 0; i < n; ++i) {
    if (!live[i]) problems.push_back("node " + std::to_string(i) + ": unreachable from outputs");
  }
  return problems;
}

}  // namespace fpnas
