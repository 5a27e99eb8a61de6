#include <map>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "fpnas/errors.hpp"
#include "fpnas/graph.hpp"

using namespace fpnas;

namespace {

int count_role(const ResolvedGraph& g, NodeRole role) {
  int n = 0;
  for (const auto& node : g.nodes) n += node.role == role;
  return n;
}

ResolvedGraph reference_graph(int repeats, bool sdo = true) {
  NetworkPlan plan;
  plan.cell = testing::reference_cell();
  plan.repeats = repeats;
  plan.sdo_enabled = sdo;
  return expand_network(plan);
}

}  // namespace

TEST_CASE("resolve_sdo_order") {
  CHECK(resolve_sdo_order(40, 20) == SdoOrder::kResizeThenConv);
  CHECK(resolve_sdo_order(20, 20) == SdoOrder::kNoResize);
  CHECK(resolve_sdo_order(10, 40) == SdoOrder::kConvThenResize);
  CHECK(resolve_sdo_order(40, 5) == SdoOrder::kResizeThenConv);
  CHECK_THROWS_AS(resolve_sdo_order(30, 10), UnsupportedScaleError);
  CHECK_THROWS_AS(resolve_sdo_order(20, 15), UnsupportedScaleError);
  CHECK(resize_ratio(5, 40) == 8);
}

TEST_CASE("merge path ops") {
  const FeatureSpec in{3, 40, 48};
  const auto down = merge_path_ops(in, 20, 128, true);
  REQUIRE(down.ops.size() == 2);
  CHECK(down.ops[0].kind == OpKind::kDownsample);
  CHECK(down.ops[0].kernel == 2);
  CHECK(down.ops[0].stride == 2);
  CHECK(down.ops[0].out_ch == 48);
  CHECK(down.ops[1] == OpSignature{OpKind::kConv1x1, 20, 20, 48, 128, 1, 1});

  const auto down_off = merge_path_ops(in, 20, 128, false);
  CHECK(down_off.order == SdoOrder::kConvThenResize);
  CHECK(down_off.ops[0] == OpSignature{OpKind::kConv1x1, 40, 40, 48, 128, 1, 1});
  CHECK(down_off.ops[1].kind == OpKind::kDownsample);
  CHECK(down_off.ops[1].in_ch == 128);

  const auto up = merge_path_ops({6, 5, 48}, 20, 64, true);
  CHECK(up.order == SdoOrder::kConvThenResize);
  CHECK(up.ops[0].kind == OpKind::kConv1x1);
  CHECK(up.ops[0].in_res == 5);
  CHECK(up.ops[1].kind == OpKind::kUpsample);

  CHECK(merge_path_ops({4, 20, 64}, 20, 64, true).ops.empty());
  CHECK(merge_path_ops({4, 20, 48}, 20, 64, true).ops.size() == 1);
  // Resizing keeps the 1x1 even at matching widths.
  CHECK(merge_path_ops({3, 40, 64}, 20, 64, true).ops.size() == 2);
}

TEST_CASE("block body") {
  const auto ops = block_body_ops(20, 96, 48, 3, MergeOp::kSqueezeExcite);
  REQUIRE(ops.size() == 5);
  CHECK(ops[0].kind == OpKind::kSqueezeExcite);
  CHECK(ops[1].kind == OpKind::kRelu);
  CHECK(ops[2] == OpSignature{OpKind::kDepthwiseConv, 20, 20, 96, 96, 3, 1});
  CHECK(ops[3].kind == OpKind::kRelu);
  CHECK(ops[4] == OpSignature{OpKind::kConv1x1, 20, 20, 96, 48, 1, 1});
  CHECK(block_body_ops(20, 96, 48, 3, MergeOp::kSum).size() == 4);
}

TEST_CASE("reference cell expansion") {
  const ResolvedGraph g1 = reference_graph(1);
  CHECK(count_role(g1, NodeRole::kResidual) == 4);
  CHECK(count_role(g1, NodeRole::kRecycle) == 0);
  CHECK(check_graph(g1).empty());
  // Only b0 and the four outputs survive pruning.
  std::set<std::string> blocks;
  for (const auto& n : g1.nodes) blocks.insert(n.block);
  CHECK(blocks == std::set<std::string>{"b0", "o0", "o1", "o2", "o3", "cell"});

  const ResolvedGraph g2 = reference_graph(2);
  CHECK(g2.nodes.size() == 2 * g1.nodes.size());
  CHECK(count_role(g2, NodeRole::kResidual) == 8);
  CHECK(check_graph(g2).empty());

  // The second instance repeats the first instance's signatures.
  for (std::size_t i = 0; i < g1.nodes.size(); ++i) {
    CHECK(g2.nodes[i + g1.nodes.size()].sig == g1.nodes[i].sig);
    CHECK(g2.nodes[i + g1.nodes.size()].repeat == 1);
  }
}

TEST_CASE("output channels and resolutions") {
  const ResolvedGraph g = reference_graph(3);
  for (int i = 0; i < kNumOutputs; ++i) {
    const FeatureSpec spec = g.value_spec(g.outputs[i]);
    CHECK(spec.resolution == g.inputs[i].resolution);
    CHECK(spec.channels == 48);
  }
}

TEST_CASE("recycling versus residual flavors") {
  NetworkPlan plan;
  plan.cell = testing::recycling_cell(64);
  plan.flavor = SpaceFlavor::kRecycling;
  plan.sdo_enabled = false;
  const ResolvedGraph rec = expand_network(plan);
  CHECK(check_graph(rec).empty());
  REQUIRE(count_role(rec, NodeRole::kRecycle) == 1);
  CHECK(count_role(rec, NodeRole::kResidual) == 0);
  for (const auto& n : rec.nodes) {
    if (n.role != NodeRole::kRecycle) continue;
    CHECK(n.sig.out_res == 20);
    CHECK(n.inputs.size() == 2);
    CHECK(rec.outputs[1] == ValueRef::node(n.id));  // level 4 output
  }

  plan.flavor = SpaceFlavor::kResidual;
  const ResolvedGraph res = expand_network(plan);
  CHECK(count_role(res, NodeRole::kRecycle) == 0);
  CHECK(count_role(res, NodeRole::kResidual) == 4);
  std::set<std::string> rec_blocks, res_blocks;
  for (const auto& n : rec.nodes) rec_blocks.insert(n.block);
  for (const auto& n : res.nodes) res_blocks.insert(n.block);
  CHECK(rec_blocks.count("b4") == 1);
  CHECK(res_blocks.count("b4") == 0);  // four blocks remain after pruning
  CHECK(res_blocks.count("b3") == 1);
}

TEST_CASE("no ReLU after a block output") {
  for (const auto& name : preset_names()) {
    const auto space = preset(name);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto g = build_graph(sample_uniform(space, seed), space, {2, 320});
      std::map<int, NodeRole> role;
      for (const auto& n : g.nodes) role[n.id] = n.role;
      for (const auto& n : g.nodes) {
        if (n.sig.kind != OpKind::kRelu) continue;
        REQUIRE(n.inputs.size() == 1);
        REQUIRE_FALSE(n.inputs[0].graph_input);
        const NodeRole r = role[n.inputs[0].index];
        CHECK((r == NodeRole::kMerge || r == NodeRole::kBody));
      }
    }
  }
}

TEST_CASE("expanded graphs are well formed") {
  for (const auto& name : preset_names()) {
    const auto space = preset(name);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const int repeats = 1 + static_cast<int>(seed % 4);
      const auto g = build_graph(sample_uniform(space, seed), space, {repeats, 320});
      const auto problems = check_graph(g);
      if (!problems.empty()) FAIL(name << " seed " << seed << ": " << problems.front());
      if (space.flavor == SpaceFlavor::kResidual) {
        CHECK(count_role(g, NodeRole::kResidual) == 4 * repeats);
      }
      for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        CHECK(g.nodes[i].id == static_cast<int>(i));
        for (const auto& v : g.nodes[i].inputs) {
          if (!v.graph_input) CHECK(v.index < g.nodes[i].id);
        }
      }
    }
  }
}

TEST_CASE("check_graph reports problems") {
  ResolvedGraph g = reference_graph(1);
  g.nodes.push_back({static_cast<int>(g.nodes.size()),
                     {OpKind::kRelu, 40, 40, 48, 48, 0, 1},
                     {ValueRef::input(0)},
                     NodeRole::kBody,
                     0,
                     "x"});
  auto problems = check_graph(g);
  CHECK(problems.size() == 1);  // unreachable
  CHECK(prune_graph(g) == reference_graph(1));

  g = reference_graph(1);
  g.nodes[3].sig.in_ch += 1;
  CHECK_FALSE(check_graph(g).empty());
}

TEST_CASE("prune_graph keeps reachable nodes") {
  ResolvedGraph g = reference_graph(2);
  const auto live = reachable_nodes(g);
  for (bool b : live) CHECK(b);
  CHECK(prune_graph(g) == g);
}

TEST_CASE("graph export round-trip") {
  for (const auto& name : preset_names()) {
    const auto space = preset(name);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const auto g = build_graph(sample_uniform(space, seed), space, {3, 320});
      const std::string text = export_graph(g);
      const ResolvedGraph back = parse_graph(text);
      CHECK(back == g);
      CHECK(export_graph(back) == text);
    }
  }
  CHECK_THROWS_AS(parse_graph("{}"), ParseError);
  CHECK_THROWS_AS(parse_graph("[1, 2"), ParseError);
}

TEST_CASE("dot export") {
  const std::string dot = export_dot(reference_graph(1));
  CHECK(dot.rfind("digraph", 0) == 0);
  CHECK(dot.find("conv1x1") != std::string::npos);
  CHECK(dot.find("->") != std::string::npos);
}
