#include <deque>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "fpnas/cell.hpp"
#include "fpnas/errors.hpp"

using namespace fpnas;
using fpnas::testing::make_block;

namespace {

// Worklist reachability from the output blocks, by internal index.
std::set<int> reachable_internal(const Cell& cell) {
  std::set<int> seen;
  std::deque<const Block*> work;
  for (const auto& o : cell.outputs) work.push_back(&o);
  while (!work.empty()) {
    const Block* b = work.front();
    work.pop_front();
    for (const auto& r : b->inputs) {
      if (r.kind == NodeRef::Kind::kInternal && seen.insert(r.index).second) {
        work.push_back(&cell.internal[r.index]);
      }
    }
  }
  return seen;
}

}  // namespace

TEST_CASE("level_resolution") {
  CHECK(level_resolution(320, 4) == 20);
  CHECK(level_resolution(320, 3) == 40);
  CHECK(level_resolution(320, 6) == 5);
  CHECK(level_resolution(640, 5) == 20);
  CHECK_THROWS_AS(level_resolution(300, 6), ConfigError);
  CHECK_THROWS_AS(level_resolution(320, 7), ConfigError);
}

TEST_CASE("all-zeros genome") {
  const auto space = preset("mnasfpn");
  const Genome zeros{std::vector<int>(token_schema(space).size(), 0)};
  const Cell cell = decode_genome(zeros, space);
  CHECK(cell.internal.size() == 5);
  CHECK(cell.channels == 16);
  const std::vector<NodeRef> first_pair{NodeRef::cell_input(3), NodeRef::cell_input(4)};
  for (const auto& b : cell.internal) {
    CHECK(b.inputs == first_pair);
    CHECK(b.level == 3);
    CHECK(b.kernel == 3);
    CHECK(b.expansion == 16);
    CHECK(b.merge == MergeOp::kSum);
  }
  for (int j = 0; j < kNumOutputs; ++j) {
    CHECK(cell.outputs[j].inputs == first_pair);
    CHECK(cell.outputs[j].level == 3 + j);
  }
  CHECK(validate_cell(cell, space).ok());
}

TEST_CASE("no-expand cells tie F to C") {
  const auto space = preset("no-expand");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Cell cell = decode_genome(sample_uniform(space, seed), space);
    for (const auto& b : cell.internal) CHECK(b.expansion == cell.channels);
    for (const auto& b : cell.outputs) CHECK(b.expansion == cell.channels);
  }
}

TEST_CASE("reference cell encodes and decodes") {
  const auto space = preset("mnasfpn");
  const Cell cell = testing::reference_cell();
  REQUIRE(validate_cell(cell, space).ok());
  const Genome g = encode_cell(cell, space);
  const Cell back = decode_genome(g, space);
  CHECK(back == cell);

  const Cell pruned = prune_unused_blocks(back);
  REQUIRE(pruned.internal.size() == 1);
  const Block& b = pruned.internal[0];
  CHECK(pruned.resolution(b.level) == 20);
  CHECK(b.expansion == 96);
  CHECK(b.kernel == 3);
  CHECK(b.merge == MergeOp::kSum);
  CHECK(pruned.channels == 48);
}

TEST_CASE("decode is deterministic and round-trips") {
  for (const auto& name : preset_names()) {
    const auto space = preset(name);
    const Genome g = sample_uniform(space, 7);
    CHECK(decode_genome(g, space) == decode_genome(g, space));
    CHECK(encode_cell(decode_genome(g, space), space) == g);
  }
}

TEST_CASE("decode rejects bad tokens") {
  const auto space = preset("mnasfpn");
  Genome g = sample_uniform(space, 1);
  g.tokens[1] = 24;
  try {
    decode_genome(g, space);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(e.token_index() == 1);
  }
  CHECK_THROWS_AS(decode_genome(sample_uniform(space, 1), space, {3, 100}), ConfigError);
}

TEST_CASE("encode requires an unpruned cell") {
  const auto space = preset("mnasfpn");
  const Cell pruned = prune_unused_blocks(testing::reference_cell());
  CHECK_THROWS(encode_cell(pruned, space));
}

TEST_CASE("validate_cell violations") {
  const auto space = preset("mnasfpn");
  Cell cell = testing::reference_cell();

  SUBCASE("forward reference") {
    cell.internal[1].inputs = {NodeRef::cell_input(3), NodeRef::internal(3)};
    const auto report = validate_cell(cell, space);
    CHECK(report.has(ViolationKind::kForwardReference));
    CHECK(report.to_string().find("forward reference") != std::string::npos);
  }
  SUBCASE("in-degree") {
    cell.internal[0].inputs = {NodeRef::cell_input(3), NodeRef::cell_input(4),
                               NodeRef::cell_input(5)};
    const auto report = validate_cell(cell, space);
    CHECK(report.has(ViolationKind::kInDegree));
    CHECK(report.to_string().find("in-degree 3 exceeds maximum 2") != std::string::npos);
    CHECK(validate_cell(cell, preset("conn-search")).ok());
  }
  SUBCASE("duplicate input") {
    cell.outputs[2].inputs = {NodeRef::internal(0), NodeRef::internal(0)};
    CHECK(validate_cell(cell, space).has(ViolationKind::kDuplicateInput));
  }
  SUBCASE("expansion outside the space") {
    cell.internal[0].expansion = 100;
    CHECK(validate_cell(cell, space).has(ViolationKind::kExpansion));
  }
  SUBCASE("output reading a later output") {
    cell.outputs[0].inputs = {NodeRef::cell_input(3), NodeRef::output(2)};
    CHECK(validate_cell(cell, space).has(ViolationKind::kForwardReference));
  }
  SUBCASE("two outputs on one level") {
    cell.outputs[3].level = 4;
    CHECK(validate_cell(cell, space).has(ViolationKind::kOutputLevels));
  }
  SUBCASE("too many blocks") {
    cell.internal.push_back(cell.internal[1]);
    CHECK(validate_cell(cell, space).has(ViolationKind::kBlockBudget));
  }
  SUBCASE("single input") {
    cell.internal[2].inputs = {NodeRef::cell_input(6)};
    CHECK(validate_cell(cell, space).has(ViolationKind::kTooFewInputs));
  }
}

TEST_CASE("prune examples") {
  using R = NodeRef;
  Cell cell = testing::reference_cell();

  SUBCASE("one referenced block") {
    CHECK(prune_unused_blocks(cell).internal.size() == 1);
  }
  SUBCASE("no referenced blocks") {
    for (auto& o : cell.outputs) o.inputs = {R::cell_input(3), R::cell_input(5)};
    const Cell p = prune_unused_blocks(cell);
    CHECK(p.internal.empty());
    CHECK(p.outputs == cell.outputs);
  }
  SUBCASE("chain out -> b3 -> b1 with orphan b2") {
    cell.internal[1] = make_block({R::cell_input(5), R::cell_input(6)}, 5, 32, 5);
    cell.internal[2] = make_block({R::cell_input(3), R::cell_input(6)}, 6, 16, 7);
    cell.internal[3] = make_block({R::internal(1), R::cell_input(3)}, 4, 64, 3);
    for (auto& o : cell.outputs) o.inputs = {R::cell_input(3), R::cell_input(4)};
    cell.outputs[1].inputs = {R::internal(3), R::cell_input(4)};
    const Cell p = prune_unused_blocks(cell);
    REQUIRE(p.internal.size() == 2);
    CHECK(p.internal[0].kernel == 5);  // old b1
    CHECK(p.internal[1].kernel == 3);  // old b3, now reading new b0
    CHECK(p.internal[1].inputs[0] == R::internal(0));
    CHECK(p.outputs[1].inputs[0] == R::internal(1));
  }
}

TEST_CASE("prune matches a reachability oracle") {
  for (const auto& name : preset_names()) {
    const auto space = preset(name);
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
      const Cell cell = decode_genome(sample_uniform(space, seed), space);
      const std::set<int> keep = reachable_internal(cell);
      const Cell p = prune_unused_blocks(cell);
      REQUIRE(p.internal.size() == keep.size());
      // Same blocks in the same order, modulo index remapping.
      int k = 0;
      for (int old : keep) {
        CHECK(p.internal[k].level == cell.internal[old].level);
        CHECK(p.internal[k].expansion == cell.internal[old].expansion);
        CHECK(p.internal[k].kernel == cell.internal[old].kernel);
        ++k;
      }
      CHECK(reachable_internal(p).size() == p.internal.size());
      CHECK(prune_unused_blocks(p) == p);
      CHECK(validate_cell(p, space).has(ViolationKind::kBadReference) == false);
    }
  }
}

TEST_CASE("unconsumed internal blocks") {
  CHECK(unconsumed_internal_blocks(testing::recycling_cell(64)) == std::vector<int>{1});
  CHECK(unconsumed_internal_blocks(testing::reference_cell()) == std::vector<int>{1, 2, 3, 4});
}
