#pragma once

#include <vector>

#include "fpnas/cell.hpp"
#include "fpnas/spaces.hpp"

namespace fpnas::testing {

inline Block make_block(std::vector<NodeRef> inputs, int level, int expansion, int kernel,
                        MergeOp merge = MergeOp::kSum) {
  Block b;
  b.inputs = std::move(inputs);
  b.level = level;
  b.expansion = expansion;
  b.kernel = kernel;
  b.merge = merge;
  return b;
}

// Single-block reference cell: one internal block at level 4 (20x20 at 320),
// F = 96, k = 3, sum merge, C = 48. The other four internal blocks are never
// read and disappear on pruning. Outputs are generated as levels 4, 5, 6, 3.
inline Cell reference_cell() {
  using R = NodeRef;
  Cell c;
  c.channels = 48;
  c.image_size = 320;
  c.internal.push_back(make_block({R::cell_input(3), R::cell_input(4)}, 4, 96, 3));
  for (int i = 1; i < 5; ++i) {
    c.internal.push_back(make_block({R::cell_input(3), R::cell_input(4)}, 3, 64, 3));
  }
  c.outputs[0] = make_block({R::cell_input(3), R::internal(0)}, 4, 96, 3);
  c.outputs[1] = make_block({R::cell_input(4), R::internal(0)}, 5, 96, 3);
  c.outputs[2] = make_block({R::internal(0), R::output(1)}, 6, 96, 3);
  c.outputs[3] = make_block({R::cell_input(3), R::internal(0)}, 3, 96, 3);
  return c;
}

// Every internal block except b1 (level 4) is read by some block.
inline Cell recycling_cell(int channels) {
  using R = NodeRef;
  Cell c;
  c.channels = channels;
  c.image_size = 320;
  c.internal.push_back(make_block({R::cell_input(3), R::cell_input(4)}, 4, channels, 3));
  c.internal.push_back(make_block({R::cell_input(3), R::cell_input(4)}, 4, channels, 3));
  c.internal.push_back(make_block({R::internal(0), R::cell_input(5)}, 5, channels, 3));
  c.internal.push_back(make_block({R::internal(2), R::cell_input(6)}, 6, channels, 3));
  c.internal.push_back(make_block({R::internal(3), R::cell_input(3)}, 3, channels, 3));
  c.outputs[0] = make_block({R::internal(4), R::cell_input(3)}, 3, channels, 3);
  c.outputs[1] = make_block({R::internal(0), R::output(0)}, 4, channels, 3);
  c.outputs[2] = make_block({R::internal(2), R::output(1)}, 5, channels, 3);
  c.outputs[3] = make_block({R::internal(3), R::output(2)}, 6, channels, 3);
  return c;
}

}  // namespace fpnas::testing
