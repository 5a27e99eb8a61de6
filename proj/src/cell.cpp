#include "fpnas/cell.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "fpnas/errors.hpp"

namespace fpnas {

int level_resolution(int image_size, int level) {
  if (level < kMinLevel || level > kMaxLevel) {
    throw ConfigError("pyramid level " + std::to_string(level) +
                      " outside 3..6");
  }
  const int stride = 1 << level;
  if (image_size <= 0 || image_size % stride != 0) {
    throw ConfigError("image size " + std::to_string(image_size) +
                      " is not divisible by 2^" + std::to_string(level));
  }
  return image_size / stride;
}

std::string to_string(const NodeRef& ref) {
  switch (ref.kind) {
    case NodeRef::Kind::kCellInput: return "in" + std::to_string(ref.index + kMinLevel);
    case NodeRef::Kind::kInternal: return "b" + std::to_string(ref.index);
    case NodeRef::Kind::kOutput: return "o" + std::to_string(ref.index);
  }
  return "?";
}

const Block& Cell::block(const NodeRef& ref) const {
  if (ref.kind == NodeRef::Kind::kInternal) return internal.at(ref.index);
  if (ref.kind == NodeRef::Kind::kOutput) return outputs.at(ref.index);
  throw ConsistencyError("cell inputs are not blocks");
}

namespace {

template <typename T>
int index_of(const std::vector<T>& v, const T& x) {
  auto it = std::find(v.begin(), v.end(), x);
  return it == v.end() ? -1 : static_cast<int>(it - v.begin());
}

// Candidate c of node i (see num_candidates) as a cell reference.
NodeRef candidate_ref(int c, int budget) {
  if (c < kNumLevels) return NodeRef::cell_input(c + kMinLevel);
  const int node = c - kNumLevels;
  return node < budget ? NodeRef::internal(node)
                       : NodeRef::output(node - budget);
}

int candidate_index(const NodeRef& ref, int budget) {
  switch (ref.kind) {
    case NodeRef::Kind::kCellInput: return ref.index;
    case NodeRef::Kind::kInternal: return kNumLevels + ref.index;
    case NodeRef::Kind::kOutput: return kNumLevels + budget + ref.index;
  }
  return -1;
}

}  // namespace

Cell decode_genome(const Genome& genome, const SearchSpaceDef& space,
                   const PlanParams& params) {
  const TokenSchema schema = token_schema(space);
  check_genome(genome, schema);
  for (int level = kMinLevel; level <= kMaxLevel; ++level) {
    level_resolution(params.image_size, level);
  }

  const int budget = space.internal_block_budget;
  std::vector<Block> nodes(space.num_nodes());
  for (auto& b : nodes) {
    b.inputs = {NodeRef::cell_input(3), NodeRef::cell_input(4)};
    b.merge = space.merge_ops.front();
    b.kernel = space.kernel_choices.front();
    b.expansion = space.expands() ? space.expansion_choices.front() : 0;
    b.level = kMinLevel;
  }
  int channels = space.channel_choices.front();
  int perm = 0;

  for (std::size_t s = 0; s < schema.size(); ++s) {
    const Slot& slot = schema.slots[s];
    const int t = genome.tokens[s];
    switch (slot.kind) {
      case SlotKind::kChannels: channels = space.channel_choices[t]; break;
      case SlotKind::kPermutation: perm = t; break;
      case SlotKind::kInputs: {
        // Materialized below; the subset list depends only on the node.
        break;
      }
      case SlotKind::kMergeOp: nodes[slot.node].merge = space.merge_ops[t]; break;
      case SlotKind::kKernel: nodes[slot.node].kernel = space.kernel_choices[t]; break;
      case SlotKind::kExpansion:
        nodes[slot.node].expansion = space.expansion_choices[t];
        break;
      case SlotKind::kResolution: nodes[slot.node].level = kMinLevel + t; break;
    }
  }

  // Input selection. A node with no input slot (single admissible subset)
  // keeps the default pair, which is that subset.
  for (std::size_t s = 0; s < schema.size(); ++s) {
    const Slot& slot = schema.slots[s];
    if (slot.kind != SlotKind::kInputs) continue;
    const auto subsets = input_subsets(num_candidates(slot.node), space.max_in_degree);
    const auto& chosen = subsets.at(genome.tokens[s]);
    auto& b = nodes[slot.node];
    b.inputs.clear();
    for (int c : chosen) b.inputs.push_back(candidate_ref(c, budget));
  }

  const std::vector<int> out_levels = output_permutation(perm);
  Cell cell;
  cell.channels = channels;
  cell.image_size = params.image_size;
  for (int i = 0; i < budget; ++i) {
    auto& b = nodes[i];
    if (!space.expands()) b.expansion = channels;
    cell.internal.push_back(b);
  }
  for (int j = 0; j < kNumOutputs; ++j) {
    auto& b = nodes[budget + j];
    if (!space.expands()) b.expansion = channels;
    b.level = out_levels[j];
    cell.outputs[j] = b;
  }
  return cell;
}

Genome encode_cell(const Cell& cell, const SearchSpaceDef& space) {
  const TokenSchema schema = token_schema(space);
  const int budget = space.internal_block_budget;
  if (static_cast<int>(cell.internal.size()) != budget) {
    throw DomainError("encode_cell needs an unpruned cell with " +
                      std::to_string(budget) + " internal blocks");
  }
  const auto node = [&](int i) -> const Block& {
    return i < budget ? cell.internal[i] : cell.outputs[i - budget];
  };
  const auto require = [](int idx, std::string_view what) {
    if (idx < 0) throw DomainError("cell value not in space: " + std::string(what));
    return idx;
  };

  Genome g;
  for (const auto& slot : schema.slots) {
    int t = 0;
    switch (slot.kind) {
      case SlotKind::kChannels:
        t = require(index_of(space.channel_choices, cell.channels), "channels");
        break;
      case SlotKind::kPermutation: {
        std::vector<int> levels;
        for (const auto& o : cell.outputs) levels.push_back(o.level);
        t = permutation_index(levels);
        break;
      }
      case SlotKind::kInputs: {
        std::vector<int> idx;
        for (const auto& r : node(slot.node).inputs) idx.push_back(candidate_index(r, budget));
        std::sort(idx.begin(), idx.end());
        t = require(index_of(input_subsets(num_candidates(slot.node), space.max_in_degree), idx),
                    "inputs");
        break;
      }
      case SlotKind::kMergeOp:
        t = require(index_of(space.merge_ops, node(slot.node).merge), "merge op");
        break;
      case SlotKind::kKernel:
        t = require(index_of(space.kernel_choices, node(slot.node).kernel), "kernel");
        break;
      case SlotKind::kExpansion:
        t = require(index_of(space.expansion_choices, node(slot.node).expansion), "expansion");
        break;
      case SlotKind::kResolution: t = node(slot.node).level - kMinLevel; break;
    }
    g.tokens.push_back(t);
  }
  check_genome(g, schema);
  return g;
}

bool ValidationReport::has(ViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.kind == kind; });
}

std::string ValidationReport::to_string() const {
  std::string out;
  for (const auto& v : violations) out += v.message + "\n";
  return out;
}

ValidationReport validate_cell(const Cell& cell, const SearchSpaceDef& space) {
  ValidationReport report;
  const auto add = [&](ViolationKind kind, std::string msg) {
    report.violations.push_back({kind, std::move(msg)});
  };
  const auto contains = [](const std::vector<int>& v, int x) {
    return std::find(v.begin(), v.end(), x) != v.end();
  };

  for (int level = kMinLevel; level <= kMaxLevel; ++level) {
    const int stride = 1 << level;
    if (cell.image_size <= 0 || cell.image_size % stride != 0) {
      add(ViolationKind::kImageSize,
          "image size " + std::to_string(cell.image_size) + " not divisible by " +
              std::to_string(stride));
      break;
    }
  }
  if (static_cast<int>(cell.internal.size()) > space.internal_block_budget) {
    add(ViolationKind::kBlockBudget,
        std::to_string(cell.internal.size()) + " internal blocks exceed budget " +
            std::to_string(space.internal_block_budget));
  }
  if (!contains(space.channel_choices, cell.channels)) {
    add(ViolationKind::kChannels,
        "shared channels " + std::to_string(cell.channels) + " not in space");
  }

  const auto check_block = [&](const Block& b, const NodeRef& self) {
    const std::string name = fpnas::to_string(self);
    const int n = static_cast<int>(b.inputs.size());
    if (n < 2) {
      add(ViolationKind::kTooFewInputs, name + ": merges " + std::to_string(n) +
                                            " inputs, need at least 2");
    }
    if (n > space.max_in_degree) {
      add(ViolationKind::kInDegree, name + ": in-degree " + std::to_string(n) +
                                        " exceeds maximum " +
                                        std::to_string(space.max_in_degree));
    }
    std::set<NodeRef> seen;
    for (const auto& r : b.inputs) {
      if (!seen.insert(r).second) {
        add(ViolationKind::kDuplicateInput, name + ": duplicate input " + fpnas::to_string(r));
      }
      bool exists = true;
      bool precedes = true;
      switch (r.kind) {
        case NodeRef::Kind::kCellInput:
          exists = r.index >= 0 && r.index < kNumLevels;
          break;
        case NodeRef::Kind::kInternal:
          exists = r.index >= 0 && r.index < static_cast<int>(cell.internal.size());
          precedes = self.kind == NodeRef::Kind::kOutput || r.index < self.index;
          break;
        case NodeRef::Kind::kOutput:
          exists = r.index >= 0 && r.index < kNumOutputs;
          precedes = self.kind == NodeRef::Kind::kOutput && r.index < self.index;
          break;
      }
      if (!exists) {
        add(ViolationKind::kBadReference, name + ": dangling reference " + fpnas::to_string(r));
      } else if (!precedes) {
        add(ViolationKind::kForwardReference,
            name + ": forward reference to " + fpnas::to_string(r));
      }
    }
    if (std::find(space.merge_ops.begin(), space.merge_ops.end(), b.merge) ==
        space.merge_ops.end()) {
      add(ViolationKind::kMergeOp,
          name + ": merge op " + std::string(fpnas::to_string(b.merge)) + " not allowed");
    }
    if (!contains(space.kernel_choices, b.kernel)) {
      add(ViolationKind::kKernel, name + ": kernel " + std::to_string(b.kernel) + " not in space");
    }
    if (space.expands() ? !contains(space.expansion_choices, b.expansion)
                        : b.expansion != cell.channels) {
      add(ViolationKind::kExpansion,
          name + ": expansion " + std::to_string(b.expansion) +
              (space.expands() ? " not in space" : " must equal shared channels"));
    }
    if (b.level < kMinLevel || b.level > kMaxLevel) {
      add(ViolationKind::kLevel, name + ": level " + std::to_string(b.level) + " outside 3..6");
    }
  };

  for (int i = 0; i < static_cast<int>(cell.internal.size()); ++i) {
    check_block(cell.internal[i], NodeRef::internal(i));
  }
  std::vector<int> levels;
  for (int j = 0; j < kNumOutputs; ++j) {
    check_block(cell.outputs[j], NodeRef::output(j));
    levels.push_back(cell.outputs[j].level);
  }
  std::sort(levels.begin(), levels.end());
  if (levels != std::vector<int>{3, 4, 5, 6}) {
    add(ViolationKind::kOutputLevels, "output levels are not one per level 3..6");
  }
  return report;
}

Cell prune_unused_blocks(const Cell& cell) {
  const int n = static_cast<int>(cell.internal.size());
  std::vector<bool> live(n, false);
  const auto mark = [&](const Block& b) {
    for (const auto& r : b.inputs) {
      if (r.kind == NodeRef::Kind::kInternal) live.at(r.index) = true;
    }
  };
  for (const auto& o : cell.outputs) mark(o);
  // Internal blocks only read earlier ones, so one backward sweep closes
  // the reachable set.
  for (int i = n - 1; i >= 0; --i) {
    if (live[i]) mark(cell.internal[i]);
  }

  std::vector<int> remap(n, -1);
  Cell out = cell;
  out.internal.clear();
  for (int i = 0; i < n; ++i) {
    if (!live[i]) continue;
    remap[i] = static_cast<int>(out.internal.size());
    out.internal.push_back(cell.internal[i]);
  }
  const auto fix = [&](Block& b) {
    for (auto& r : b.inputs) {
      if (r.kind == NodeRef::Kind::kInternal) r.index = remap[r.index];
    }
  };
  for (auto& b : out.internal) fix(b);
  for (auto& b : out.outputs) fix(b);
  return out;
}

std::vector<int> unconsumed_internal_blocks(const Cell& cell) {
  std::vector<bool> used(cell.internal.size(), false);
  const auto mark = [&](const Block& b) {
    for (const auto& r : b.inputs) {
      if (r.kind == NodeRef::Kind::kInternal) used.at(r.index) = true;
    }
  };
  for (const auto& b : cell.internal) mark(b);
  for (const auto& b : cell.outputs) mark(b);
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(used.size()); ++i) {
    if (!used[i]) out.push_back(i);
  }
  return out;
}

}  // namespace fpnas
