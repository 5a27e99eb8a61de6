#pragma once

#include <array>
#include <string>
#include <vector>

#include "fpnas/spaces.hpp"

namespace fpnas {

struct FeatureSpec {
  int level = kMinLevel;
  int resolution = 1;
  int channels = 1;

  bool operator==(const FeatureSpec&) const = default;
};

// Side length of the pyramid level. Throws ConfigError if not divisible.
int level_resolution(int image_size, int level);

struct NodeRef {
  enum class Kind { kCellInput, kInternal, kOutput };

  Kind kind = Kind::kCellInput;
  // Cell inputs are indexed by level - 3; blocks by generation order.
  int index = 0;

  static NodeRef cell_input(int level) { return {Kind::kCellInput, level - kMinLevel}; }
  static NodeRef internal(int i) { return {Kind::kInternal, i}; }
  static NodeRef output(int i) { return {Kind::kOutput, i}; }

  bool operator==(const NodeRef&) const = default;
  auto operator<=>(const NodeRef&) const = default;
};

std::string to_string(const NodeRef& ref);

struct Block {
  std::vector<NodeRef> inputs;
  MergeOp merge = MergeOp::kSum;
  int level = kMinLevel;  // resolution of the intermediate feature
  int expansion = 0;      // F
  int kernel = 3;

  bool operator==(const Block&) const = default;
};

// Output blocks are stored in generation order; outputs[j].level is the
// pyramid level it is bound to. An output block may read earlier outputs.
struct Cell {
  std::vector<Block> internal;
  std::array<Block, kNumOutputs> outputs;
  int channels = 0;  // shared width C
  int image_size = 320;

  int resolution(int level) const { return level_resolution(image_size, level); }
  const Block& block(const NodeRef& ref) const;

  bool operator==(const Cell&) const = default;
};

struct PlanParams {
  int repeats = 3;
  int image_size = 320;
};

Cell decode_genome(const Genome& genome, const SearchSpaceDef& space,
                   const PlanParams& params = {});

// Inverse of decode_genome for unpruned cells (internal count == budget).
Genome encode_cell(const Cell& cell, const SearchSpaceDef& space);

enum class ViolationKind {
  kBlockBudget,
  kTooFewInputs,
  kInDegree,
  kDuplicateInput,
  kForwardReference,
  kBadReference,
  kMergeOp,
  kKernel,
  kExpansion,
  kChannels,
  kLevel,
  kOutputLevels,
  kImageSize,
};

struct Violation {
  ViolationKind kind;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(ViolationKind kind) const;
  std::string to_string() const;
};

ValidationReport validate_cell(const Cell& cell, const SearchSpaceDef& space);

// Keeps exactly the internal blocks reachable from the outputs, preserving
// their relative order.
Cell prune_unused_blocks(const Cell& cell);

// Internal blocks that no block of the cell reads from.
std::vector<int> unconsumed_internal_blocks(const Cell& cell);

}  // namespace fpnas
