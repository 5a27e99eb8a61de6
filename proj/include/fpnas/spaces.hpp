#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fpnas {

using BigInt = boost::multiprecision::cpp_int;

inline constexpr int kNumLevels = 4;
inline constexpr int kMinLevel = 3;
inline constexpr int kMaxLevel = 6;
inline constexpr int kNumOutputs = 4;
inline constexpr int kNumPermutations = 24;

enum class MergeOp { kSum, kSqueezeExcite };

// How a cell treats features beyond its blocks.
//  kResidual:  cell-wide residuals, dead blocks pruned (MnasFPN family).
//  kRecycling: no residuals, unconsumed blocks added into the
//              same-resolution output (NAS-FPN family).
enum class SpaceFlavor { kResidual, kRecycling };

std::string_view to_string(MergeOp op);
std::string_view to_string(SpaceFlavor flavor);
MergeOp parse_merge_op(std::string_view s);
SpaceFlavor parse_flavor(std::string_view s);

struct SearchSpaceDef {
  std::string name;
  std::vector<int> kernel_choices;
  std::vector<int> channel_choices;
  // Empty means the intermediate width is tied to the shared width (F = C).
  std::vector<int> expansion_choices;
  bool sdo_enabled = true;
  int max_in_degree = 2;
  int internal_block_budget = 5;
  std::vector<MergeOp> merge_ops{MergeOp::kSum, MergeOp::kSqueezeExcite};
  SpaceFlavor flavor = SpaceFlavor::kResidual;

  bool expands() const { return !expansion_choices.empty(); }
  int num_nodes() const { return internal_block_budget + kNumOutputs; }

  bool operator==(const SearchSpaceDef&) const = default;
};

// Throws ConfigError when a hand-written space is malformed.
void check_space(const SearchSpaceDef& space);

const std::vector<std::string>& preset_names();
SearchSpaceDef preset(std::string_view name);

enum class SlotKind {
  kChannels,     // global shared width C
  kPermutation,  // order in which output levels are generated
  kInputs,       // which existing features a node merges
  kMergeOp,
  kKernel,
  kExpansion,    // intermediate width F
  kResolution,   // internal nodes only
};

std::string_view to_string(SlotKind kind);

struct Slot {
  SlotKind kind;
  int node;  // -1 for global slots
  int choices;
};

struct TokenSchema {
  std::vector<Slot> slots;

  std::size_t size() const { return slots.size(); }
  std::vector<int> choice_counts() const;
};

// Slots with a single admissible value are omitted.
TokenSchema token_schema(const SearchSpaceDef& space);

struct Genome {
  std::vector<int> tokens;

  bool operator==(const Genome&) const = default;
};

// Throws SchemaError naming the first offending token.
void check_genome(const Genome& genome, const TokenSchema& schema);

Genome sample_uniform(const SearchSpaceDef& space, std::uint64_t seed);

// Input candidates of node i: the 4 cell inputs followed by the i nodes
// generated before it.
inline int num_candidates(int node) { return node + kNumLevels; }

// All admissible input sets of a node: subsets of size 2..max_in_degree of
// its candidates, ordered by size then lexicographically.
std::vector<std::vector<int>> input_subsets(int num_candidates,
                                            int max_in_degree);
std::int64_t input_choice_count(int num_candidates, int max_in_degree);

// i-th permutation (lexicographic) of the output levels {3,4,5,6}.
std::vector<int> output_permutation(int index);
int permutation_index(const std::vector<int>& levels);

BigInt binomial(int n, int k);
BigInt schema_product(const TokenSchema& schema);

// Closed-form search space size. In-degree 2 counts pairs with C(i+4, 2);
// in-degree 4 applies the literal per-node factor (i+2)(i+1) on top.
// Throws ConfigError for other in-degrees (no closed form).
BigInt cardinality(const SearchSpaceDef& space);

// Published order-of-magnitude figure for a preset, if any.
std::optional<double> published_cardinality(std::string_view preset_name);

// Space config files (JSON).
std::string dump_space(const SearchSpaceDef& space);
SearchSpaceDef parse_space(std::string_view text);
SearchSpaceDef load_space(const std::string& path);
// Preset name or path to a config file.
SearchSpaceDef resolve_space(const std::string& name_or_path);

// Genome files: one whitespace-separated token sequence per line.
std::string format_genome(const Genome& genome);
Genome parse_genome(std::string_view line);
std::vector<Genome> read_genomes(std::istream& in);
void write_genomes(std::ostream& out, const std::vector<Genome>& genomes);

}  // namespace fpnas
