#include "fpnas/spaces.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "fpnas/errors.hpp"
#include "fpnas/rng.hpp"

namespace fpnas {

using nlohmann::json;

std::string_view to_string(MergeOp op) {
  return op == MergeOp::kSum ? "sum" : "se";
}

std::string_view to_string(SpaceFlavor flavor) {
  return flavor == SpaceFlavor::kResidual ? "residual" : "recycling";
}

MergeOp parse_merge_op(std::string_view s) {
  if (s == "sum") return MergeOp::kSum;
  if (s == "se") return MergeOp::kSqueezeExcite;
  throw ParseError("unknown merge op '" + std::string(s) + "'");
}

SpaceFlavor parse_flavor(std::string_view s) {
  if (s == "residual") return SpaceFlavor::kResidual;
  if (s == "recycling") return SpaceFlavor::kRecycling;
  throw ParseError("unknown space flavor '" + std::string(s) + "'");
}

std::string_view to_string(SlotKind kind) {
  switch (kind) {
    case SlotKind::kChannels: return "channels";
    case SlotKind::kPermutation: return "permutation";
    case SlotKind::kInputs: return "inputs";
    case SlotKind::kMergeOp: return "merge";
    case SlotKind::kKernel: return "kernel";
    case SlotKind::kExpansion: return "expansion";
    case SlotKind::kResolution: return "resolution";
  }
  return "?";
}

namespace {

bool has_duplicates(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  return std::adjacent_find(v.begin(), v.end()) != v.end();
}

}  // namespace

void check_space(const SearchSpaceDef& space) {
  const auto fail = [&](const std::string& msg) {
    throw ConfigError("space '" + space.name + "': " + msg);
  };
  if (space.kernel_choices.empty()) fail("no kernel choices");
  if (space.channel_choices.empty()) fail("no channel choices");
  if (space.merge_ops.empty()) fail("no merge ops");
  for (int k : space.kernel_choices) {
    if (k < 1 || k % 2 == 0) fail("kernel sizes must be odd and positive");
  }
  for (int c : space.channel_choices) {
    if (c < 1) fail("channel choices must be positive");
  }
  for (int f : space.expansion_choices) {
    if (f < 1) fail("expansion choices must be positive");
  }
  if (has_duplicates(space.kernel_choices) ||
      has_duplicates(space.channel_choices) ||
      has_duplicates(space.expansion_choices)) {
    fail("duplicate choices");
  }
  if (space.merge_ops.size() == 2 && space.merge_ops[0] == space.merge_ops[1]) {
    fail("duplicate merge ops");
  }
  if (space.max_in_degree < 2) fail("max_in_degree must be >= 2");
  if (space.internal_block_budget < 0) fail("negative block budget");
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"nas-fpnlite-s", "no-expand",
                                              "mnasfpn", "conn-search"};
  return names;
}

SearchSpaceDef preset(std::string_view name) {
  const std::vector<int> kernels{3, 5, 7};
  const std::vector<int> widths{16, 32, 48, 64, 80, 96};
  const std::vector<int> expansions{16, 32, 64, 96, 128, 256, 512};

  SearchSpaceDef s;
  s.name = std::string(name);
  if (name == "nas-fpnlite-s") {
    s.kernel_choices = {3};
    s.channel_choices = {64};
    s.sdo_enabled = false;
    s.flavor = SpaceFlavor::kRecycling;
  } else if (name == "no-expand") {
    s.kernel_choices = kernels;
    s.channel_choices = widths;
  } else if (name == "mnasfpn") {
    s.kernel_choices = kernels;
    s.channel_choices = widths;
    s.expansion_choices = expansions;
  } else if (name == "conn-search") {
    s.kernel_choices = kernels;
    s.channel_choices = widths;
    s.expansion_choices = expansions;
    s.max_in_degree = 4;
    s.merge_ops = {MergeOp::kSum};
  } else {
    throw ConfigError("unknown search space preset '" + std::string(name) + "'");
  }
  return s;
}

std::vector<int> TokenSchema::choice_counts() const {
  std::vector<int> out;
  out.reserve(slots.size());
  for (const auto& s : slots) out.push_back(s.choices);
  return out;
}

TokenSchema token_schema(const SearchSpaceDef& space) {
  check_space(space);
  TokenSchema schema;
  const auto add = [&](SlotKind kind, int node, std::int64_t choices) {
    if (choices > 1) schema.slots.push_back({kind, node, static_cast<int>(choices)});
  };
  add(SlotKind::kChannels, -1, static_cast<int>(space.channel_choices.size()));
  add(SlotKind::kPermutation, -1, kNumPermutations);
  for (int i = 0; i < space.num_nodes(); ++i) {
    add(SlotKind::kInputs, i,
        input_choice_count(num_candidates(i), space.max_in_degree));
    add(SlotKind::kMergeOp, i, static_cast<int>(space.merge_ops.size()));
    add(SlotKind::kKernel, i, static_cast<int>(space.kernel_choices.size()));
    add(SlotKind::kExpansion, i,
        static_cast<int>(space.expansion_choices.size()));
    if (i < space.internal_block_budget) {
      add(SlotKind::kResolution, i, kNumLevels);
    }
  }
  return schema;
}

void check_genome(const Genome& genome, const TokenSchema& schema) {
  if (genome.tokens.size() != schema.size()) {
    throw SchemaError(std::min(genome.tokens.size(), schema.size()),
                      "genome has " + std::to_string(genome.tokens.size()) +
                          " tokens, schema expects " +
                          std::to_string(schema.size()));
  }
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const int t = genome.tokens[i];
    const Slot& slot = schema.slots[i];
    if (t < 0 || t >= slot.choices) {
      throw SchemaError(i, "value " + std::to_string(t) + " out of range [0, " +
                               std::to_string(slot.choices) + ") for " +
                               std::string(to_string(slot.kind)) + " slot");
    }
  }
}

Genome sample_uniform(const SearchSpaceDef& space, std::uint64_t seed) {
  const TokenSchema schema = token_schema(space);
  Rng rng(seed);
  Genome g;
  g.tokens.reserve(schema.size());
  for (const auto& slot : schema.slots) {
    g.tokens.push_back(static_cast<int>(uniform_index(rng, slot.choices)));
  }
  return g;
}

std::vector<std::vector<int>> input_subsets(int num_candidates,
                                            int max_in_degree) {
  std::vector<std::vector<int>> out;
  const int top = std::min(max_in_degree, num_candidates);
  for (int size = 2; size <= top; ++size) {
    // Lexicographic enumeration of size-element combinations.
    std::vector<int> combo(size);
    std::iota(combo.begin(), combo.end(), 0);
    while (true) {
      out.push_back(combo);
      int pos = size - 1;
      while (pos >= 0 && combo[pos] == num_candidates - size + pos) --pos;
      if (pos < 0) break;
      ++combo[pos];
      for (int j = pos + 1; j < size; ++j) combo[j] = combo[j - 1] + 1;
    }
  }
  return out;
}

std::int64_t input_choice_count(int num_candidates, int max_in_degree) {
  std::int64_t total = 0;
  const int top = std::min(max_in_degree, num_candidates);
  for (int size = 2; size <= top; ++size) {
    total += static_cast<std::int64_t>(binomial(num_candidates, size));
  }
  return total;
}

std::vector<int> output_permutation(int index) {
  if (index < 0 || index >= kNumPermutations) {
    throw DomainError("permutation index out of range: " + std::to_string(index));
  }
  std::vector<int> levels{3, 4, 5, 6};
  for (int i = 0; i < index; ++i) std::next_permutation(levels.begin(), levels.end());
  return levels;
}

int permutation_index(const std::vector<int>& levels) {
  std::vector<int> p{3, 4, 5, 6};
  for (int i = 0; i < kNumPermutations; ++i) {
    if (p == levels) return i;
    std::next_permutation(p.begin(), p.end());
  }
  throw DomainError("output levels are not a permutation of 3..6");
}

BigInt binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  BigInt r = 1;
  for (int i = 1; i <= k; ++i) {
    r *= n - k + i;
    r /= i;
  }
  return r;
}

BigInt schema_product(const TokenSchema& schema) {
  BigInt r = 1;
  for (const auto& s : schema.slots) r *= s.choices;
  return r;
}

BigInt cardinality(const SearchSpaceDef& space) {
  check_space(space);
  if (space.max_in_degree != 2 && space.max_in_degree != 4) {
    throw ConfigError("no closed-form cardinality for max in-degree " +
                      std::to_string(space.max_in_degree));
  }
  const int nodes = space.num_nodes();
  const int per_node_width =
      space.expands() ? static_cast<int>(space.expansion_choices.size()) : 1;

  BigInt total = 1;
  for (int i = 0; i < nodes; ++i) {
    total *= binomial(num_candidates(i), 2);
    if (space.max_in_degree == 4) total *= BigInt(i + 2) * (i + 1);
    total *= static_cast<int>(space.merge_ops.size());
    total *= static_cast<int>(space.kernel_choices.size());
    total *= per_node_width;
  }
  for (int i = 0; i < space.internal_block_budget; ++i) total *= kNumLevels;
  total *= static_cast<int>(space.channel_choices.size());
  total *= kNumPermutations;
  return total;
}

std::optional<double> published_cardinality(std::string_view preset_name) {
  static const std::map<std::string, double, std::less<>> figures{
      {"nas-fpnlite-s", 2e22},
      {"no-expand", 2.4e27},
      {"mnasfpn", 1e31},
      {"conn-search", 3e42},
  };
  auto it = figures.find(preset_name);
  if (it == figures.end()) return std::nullopt;
  return it->second;
}

std::string dump_space(const SearchSpaceDef& space) {
  json j;
  j["name"] = space.name;
  j["kernel_choices"] = space.kernel_choices;
  j["channel_choices"] = space.channel_choices;
  j["expansion_choices"] = space.expansion_choices;
  j["sdo"] = space.sdo_enabled;
  j["max_in_degree"] = space.max_in_degree;
  j["internal_blocks"] = space.internal_block_budget;
  std::vector<std::string> ops;
  for (auto op : space.merge_ops) ops.emplace_back(to_string(op));
  j["merge_ops"] = ops;
  j["flavor"] = std::string(to_string(space.flavor));
  return j.dump(2) + "\n";
}

SearchSpaceDef parse_space(std::string_view text) {
  SearchSpaceDef s;
  try {
    const json j = json::parse(text);
    s.name = j.at("name").get<std::string>();
    s.kernel_choices = j.at("kernel_choices").get<std::vector<int>>();
    s.channel_choices = j.at("channel_choices").get<std::vector<int>>();
    s.expansion_choices =
        j.value("expansion_choices", std::vector<int>{});
    s.sdo_enabled = j.value("sdo", true);
    s.max_in_degree = j.value("max_in_degree", 2);
    s.internal_block_budget = j.value("internal_blocks", 5);
    if (j.contains("merge_ops")) {
      s.merge_ops.clear();
      for (const auto& op : j.at("merge_ops")) {
        s.merge_ops.push_back(parse_merge_op(op.get<std::string>()));
      }
    }
    s.flavor = parse_flavor(j.value("flavor", std::string("residual")));
  } catch (const json::exception& e) {
    throw ParseError(std::string("space config: ") + e.what());
  }
  check_space(s);
  return s;
}

SearchSpaceDef load_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open space config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_space(ss.str());
}

SearchSpaceDef resolve_space(const std::string& name_or_path) {
  const auto& names = preset_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
    return preset(name_or_path);
  }
  if (name_or_path.find('/') != std::string::npos ||
      name_or_path.find('.') != std::string::npos) {
    return load_space(name_or_path);
  }
  return preset(name_or_path);  // throws with the unknown-preset message
}

std::string format_genome(const Genome& genome) {
  std::string out;
  for (std::size_t i = 0; i < genome.tokens.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(genome.tokens[i]);
  }
  return out;
}

Genome parse_genome(std::string_view line) {
  Genome g;
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) {
      throw ParseError("genome token '" + tok + "' is not an integer");
    }
    g.tokens.push_back(v);
  }
  return g;
}

std::vector<Genome> read_genomes(std::istream& in) {
  std::vector<Genome> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line[line.find_first_not_of(" \t")] == '#') continue;
    out.push_back(parse_genome(line));
  }
  return out;
}

void write_genomes(std::ostream& out, const std::vector<Genome>& genomes) {
  for (const auto& g : genomes) out << format_genome(g) << '\n';
}

}  // namespace fpnas
