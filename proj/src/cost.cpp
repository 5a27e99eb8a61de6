#include "fpnas/cost.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fpnas/errors.hpp"
#include "fpnas/rng.hpp"

namespace fpnas {

std::int64_t node_madds(const OpSignature& s) {
  const std::int64_t r2 = static_cast<std::int64_t>(s.out_res) * s.out_res;
  const std::int64_t k2 = static_cast<std::int64_t>(s.kernel) * s.kernel;
  switch (s.kind) {
    case OpKind::kConv1x1: return r2 * s.in_ch * s.out_ch;
    case OpKind::kDepthwiseConv:
    case OpKind::kDownsample: return r2 * k2 * s.out_ch;
    case OpKind::kSqueezeExcite: {
      const std::int64_t squeezed = std::max(1, s.out_ch / 4);
      return r2 * s.out_ch + 2 * s.out_ch * squeezed;
    }
    case OpKind::kUpsample:
    case OpKind::kAdd:
    case OpKind::kRelu: return 0;
  }
  throw UnsupportedOpError("no cost model for op kind " +
                           std::to_string(static_cast<int>(s.kind)));
}

std::int64_t node_params(const OpSignature& s) {
  const std::int64_t k2 = static_cast<std::int64_t>(s.kernel) * s.kernel;
  switch (s.kind) {
    case OpKind::kConv1x1: return static_cast<std::int64_t>(s.in_ch) * s.out_ch;
    case OpKind::kDepthwiseConv:
    case OpKind::kDownsample: return k2 * s.out_ch;
    case OpKind::kSqueezeExcite: return 2 * static_cast<std::int64_t>(s.out_ch) *
                                        std::max(1, s.out_ch / 4);
    case OpKind::kUpsample:
    case OpKind::kAdd:
    case OpKind::kRelu: return 0;
  }
  throw UnsupportedOpError("no cost model for op kind " +
                           std::to_string(static_cast<int>(s.kind)));
}

PathCost merge_path_madds(const FeatureSpec& input, int target_resolution,
                          int target_channels, bool sdo_enabled) {
  const MergePath path =
      merge_path_ops(input, target_resolution, target_channels, sdo_enabled);
  PathCost cost;
  cost.order = path.order;
  for (const auto& op : path.ops) cost.madds += node_madds(op);
  return cost;
}

namespace {

std::string node_label(const Node& n) {
  return n.block + "/r" + std::to_string(n.repeat) + "/" + std::string(to_string(n.role));
}

CostRow overhead_row(const LatencyTable& lut) {
  CostRow row;
  row.label = "overhead";
  row.latency_ms = lut.overhead_ms();
  return row;
}

}  // namespace

CostReport graph_madds(const ResolvedGraph& graph) {
  CostReport report;
  for (const auto& n : graph.nodes) {
    CostRow row;
    row.node = n.id;
    row.label = node_label(n);
    row.sig = n.sig;
    row.madds = node_madds(n.sig);
    row.params = node_params(n.sig);
    report.madds += row.madds;
    report.params += row.params;
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::int64_t graph_params(const ResolvedGraph& graph) {
  std::int64_t total = 0;
  for (const auto& n : graph.nodes) total += node_params(n.sig);
  return total;
}

LatencyTable::LatencyTable(double constant_overhead_ms)
    : overhead_ms_(constant_overhead_ms) {
  if (!(constant_overhead_ms >= 0.0) || !std::isfinite(constant_overhead_ms)) {
    throw DomainError("latency overhead must be finite and non-negative");
  }
}

void LatencyTable::set(const OpSignature& sig, double ms) {
  if (!(ms >= 0.0) || !std::isfinite(ms)) {
    throw DomainError("latency for " + to_string(sig) + " must be finite and non-negative");
  }
  entries_[sig] = ms;
}

double LatencyTable::lookup(const OpSignature& sig) const {
  auto it = entries_.find(sig);
  if (it == entries_.end()) {
    throw LookupMissError("latency table has no entry for signature '" +
                          to_string(sig) + "'");
  }
  return it->second;
}

CostReport estimate_latency(const ResolvedGraph& graph, const LatencyTable& lut) {
  CostReport report;
  const auto live = reachable_nodes(graph);
  for (const auto& n : graph.nodes) {
    if (!live[n.id]) continue;
    CostRow row;
    row.node = n.id;
    row.label = node_label(n);
    row.sig = n.sig;
    row.latency_ms = lut.lookup(n.sig);
    report.rows.push_back(std::move(row));
  }
  report.rows.push_back(overhead_row(lut));
  for (const auto& r : report.rows) report.latency_ms += r.latency_ms;
  return report;
}

CostReport full_cost_report(const ResolvedGraph& graph, const LatencyTable& lut) {
  CostReport report = graph_madds(graph);
  const auto live = reachable_nodes(graph);
  for (auto& row : report.rows) {
    if (live[row.node]) row.latency_ms = lut.lookup(*row.sig);
  }
  report.rows.push_back(overhead_row(lut));
  for (const auto& r : report.rows) report.latency_ms += r.latency_ms;
  return report;
}

void check_latency_model(const LatencyModel& m) {
  const auto finite_nonneg = [](double x) { return std::isfinite(x) && x >= 0.0; };
  if (!finite_nonneg(m.ms_per_madd) || !finite_nonneg(m.fixed_ms) ||
      !finite_nonneg(m.noise) || !finite_nonneg(m.overhead_ms)) {
    throw ConfigError("latency model parameters must be finite and non-negative");
  }
  if (m.ms_per_madd == 0.0 && m.fixed_ms == 0.0) {
    throw ConfigError("latency model needs a positive per-MAdd or fixed cost");
  }
}

namespace {

std::uint64_t signature_hash(const OpSignature& s) {
  // FNV-1a over the fields; stable across platforms.
  std::uint64_t h = 1469598103934665603ULL;
  for (int v : {static_cast<int>(s.kind), s.in_res, s.out_res, s.in_ch, s.out_ch,
                s.kernel, s.stride}) {
    auto u = static_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) {
      h ^= (u >> (8 * b)) & 0xFFu;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

double synth_entry(const OpSignature& sig, const LatencyModel& m) {
  double ms = m.ms_per_madd * static_cast<double>(node_madds(sig)) + m.fixed_ms;
  if (m.noise > 0.0) {
    Rng rng(derive_seed(m.seed, signature_hash(sig)));
    ms *= 1.0 + m.noise * standard_normal(rng);
  }
  return std::max(0.0, ms);
}

}  // namespace

LatencyTable synth_lut(std::span<const OpSignature> signatures, const LatencyModel& model) {
  check_latency_model(model);
  LatencyTable lut(model.overhead_ms);
  for (const auto& sig : signatures) lut.set(sig, synth_entry(sig, model));
  return lut;
}

LatencyTable synth_lut(std::span<const ResolvedGraph> graphs, const LatencyModel& model) {
  std::set<OpSignature> sigs;
  for (const auto& g : graphs) {
    for (const auto& n : g.nodes) sigs.insert(n.sig);
  }
  const std::vector<OpSignature> list(sigs.begin(), sigs.end());
  return synth_lut(std::span<const OpSignature>(list), model);
}

std::vector<OpSignature> space_signatures(const SearchSpaceDef& space, int image_size) {
  check_space(space);
  std::set<OpSignature> sigs;
  std::vector<int> res;
  for (int level = kMinLevel; level <= kMaxLevel; ++level) {
    res.push_back(level_resolution(image_size, level));
  }
  for (int c : space.channel_choices) {
    const std::vector<int> widths = space.expands() ? space.expansion_choices : std::vector<int>{c};
    for (int r : res) {
      sigs.insert({OpKind::kAdd, r, r, c, c, 0, 1});  // residual / recycle
      for (int f : widths) {
        sigs.insert({OpKind::kAdd, r, r, f, f, 0, 1});
        for (int r0 : res) {
          for (bool sdo : {true, false}) {
            for (const auto& op : merge_path_ops({kMinLevel, r0, c}, r, f, sdo).ops) {
              sigs.insert(op);
            }
          }
        }
        for (int k : space.kernel_choices) {
          for (MergeOp m : space.merge_ops) {
            for (const auto& op : block_body_ops(r, f, c, k, m)) sigs.insert(op);
          }
        }
      }
    }
  }
  return {sigs.begin(), sigs.end()};
}

namespace {

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string format_lut(const LatencyTable& lut) {
  std::string out = "fpnas-lut 1\noverhead_ms " + format_double(lut.overhead_ms()) + "\n";
  for (const auto& [sig, ms] : lut.entries()) {
    out += to_string(sig) + " -> " + format_double(ms) + "\n";
  }
  return out;
}

LatencyTable parse_lut(std::istream& in) {
  std::string line;
  int lineno = 0;
  const auto fail = [&](const std::string& msg) {
    throw ParseError("lut line " + std::to_string(lineno) + ": " + msg);
  };
  const auto next = [&]() {
    while (std::getline(in, line)) {
      ++lineno;
      const auto p = line.find_first_not_of(" \t\r");
      if (p == std::string::npos || line[p] == '#') continue;
      return true;
    }
    return false;
  };

  if (!next() || line.rfind("fpnas-lut 1", 0) != 0) fail("missing 'fpnas-lut 1' header");
  if (!next()) fail("missing overhead_ms row");
  std::istringstream head(line);
  std::string key;
  double overhead = 0;
  if (!(head >> key >> overhead) || key != "overhead_ms") fail("expected 'overhead_ms <ms>'");
  LatencyTable lut(overhead);

  while (next()) {
    std::istringstream row(line);
    std::string kind, arrow;
    OpSignature sig;
    double ms = 0;
    if (!(row >> kind >> sig.in_res >> sig.out_res >> sig.in_ch >> sig.out_ch >>
          sig.kernel >> sig.stride >> arrow >> ms) ||
        arrow != "->") {
      fail("expected '<kind> <in_res> <out_res> <in_ch> <out_ch> <kernel> <stride> -> <ms>'");
    }
    std::string extra;
    if (row >> extra) fail("trailing text '" + extra + "'");
    try {
      sig.kind = parse_op_kind(kind);
    } catch (const UnsupportedOpError& e) {
      fail(e.what());
    }
    if (lut.contains(sig)) fail("duplicate signature " + to_string(sig));
    lut.set(sig, ms);
  }
  return lut;
}

LatencyTable load_lut(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open latency table '" + path + "'");
  return parse_lut(in);
}

void save_lut(const std::string& path, const LatencyTable& lut) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write latency table '" + path + "'");
  out << format_lut(lut);
}

std::string format_cost_report(const CostReport& report) {
  std::ostringstream out;
  out << "node\tlabel\tsignature\tmadds\tparams\tlatency_ms\n";
  for (const auto& r : report.rows) {
    out << r.node << '\t' << r.label << '\t' << (r.sig ? to_string(*r.sig) : "-") << '\t'
        << r.madds << '\t' << r.params << '\t' << format_double(r.latency_ms) << '\n';
  }
  out << "TOTAL\t-\t-\t" << report.madds << '\t' << report.params << '\t'
      << format_double(report.latency_ms) << '\n';
  return out.str();
}

}  // namespace fpnas
