#include <sstream>

#include <json.hpp>

#include "fpnas/errors.hpp"
#include "fpnas/graph.hpp"

namespace fpnas {

using nlohmann::json;

namespace {

constexpr int kGraphFormatVersion = 1;

std::string ref_name(const ResolvedGraph& g, const ValueRef& v) {
  if (v.graph_input) return "in" + std::to_string(g.inputs.at(v.index).level);
  return "n" + std::to_string(v.index);
}

ValueRef parse_ref(const ResolvedGraph& g, const std::string& s) {
  try {
    if (s.rfind("in", 0) == 0) {
      const int level = std::stoi(s.substr(2));
      for (int i = 0; i < static_cast<int>(g.inputs.size()); ++i) {
        if (g.inputs[i].level == level) return ValueRef::input(i);
      }
    } else if (s.rfind("n", 0) == 0) {
      return ValueRef::node(std::stoi(s.substr(1)));
    }
  } catch (const std::exception&) {
  }
  throw ParseError("bad value reference '" + s + "'");
}

}  // namespace

std::string export_graph(const ResolvedGraph& graph) {
  json j;
  j["format"] = "fpnas-graph";
  j["version"] = kGraphFormatVersion;
  j["repeats"] = graph.repeats;

  json inputs = json::array();
  for (const auto& in : graph.inputs) {
    inputs.push_back({{"level", in.level}, {"resolution", in.resolution},
                      {"channels", in.channels}});
  }
  j["inputs"] = inputs;

  json nodes = json::array();
  for (const auto& n : graph.nodes) {
    json refs = json::array();
    for (const auto& v : n.inputs) refs.push_back(ref_name(graph, v));
    nodes.push_back({{"id", n.id},
                     {"kind", std::string(to_string(n.sig.kind))},
                     {"in_res", n.sig.in_res},
                     {"out_res", n.sig.out_res},
                     {"in_ch", n.sig.in_ch},
                     {"out_ch", n.sig.out_ch},
                     {"kernel", n.sig.kernel},
                     {"stride", n.sig.stride},
                     {"inputs", refs},
                     {"role", std::string(to_string(n.role))},
                     {"repeat", n.repeat},
                     {"block", n.block}});
  }
  j["nodes"] = nodes;

  json edges = json::array();
  for (const auto& e : graph.edges()) {
    edges.push_back({{"from", ref_name(graph, e.from)}, {"to", "n" + std::to_string(e.to)}});
  }
  j["edges"] = edges;

  json outputs = json::array();
  for (const auto& o : graph.outputs) outputs.push_back(ref_name(graph, o));
  j["outputs"] = outputs;
  return j.dump(1) + "\n";
}

ResolvedGraph parse_graph(std::string_view text) {
  ResolvedGraph g;
  try {
    const json j = json::parse(text);
    if (j.at("format") != "fpnas-graph" || j.at("version") != kGraphFormatVersion) {
      throw ParseError("not an fpnas-graph v1 document");
    }
    g.repeats = j.at("repeats").get<int>();
    for (const auto& in : j.at("inputs")) {
      g.inputs.push_back({in.at("level").get<int>(), in.at("resolution").get<int>(),
                          in.at("channels").get<int>()});
    }
    for (const auto& jn : j.at("nodes")) {
      Node n;
      n.id = jn.at("id").get<int>();
      n.sig.kind = parse_op_kind(jn.at("kind").get<std::string>());
      n.sig.in_res = jn.at("in_res").get<int>();
      n.sig.out_res = jn.at("out_res").get<int>();
      n.sig.in_ch = jn.at("in_ch").get<int>();
      n.sig.out_ch = jn.at("out_ch").get<int>();
      n.sig.kernel = jn.at("kernel").get<int>();
      n.sig.stride = jn.at("stride").get<int>();
      for (const auto& r : jn.at("inputs")) n.inputs.push_back(parse_ref(g, r.get<std::string>()));
      n.role = parse_node_role(jn.at("role").get<std::string>());
      n.repeat = jn.at("repeat").get<int>();
      n.block = jn.at("block").get<std::string>();
      g.nodes.push_back(std::move(n));
    }
    const auto& outs = j.at("outputs");
    if (outs.size() != kNumOutputs) throw ParseError("graph must have 4 outputs");
    for (int i = 0; i < kNumOutputs; ++i) g.outputs[i] = parse_ref(g, outs[i].get<std::string>());

    // The edge list is redundant with node inputs; reject documents where
    // the two disagree.
    std::vector<Edge> listed;
    for (const auto& e : j.at("edges")) {
      const ValueRef to = parse_ref(g, e.at("to").get<std::string>());
      if (to.graph_input) throw ParseError("edge into a graph input");
      listed.push_back({parse_ref(g, e.at("from").get<std::string>()), to.index});
    }
    if (listed != g.edges()) throw ParseError("edge list disagrees with node inputs");
  } catch (const json::exception& e) {
    throw ParseError(std::string("graph document: ") + e.what());
  }
  return g;
}

std::string export_dot(const ResolvedGraph& graph) {
  std::ostringstream out;
  out << "digraph head {\n  rankdir=TB;\n  node [fontname=\"Helvetica\"];\n";
  for (const auto& in : graph.inputs) {
    out << "  in" << in.level << " [shape=box, style=rounded, label=\"C" << in.level
        << "\\n" << in.resolution << "x" << in.resolution << "x" << in.channels << "\"];\n";
  }
  for (const auto& n : graph.nodes) {
    out << "  n" << n.id << " [label=\"" << to_string(n.sig.kind);
    if (n.sig.kernel > 1) out << " k" << n.sig.kernel;
    if (n.sig.stride > 1) out << " s" << n.sig.stride;
    out << "\\n" << n.sig.out_res << "x" << n.sig.out_res << "x" << n.sig.out_ch << "\\n"
        << n.block << "/r" << n.repeat << "\"";
    if (n.role == NodeRole::kResidual || n.role == NodeRole::kRecycle) out << ", shape=circle";
    out << "];\n";
  }
  for (const auto& n : graph.nodes) {
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      out << "  " << ref_name(graph, n.inputs[k]) << " -> n" << n.id;
      if (n.role == NodeRole::kResidual && k == 0) out << " [style=dashed]";
      out << ";\n";
    }
  }
  for (int i = 0; i < kNumOutputs; ++i) {
    out << "  out" << graph.inputs[i].level << " [shape=box, style=rounded, label=\"P"
        << graph.inputs[i].level << "\"];\n";
    out << "  " << ref_name(graph, graph.outputs[i]) << " -> out" << graph.inputs[i].level
        << ";\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace fpnas
