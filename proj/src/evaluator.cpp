#include "fpnas/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fpnas/cost.hpp"
#include "fpnas/errors.hpp"
#include "fpnas/rng.hpp"

namespace fpnas {

namespace fs = std::filesystem;
using nlohmann::json;

Evaluation surrogate_evaluate(const ResolvedGraph& graph, const Genome& genome,
                              const SurrogateSpec& spec) {
  if (!spec.planted) throw ConfigError("surrogate spec has no planted genome");
  const auto& target = spec.planted->tokens;
  if (target.size() != genome.tokens.size()) {
    throw ConfigError("planted genome length does not match candidate");
  }

  Rng rng(derive_seed(spec.seed, 2));
  double matched = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double w = 0.5 + uniform01(rng);
    total += w;
    matched += genome.tokens[i] == target[i] ? w : 0.0;
  }
  const double agreement = total > 0.0 ? matched / total : 1.0;

  std::int64_t madds = 0;
  int depthwise = 0;
  int preferred = 0;
  const int preferred_res =
      graph.inputs.at(std::clamp(spec.preferred_level, kMinLevel, kMaxLevel) - kMinLevel)
          .resolution;
  for (const auto& n : graph.nodes) {
    madds += node_madds(n.sig);
    if (n.sig.kind == OpKind::kDepthwiseConv) {
      ++depthwise;
      if (n.sig.out_res == preferred_res) ++preferred;
    }
  }
  const double blocks_per_cell =
      static_cast<double>(depthwise) / std::max(1, graph.repeats) - kNumOutputs;
  const double overcapacity = std::max(0.0, blocks_per_cell - spec.block_allowance);
  const double preferred_share =
      depthwise > 0 ? static_cast<double>(preferred) / depthwise : 0.0;
  const double capacity =
      spec.madds_scale > 0.0 ? 1.0 - std::exp(-static_cast<double>(madds) / spec.madds_scale)
                             : 0.0;

  double q = spec.base + spec.agreement_weight * agreement + spec.madds_weight * capacity -
             spec.block_penalty * overcapacity + spec.resolution_weight * preferred_share;
  if (!std::isfinite(q)) return Evaluation::failed("surrogate produced a non-finite score");
  q = std::clamp(q, 0.0, 1.0);
  return {q, 0.0, EvalStatus::kOk, {}};
}

SurrogateEvaluator::SurrogateEvaluator(const SearchSpaceDef& space, SurrogateSpec spec)
    : spec_(std::move(spec)) {
  if (!spec_.planted) spec_.planted = sample_uniform(space, derive_seed(spec_.seed, 1));
  check_genome(*spec_.planted, token_schema(space));
  for (double w : {spec_.base, spec_.agreement_weight, spec_.madds_weight, spec_.madds_scale,
                   spec_.block_penalty, spec_.resolution_weight}) {
    if (!std::isfinite(w)) throw ConfigError("surrogate weights must be finite");
  }
}

Evaluation SurrogateEvaluator::evaluate(const EvalRequest& request) const {
  Evaluation e = surrogate_evaluate(request.graph, request.genome, spec_);
  e.latency_ms = request.latency_ms;
  return e;
}

std::string SurrogateEvaluator::describe() const {
  return "surrogate(seed=" + std::to_string(spec_.seed) + ")";
}

std::string format_request(const EvalRequest& request) {
  json j;
  j["candidate"] = request.id;
  j["genome"] = request.genome.tokens;
  j["latency_ms"] = request.latency_ms;
  j["graph"] = json::parse(export_graph(request.graph));
  return j.dump(1) + "\n";
}

Evaluation parse_response(std::string_view text, const std::string& expected_id) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::optional<std::string> id;
  std::optional<double> quality;
  std::optional<std::string> status;
  std::string message;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream row(line);
    std::string key;
    row >> key;
    if (key == "candidate") {
      std::string v;
      row >> v;
      id = v;
    } else if (key == "quality") {
      std::string v;
      row >> v;
      try {
        std::size_t used = 0;
        quality = std::stod(v, &used);
        if (used != v.size()) quality.reset();
      } catch (const std::exception&) {
      }
      if (!quality) {
        return Evaluation::failed("response parse error: line " + std::to_string(lineno) +
                                  ": bad quality '" + v + "'");
      }
    } else if (key == "status") {
      std::string v;
      row >> v;
      status = v;
      std::getline(row >> std::ws, message);
    } else {
      return Evaluation::failed("response parse error: line " + std::to_string(lineno) +
                                ": unknown key '" + key + "'");
    }
  }
  if (!id) return Evaluation::failed("response parse error: missing candidate line");
  if (*id != expected_id) {
    return Evaluation::failed("response parse error: candidate '" + *id + "', expected '" +
                              expected_id + "'");
  }
  if (!status) return Evaluation::failed("response parse error: missing status line");
  if (*status == "failed") {
    return Evaluation::failed(message.empty() ? "trainer reported failure" : message);
  }
  if (*status != "ok") {
    return Evaluation::failed("response parse error: unknown status '" + *status + "'");
  }
  if (!quality) return Evaluation::failed("response parse error: missing quality line");
  if (!std::isfinite(*quality) || *quality < 0.0 || *quality > 1.0) {
    std::ostringstream msg;
    msg << "quality " << *quality << " outside [0, 1]";
    return Evaluation::failed(msg.str());
  }
  return {*quality, 0.0, EvalStatus::kOk, {}};
}

namespace {

void write_atomically(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
    out << content;
  }
  fs::rename(tmp, path);
}

}  // namespace

Evaluation external_evaluate(const EvalRequest& request, const ExchangeConfig& config) {
  using Clock = std::chrono::steady_clock;
  const fs::path request_path = config.directory / (request.id + ".request");
  const fs::path response_path = config.directory / (request.id + ".response");

  Evaluation result;
  if (!fs::exists(response_path)) {
    write_atomically(request_path, format_request(request));
    const auto deadline = Clock::now() + config.timeout;
    while (!fs::exists(response_path)) {
      if (Clock::now() >= deadline) {
        return Evaluation::failed(
            "timeout after " + std::to_string(config.timeout.count()) + " ms waiting for " +
                response_path.filename().string(),
            request.latency_ms);
      }
      std::this_thread::sleep_for(config.poll_interval);
    }
  }
  std::ifstream in(response_path);
  std::stringstream ss;
  ss << in.rdbuf();
  result = parse_response(ss.str(), request.id);
  result.latency_ms = request.latency_ms;
  return result;
}

ExternalEvaluator::ExternalEvaluator(ExchangeConfig config) : config_(std::move(config)) {
  std::error_code ec;
  fs::create_directories(config_.directory, ec);
  if (!fs::is_directory(config_.directory)) {
    throw ConfigError("exchange directory '" + config_.directory.string() + "' unusable");
  }
}

Evaluation ExternalEvaluator::evaluate(const EvalRequest& request) const {
  return external_evaluate(request, config_);
}

std::string ExternalEvaluator::describe() const {
  return "external(dir=" + config_.directory.string() + ")";
}

}  // namespace fpnas
