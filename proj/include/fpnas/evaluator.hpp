#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "fpnas/graph.hpp"
#include "fpnas/spaces.hpp"

namespace fpnas {

enum class EvalStatus { kOk, kFailed };

struct Evaluation {
  double quality = 0.0;
  double latency_ms = 0.0;
  EvalStatus status = EvalStatus::kOk;
  std::string message;

  bool ok() const { return status == EvalStatus::kOk; }

  static Evaluation failed(std::string why, double latency_ms = 0.0) {
    return {0.0, latency_ms, EvalStatus::kFailed, std::move(why)};
  }
};

struct EvalRequest {
  std::string id;
  const Genome& genome;
  const ResolvedGraph& graph;
  double latency_ms = 0.0;
};

// Quality oracle for candidates. Implementations must be safe to call
// concurrently from several threads with distinct request ids.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual Evaluation evaluate(const EvalRequest& request) const = 0;
  virtual std::string describe() const = 0;
};

// Deterministic synthetic quality:
//   base + agreement_weight * (weighted token agreement with the planted genome)
//        + madds_weight * (1 - exp(-MAdds / madds_scale))
//        - block_penalty * max(0, blocks per cell - block_allowance)
//        + resolution_weight * (share of blocks at preferred_level)
// clamped to [0, 1]. Slot weights are positive, drawn from `seed`, and sum
// to one.
struct SurrogateSpec {
  std::uint64_t seed = 0;
  std::optional<Genome> planted;
  double base = 0.05;
  double agreement_weight = 0.6;
  double madds_weight = 0.15;
  double madds_scale = 5e8;
  double block_penalty = 0.02;
  int block_allowance = 3;
  double resolution_weight = 0.1;
  int preferred_level = 4;
};

// Requires spec.planted. Pure.
Evaluation surrogate_evaluate(const ResolvedGraph& graph, const Genome& genome,
                              const SurrogateSpec& spec);

class SurrogateEvaluator : public Evaluator {
 public:
  // Plants sample_uniform(space, derive_seed(spec.seed, 1)) when the spec
  // carries no planted genome.
  SurrogateEvaluator(const SearchSpaceDef& space, SurrogateSpec spec);

  Evaluation evaluate(const EvalRequest& request) const override;
  std::string describe() const override;
  const SurrogateSpec& spec() const { return spec_; }

 private:
  SurrogateSpec spec_;
};

// File exchange with an external trainer. For candidate <id> the evaluator
// writes <dir>/<id>.request (JSON: candidate, genome, latency_ms, graph) and
// waits for <dir>/<id>.response:
//   candidate <id>
//   quality <q in [0,1]>
//   status ok | status failed <message>
// Responders should write to a temporary name and rename into place.
struct ExchangeConfig {
  std::filesystem::path directory;
  std::chrono::milliseconds timeout{std::chrono::seconds(3600)};
  std::chrono::milliseconds poll_interval{100};
};

std::string format_request(const EvalRequest& request);
Evaluation parse_response(std::string_view text, const std::string& expected_id);

Evaluation external_evaluate(const EvalRequest& request, const ExchangeConfig& config);

class ExternalEvaluator : public Evaluator {
 public:
  explicit ExternalEvaluator(ExchangeConfig config);

  Evaluation evaluate(const EvalRequest& request) const override;
  std::string describe() const override;

 private:
  ExchangeConfig config_;
};

}  // namespace fpnas
