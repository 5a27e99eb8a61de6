#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpnas/controller.hpp"
#include "fpnas/cost.hpp"
#include "fpnas/evaluator.hpp"
#include "fpnas/spaces.hpp"

namespace fpnas {

struct RewardConfig {
  double w = -0.3;
};

// quality * latency_ms^w. Throws DomainError for latency_ms <= 0 or w > 0.
double reward(double quality, double latency_ms, const RewardConfig& config);

enum class CandidateStatus { kOk, kFailed };

struct Candidate {
  Genome genome;
  double quality = 0.0;
  double latency_ms = 0.0;
  double reward = 0.0;
  int step = 0;
  int repeats = 1;
  std::uint64_t seed = 0;
  CandidateStatus status = CandidateStatus::kOk;
  std::string message;

  bool ok() const { return status == CandidateStatus::kOk; }
  bool operator==(const Candidate&) const = default;
};

// Non-dominated candidates, ascending latency (and strictly ascending
// quality along the list).
struct Frontier {
  std::vector<Candidate> members;
};

// Failed candidates are ignored. A candidate is dropped if another has
// latency <= and quality >= with one strict; exact (latency, quality) ties
// keep the earliest candidate.
Frontier pareto_frontier(std::span<const Candidate> candidates);

// Per target: the best-quality member with latency <= target, if any.
std::vector<std::optional<Candidate>> select_at_latency(const Frontier& frontier,
                                                        std::span<const double> targets);

struct SearchConfig {
  SearchSpaceDef space;
  int budget = 100;
  ControllerKind controller = ControllerKind::kPolicyGradient;
  int batch_size = 20;
  PolicyParams policy;
  EvolutionParams evolution;
  std::uint64_t seed = 0;
  RewardConfig reward;
  PlanParams plan;
  int parallelism = 1;
  // Empty: history is kept in memory only. Otherwise records are appended
  // and an existing file is resumed from.
  std::string history_path;
  // Stop after this many new evaluations (0 = no limit). The run can be
  // resumed later from the history file.
  int max_new_evaluations = 0;
  // Prefix of candidate ids handed to the evaluator.
  std::string id_prefix = "cand";
};

void check_search_config(const SearchConfig& config);

std::unique_ptr<Controller> make_controller(const SearchConfig& config,
                                            const TokenSchema& schema);

struct SearchResult {
  std::vector<Candidate> history;  // ordered by step
  Frontier frontier;
  int new_evaluations = 0;
  bool complete = false;
};

// Throws LookupMissError when a candidate's graph has an op missing from the
// table; evaluator failures are recorded as failed candidates instead.
SearchResult run_search(const SearchConfig& config, const Evaluator& evaluator,
                        const LatencyTable& lut);

// Re-costs and re-evaluates one candidate at a different repeat count.
Candidate evaluate_candidate(const Genome& genome, const SearchSpaceDef& space,
                             const PlanParams& plan, const Evaluator& evaluator,
                             const LatencyTable& lut, const RewardConfig& reward_config,
                             const std::string& id);

struct SweepResult {
  std::vector<Candidate> candidates;  // base-major, repeats-minor
  Frontier frontier;
};

SweepResult sweep_repeats(std::span<const Candidate> base, std::span<const int> repeats_list,
                          const SearchSpaceDef& space, int image_size,
                          const Evaluator& evaluator, const LatencyTable& lut,
                          const RewardConfig& reward_config);

// History file: one JSON object per line with keys genome, latency_ms,
// message, quality, repeats, reward, seed, status, step. Failed records carry
// null quality and reward.
std::string format_history_record(const Candidate& c);
Candidate parse_history_record(std::string_view line);

struct HistoryLoad {
  std::vector<Candidate> records;
  std::uintmax_t valid_bytes = 0;  // length of the well-formed prefix
  bool truncated_tail = false;     // a partial last line was found
};

// A final line without a trailing newline is an interrupted append: it is
// excluded and reported via truncated_tail. Any other malformed line is a
// ParseError.
HistoryLoad load_history(const std::string& path);
std::vector<Candidate> read_history(const std::string& path);

// Tab-separated: latency_ms, quality, reward, step.
std::string format_frontier_table(const Frontier& frontier);

}  // namespace fpnas
