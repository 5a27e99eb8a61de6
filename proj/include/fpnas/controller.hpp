#pragma once

#include <deque>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "fpnas/rng.hpp"
#include "fpnas/spaces.hpp"

namespace fpnas {

enum class ControllerKind { kPolicyGradient, kRandom, kEvolution };

std::string_view to_string(ControllerKind kind);
ControllerKind parse_controller_kind(std::string_view s);

struct ScoredGenome {
  Genome genome;
  double reward = 0.0;
};

// Proposes genomes and learns from their rewards. Owned by a single
// sequential loop; not thread-safe.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::vector<Genome> propose(int count, Rng& rng) = 0;
  // Throws DomainError (and leaves state untouched) on non-finite rewards.
  virtual void update(std::span<const ScoredGenome> batch) = 0;
};

class RandomController : public Controller {
 public:
  explicit RandomController(std::vector<int> choice_counts);

  std::vector<Genome> propose(int count, Rng& rng) override;
  void update(std::span<const ScoredGenome> batch) override;

 private:
  std::vector<int> counts_;
};

// Aging evolution: tournament selection over a sliding population, one-slot
// mutation, oldest member retired.
struct EvolutionParams {
  int population = 32;
  int tournament = 8;
};

class EvolutionController : public Controller {
 public:
  EvolutionController(std::vector<int> choice_counts, EvolutionParams params);

  std::vector<Genome> propose(int count, Rng& rng) override;
  void update(std::span<const ScoredGenome> batch) override;

 private:
  std::vector<int> counts_;
  EvolutionParams params_;
  std::deque<ScoredGenome> population_;
};

struct PolicyParams {
  double learning_rate = 0.1;
  double entropy_weight = 1e-3;
  double clip = 0.2;
  int epochs = 4;
  double baseline_decay = 0.9;
};

// Independent categorical distribution per slot, parameterized by logits.
// An update runs `epochs` full-batch gradient-ascent steps on
//   mean_i min(rho_i A_i, clip(rho_i, 1 - eps, 1 + eps) A_i) + beta * sum_s H_s
// where rho_i is the joint probability ratio of genome i against the policy
// that sampled it, A_i = (r_i - b) / s with b a moving-average reward
// baseline (starting at 0) and s a moving RMS of (r - b).
class PolicyGradientController : public Controller {
 public:
  PolicyGradientController(std::vector<int> choice_counts, PolicyParams params);

  std::vector<Genome> propose(int count, Rng& rng) override;
  void update(std::span<const ScoredGenome> batch) override;

  std::vector<double> probabilities(std::size_t slot) const;
  double log_probability(const Genome& genome) const;
  const std::vector<std::vector<double>>& logits() const { return logits_; }
  double baseline() const { return baseline_; }

 private:
  std::vector<std::vector<double>> logits_;
  PolicyParams params_;
  double baseline_ = 0.0;
  double scale_sq_ = 0.0;
  bool scale_init_ = false;
};

}  // namespace fpnas
