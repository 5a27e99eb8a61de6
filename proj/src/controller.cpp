#include "fpnas/controller.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fpnas/errors.hpp"

namespace fpnas {

std::string_view to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kPolicyGradient: return "policy-gradient";
    case ControllerKind::kRandom: return "random";
    case ControllerKind::kEvolution: return "evolution";
  }
  return "?";
}

ControllerKind parse_controller_kind(std::string_view s) {
  if (s == "policy-gradient" || s == "pg") return ControllerKind::kPolicyGradient;
  if (s == "random") return ControllerKind::kRandom;
  if (s == "evolution") return ControllerKind::kEvolution;
  throw ConfigError("unknown controller '" + std::string(s) + "'");
}

namespace {

void check_counts(const std::vector<int>& counts) {
  for (int c : counts) {
    if (c < 1) throw ConfigError("slot choice counts must be positive");
  }
}

void check_rewards(std::span<const ScoredGenome> batch) {
  for (const auto& s : batch) {
    if (!std::isfinite(s.reward)) throw DomainError("non-finite reward; batch rejected");
  }
}

Genome random_genome(const std::vector<int>& counts, Rng& rng) {
  Genome g;
  g.tokens.reserve(counts.size());
  for (int c : counts) g.tokens.push_back(static_cast<int>(uniform_index(rng, c)));
  return g;
}

}  // namespace

RandomController::RandomController(std::vector<int> choice_counts)
    : counts_(std::move(choice_counts)) {
  check_counts(counts_);
}

std::vector<Genome> RandomController::propose(int count, Rng& rng) {
  std::vector<Genome> out;
  for (int i = 0; i < count; ++i) out.push_back(random_genome(counts_, rng));
  return out;
}

void RandomController::update(std::span<const ScoredGenome> batch) { check_rewards(batch); }

EvolutionController::EvolutionController(std::vector<int> choice_counts, EvolutionParams params)
    : counts_(std::move(choice_counts)), params_(params) {
  check_counts(counts_);
  if (params_.population < 1 || params_.tournament < 1) {
    throw ConfigError("evolution population and tournament must be positive");
  }
}

std::vector<Genome> EvolutionController::propose(int count, Rng& rng) {
  std::vector<Genome> out;
  for (int i = 0; i < count; ++i) {
    if (static_cast<int>(population_.size()) < params_.population) {
      out.push_back(random_genome(counts_, rng));
      continue;
    }
    const ScoredGenome* parent = nullptr;
    for (int t = 0; t < params_.tournament; ++t) {
      const auto& cand = population_[uniform_index(rng, population_.size())];
      if (!parent || cand.reward > parent->reward) parent = &cand;
    }
    Genome child = parent->genome;
    std::vector<std::size_t> mutable_slots;
    for (std::size_t s = 0; s < counts_.size(); ++s) {
      if (counts_[s] > 1) mutable_slots.push_back(s);
    }
    if (!mutable_slots.empty()) {
      const std::size_t s = mutable_slots[uniform_index(rng, mutable_slots.size())];
      // Shift by 1..count-1 so the value always changes.
      const int shift = 1 + static_cast<int>(uniform_index(rng, counts_[s] - 1));
      child.tokens[s] = (child.tokens[s] + shift) % counts_[s];
    }
    out.push_back(std::move(child));
  }
  return out;
}

void EvolutionController::update(std::span<const ScoredGenome> batch) {
  check_rewards(batch);
  for (const auto& s : batch) {
    population_.push_back(s);
    while (static_cast<int>(population_.size()) > params_.population) population_.pop_front();
  }
}

PolicyGradientController::PolicyGradientController(std::vector<int> choice_counts,
                                                   PolicyParams params)
    : params_(params) {
  check_counts(choice_counts);
  if (!(params_.learning_rate >= 0.0) || !(params_.clip > 0.0) || params_.epochs < 1 ||
      !(params_.baseline_decay >= 0.0 && params_.baseline_decay < 1.0) ||
      !(params_.entropy_weight >= 0.0)) {
    throw ConfigError("invalid policy-gradient parameters");
  }
  for (int c : choice_counts) logits_.emplace_back(c, 0.0);
}

namespace {

std::vector<double> softmax(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) sum += p[i] = std::exp(z[i] - m);
  for (auto& x : p) x /= sum;
  return p;
}

}  // namespace

std::vector<double> PolicyGradientController::probabilities(std::size_t slot) const {
  return softmax(logits_.at(slot));
}

double PolicyGradientController::log_probability(const Genome& genome) const {
  double lp = 0.0;
  for (std::size_t s = 0; s < logits_.size(); ++s) {
    lp += std::log(probabilities(s).at(genome.tokens.at(s)));
  }
  return lp;
}

std::vector<Genome> PolicyGradientController::propose(int count, Rng& rng) {
  std::vector<std::vector<double>> probs;
  for (std::size_t s = 0; s < logits_.size(); ++s) probs.push_back(probabilities(s));
  std::vector<Genome> out;
  for (int i = 0; i < count; ++i) {
    Genome g;
    for (const auto& p : probs) {
      const double u = uniform01(rng);
      double acc = 0.0;
      int pick = static_cast<int>(p.size()) - 1;
      for (std::size_t k = 0; k < p.size(); ++k) {
        acc += p[k];
        if (u < acc) {
          pick = static_cast<int>(k);
          break;
        }
      }
      g.tokens.push_back(pick);
    }
    out.push_back(std::move(g));
  }
  return out;
}

void PolicyGradientController::update(std::span<const ScoredGenome> batch) {
  check_rewards(batch);
  if (batch.empty()) return;
  for (const auto& s : batch) {
    if (s.genome.tokens.size() != logits_.size()) {
      throw DomainError("genome length does not match the policy");
    }
  }

  const double n = static_cast<double>(batch.size());
  double mean_sq = 0.0;
  std::vector<double> adv;
  for (const auto& s : batch) {
    adv.push_back(s.reward - baseline_);
    mean_sq += adv.back() * adv.back() / n;
  }
  const double d = params_.baseline_decay;
  scale_sq_ = scale_init_ ? d * scale_sq_ + (1.0 - d) * mean_sq : mean_sq;
  scale_init_ = true;
  const double scale = std::sqrt(scale_sq_);
  if (scale > 1e-12) {
    for (auto& a : adv) a /= scale;
  }
  double mean_reward = 0.0;
  for (const auto& s : batch) mean_reward += s.reward / n;
  baseline_ = d * baseline_ + (1.0 - d) * mean_reward;

  std::vector<double> old_logp;
  for (const auto& s : batch) old_logp.push_back(log_probability(s.genome));

  const double lo = 1.0 - params_.clip;
  const double hi = 1.0 + params_.clip;
  for (int epoch = 0; epoch < params_.epochs; ++epoch) {
    std::vector<std::vector<double>> probs;
    for (std::size_t s = 0; s < logits_.size(); ++s) probs.push_back(probabilities(s));

    std::vector<std::vector<double>> grad;
    for (const auto& z : logits_) grad.emplace_back(z.size(), 0.0);

    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Genome& g = batch[i].genome;
      double logp = 0.0;
      for (std::size_t s = 0; s < probs.size(); ++s) logp += std::log(probs[s][g.tokens[s]]);
      const double ratio = std::exp(logp - old_logp[i]);
      const double a = adv[i];
      // The clipped branch is the minimum (and has zero gradient) once the
      // ratio has moved past the trust region in the advantage's direction.
      if ((a > 0.0 && ratio > hi) || (a < 0.0 && ratio < lo)) continue;
      const double coef = a * ratio / n;
      for (std::size_t s = 0; s < probs.size(); ++s) {
        for (std::size_t k = 0; k < probs[s].size(); ++k) {
          const double onehot = static_cast<int>(k) == g.tokens[s] ? 1.0 : 0.0;
          grad[s][k] += coef * (onehot - probs[s][k]);
        }
      }
    }
    if (params_.entropy_weight > 0.0) {
      for (std::size_t s = 0; s < probs.size(); ++s) {
        double h = 0.0;
        for (double p : probs[s]) {
          if (p > 0.0) h -= p * std::log(p);
        }
        for (std::size_t k = 0; k < probs[s].size(); ++k) {
          const double p = probs[s][k];
          if (p > 0.0) grad[s][k] -= params_.entropy_weight * p * (std::log(p) + h);
        }
      }
    }
    for (std::size_t s = 0; s < logits_.size(); ++s) {
      for (std::size_t k = 0; k < logits_[s].size(); ++k) {
        logits_[s][k] += params_.learning_rate * grad[s][k];
      }
    }
  }
}

}  // namespace fpnas
