#include "fpnas/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fpnas/errors.hpp"

namespace fpnas {

namespace fs = std::filesystem;
using nlohmann::json;

double reward(double quality, double latency_ms, const RewardConfig& config) {
  if (!(latency_ms > 0.0)) throw DomainError("latency must be positive for the reward");
  if (config.w > 0.0) throw DomainError("reward exponent w must be <= 0");
  return quality * std::pow(latency_ms, config.w);
}

Frontier pareto_frontier(std::span<const Candidate> candidates) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].ok()) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = candidates[a];
    const auto& y = candidates[b];
    if (x.latency_ms != y.latency_ms) return x.latency_ms < y.latency_ms;
    return x.quality > y.quality;
  });
  Frontier f;
  for (std::size_t i : order) {
    const auto& c = candidates[i];
    if (f.members.empty() || c.quality > f.members.back().quality) f.members.push_back(c);
  }
  return f;
}

std::vector<std::optional<Candidate>> select_at_latency(const Frontier& frontier,
                                                        std::span<const double> targets) {
  std::vector<std::optional<Candidate>> out;
  for (double t : targets) {
    std::optional<Candidate> best;
    // Quality increases along the frontier, so the last feasible member wins.
    for (const auto& m : frontier.members) {
      if (m.latency_ms <= t) best = m;
    }
    out.push_back(best);
  }
  return out;
}

void check_search_config(const SearchConfig& c) {
  check_space(c.space);
  if (c.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (c.budget < c.batch_size) throw ConfigError("budget must be >= batch size");
  if (c.parallelism < 1) throw ConfigError("parallelism must be >= 1");
  if (c.plan.repeats < 1) throw ConfigError("repeats must be >= 1");
  if (c.max_new_evaluations < 0) throw ConfigError("max_new_evaluations must be >= 0");
  if (!(c.reward.w <= 0.0)) throw ConfigError("reward exponent w must be <= 0");
  for (int level = kMinLevel; level <= kMaxLevel; ++level) {
    level_resolution(c.plan.image_size, level);
  }
}

std::unique_ptr<Controller> make_controller(const SearchConfig& config,
                                            const TokenSchema& schema) {
  auto counts = schema.choice_counts();
  switch (config.controller) {
    case ControllerKind::kPolicyGradient:
      return std::make_unique<PolicyGradientController>(std::move(counts), config.policy);
    case ControllerKind::kRandom:
      return std::make_unique<RandomController>(std::move(counts));
    case ControllerKind::kEvolution:
      return std::make_unique<EvolutionController>(std::move(counts), config.evolution);
  }
  throw ConfigError("unknown controller kind");
}

Candidate evaluate_candidate(const Genome& genome, const SearchSpaceDef& space,
                             const PlanParams& plan, const Evaluator& evaluator,
                             const LatencyTable& lut, const RewardConfig& reward_config,
                             const std::string& id) {
  Candidate c;
  c.genome = genome;
  c.repeats = plan.repeats;
  const ResolvedGraph graph = build_graph(genome, space, plan);
  c.latency_ms = estimate_latency(graph, lut).latency_ms;  // LUT misses propagate

  Evaluation e;
  try {
    e = evaluator.evaluate({id, genome, graph, c.latency_ms});
  } catch (const std::exception& ex) {
    e = Evaluation::failed(std::string("evaluator error: ") + ex.what());
  }
  if (e.ok() && !(std::isfinite(e.quality) && e.quality >= 0.0 && e.quality <= 1.0)) {
    e = Evaluation::failed("evaluator returned quality outside [0, 1]");
  }
  if (e.ok() && !(c.latency_ms > 0.0)) e = Evaluation::failed("non-positive latency");

  if (e.ok()) {
    c.quality = e.quality;
    c.reward = reward(e.quality, c.latency_ms, reward_config);
  } else {
    c.status = CandidateStatus::kFailed;
    c.message = e.message;
  }
  return c;
}

namespace {

class HistoryWriter {
 public:
  HistoryWriter() = default;
  HistoryWriter(const std::string& path, std::uintmax_t keep_bytes) {
    if (path.empty()) return;
    if (fs::exists(path)) fs::resize_file(path, keep_bytes);
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw ConfigError("cannot open history file '" + path + "'");
  }

  void append(const Candidate& c) {
    if (!out_.is_open()) return;
    out_ << format_history_record(c) << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace

SearchResult run_search(const SearchConfig& config, const Evaluator& evaluator,
                        const LatencyTable& lut) {
  check_search_config(config);
  const TokenSchema schema = token_schema(config.space);
  auto controller = make_controller(config, schema);
  Rng rng(config.seed);

  std::map<int, Candidate> recorded;
  std::uintmax_t keep_bytes = 0;
  if (!config.history_path.empty() && fs::exists(config.history_path)) {
    HistoryLoad loaded = load_history(config.history_path);
    keep_bytes = loaded.valid_bytes;
    for (auto& c : loaded.records) {
      const int step = c.step;
      if (!recorded.emplace(step, std::move(c)).second) {
        throw ParseError("history has duplicate step " + std::to_string(step));
      }
    }
  }
  HistoryWriter writer(config.history_path, keep_bytes);

  SearchResult result;
  const auto evaluate_step = [&](const Genome& g, int step) {
    Candidate c = evaluate_candidate(g, config.space, config.plan, evaluator, lut,
                                     config.reward, config.id_prefix + std::to_string(step));
    c.step = step;
    c.seed = config.seed;
    return c;
  };

  for (int start = 0; start < config.budget; start += config.batch_size) {
    const int n = std::min(config.batch_size, config.budget - start);
    const std::vector<Genome> proposals = controller->propose(n, rng);

    std::vector<std::optional<Candidate>> batch(n);
    std::vector<int> pending;
    for (int i = 0; i < n; ++i) {
      const int step = start + i;
      auto it = recorded.find(step);
      if (it == recorded.end()) {
        pending.push_back(i);
        continue;
      }
      if (it->second.genome != proposals[i]) {
        throw ConfigError("history step " + std::to_string(step) +
                          " does not match this configuration and seed");
      }
      batch[i] = it->second;
    }

    bool stop = false;
    if (config.max_new_evaluations > 0) {
      const int room = config.max_new_evaluations - result.new_evaluations;
      if (static_cast<int>(pending.size()) > room) {
        pending.resize(std::max(0, room));
        stop = true;
      }
    }

    if (config.parallelism == 1 || pending.size() <= 1) {
      for (int i : pending) {
        batch[i] = evaluate_step(proposals[i], start + i);
        writer.append(*batch[i]);
        ++result.new_evaluations;
      }
    } else {
      std::vector<std::exception_ptr> errors(pending.size());
      std::atomic<std::size_t> next{0};
      {
        std::vector<std::jthread> workers;
        const int threads = std::min<int>(config.parallelism, static_cast<int>(pending.size()));
        for (int t = 0; t < threads; ++t) {
          workers.emplace_back([&] {
            for (std::size_t k = next++; k < pending.size(); k = next++) {
              try {
                batch[pending[k]] = evaluate_step(proposals[pending[k]], start + pending[k]);
              } catch (...) {
                errors[k] = std::current_exception();
              }
            }
          });
        }
      }
      for (std::size_t k = 0; k < pending.size(); ++k) {
        if (errors[k]) std::rethrow_exception(errors[k]);
        writer.append(*batch[pending[k]]);
        ++result.new_evaluations;
      }
    }

    if (stop) {
      for (auto& c : batch) {
        if (c) result.history.push_back(*c);
      }
      for (const auto& [step, c] : recorded) {
        if (step >= start + n) result.history.push_back(c);
      }
      std::sort(result.history.begin(), result.history.end(),
                [](const Candidate& a, const Candidate& b) { return a.step < b.step; });
      result.frontier = pareto_frontier(result.history);
      return result;
    }

    std::vector<ScoredGenome> scored;
    for (auto& c : batch) {
      result.history.push_back(*c);
      if (c->ok()) scored.push_back({c->genome, c->reward});
    }
    controller->update(scored);
  }

  result.frontier = pareto_frontier(result.history);
  result.complete = true;
  return result;
}

SweepResult sweep_repeats(std::span<const Candidate> base, std::span<const int> repeats_list,
                          const SearchSpaceDef& space, int image_size,
                          const Evaluator& evaluator, const LatencyTable& lut,
                          const RewardConfig& reward_config) {
  for (int r : repeats_list) {
    if (r < 1) throw ConfigError("repeats must be >= 1");
  }
  SweepResult out;
  for (const auto& b : base) {
    for (int r : repeats_list) {
      Candidate c = evaluate_candidate(b.genome, space, {r, image_size}, evaluator, lut,
                                       reward_config,
                                       "sweep" + std::to_string(b.step) + "r" + std::to_string(r));
      c.step = b.step;
      c.seed = b.seed;
      out.candidates.push_back(std::move(c));
    }
  }
  out.frontier = pareto_frontier(out.candidates);
  return out;
}

std::string format_history_record(const Candidate& c) {
  json j;
  j["step"] = c.step;
  j["genome"] = c.genome.tokens;
  j["latency_ms"] = c.latency_ms;
  j["repeats"] = c.repeats;
  j["seed"] = c.seed;
  j["status"] = c.ok() ? "ok" : "failed";
  j["message"] = c.message;
  if (c.ok()) {
    j["quality"] = c.quality;
    j["reward"] = c.reward;
  } else {
    j["quality"] = nullptr;
    j["reward"] = nullptr;
  }
  return j.dump();
}

Candidate parse_history_record(std::string_view line) {
  Candidate c;
  try {
    const json j = json::parse(line);
    c.step = j.at("step").get<int>();
    c.genome.tokens = j.at("genome").get<std::vector<int>>();
    c.latency_ms = j.at("latency_ms").get<double>();
    c.repeats = j.at("repeats").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.message = j.value("message", std::string{});
    const auto status = j.at("status").get<std::string>();
    if (status == "ok") {
      c.quality = j.at("quality").get<double>();
      c.reward = j.at("reward").get<double>();
    } else if (status == "failed") {
      c.status = CandidateStatus::kFailed;
    } else {
      throw ParseError("unknown status '" + status + "'");
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("history record: ") + e.what());
  }
  return c;
}

HistoryLoad load_history(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open history file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  HistoryLoad load;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos < text.size()) {
    ++lineno;
    const std::size_t nl = text.find('\n', pos);
    const bool terminated = nl != std::string::npos;
    const std::string line = text.substr(pos, terminated ? nl - pos : std::string::npos);
    // An unterminated last line is an interrupted append, even if it happens
    // to parse; it is dropped and re-evaluated.
    if (!terminated) {
      load.truncated_tail = true;
      break;
    }
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      try {
        load.records.push_back(parse_history_record(line));
      } catch (const ParseError& e) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    pos = nl + 1;
    load.valid_bytes = pos;
  }
  return load;
}

std::vector<Candidate> read_history(const std::string& path) {
  return load_history(path).records;
}

std::string format_frontier_table(const Frontier& frontier) {
  std::ostringstream out;
  out << "latency_ms\tquality\treward\tstep\n";
  char buf[128];
  for (const auto& m : frontier.members) {
    std::snprintf(buf, sizeof buf, "%.17g\t%.17g\t%.17g\t%d\n", m.latency_ms, m.quality,
                  m.reward, m.step);
    out << buf;
  }
  return out.str();
}

}  // namespace fpnas
