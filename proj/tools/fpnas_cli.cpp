// fpnas: batch front end for search-space sizing, costing, search and export.
//
// Exit codes: 0 success, 1 domain/config error, 2 usage error.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fpnas/cost.hpp"
#include "fpnas/errors.hpp"
#include "fpnas/evaluator.hpp"
#include "fpnas/search.hpp"
#include "json.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace fpnas;

constexpr const char* kVersion = "0.1.0";

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << content;
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Output goes to a file when a path is given, stdout otherwise.
void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    write_file(path, content);
  }
}

struct Manifest {
  std::vector<std::string> argv;

  // Resolved configuration plus provenance of the run.
  void write(const std::string& path, const std::string& command, const json& config) const {
    json j;
    j["tool"] = "fpnas";
    j["version"] = kVersion;
    j["timestamp"] = utc_now();
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = config;
    write_file(path, j.dump(2) + "\n");
  }
};

json space_json(const SearchSpaceDef& space) { return json::parse(dump_space(space)); }

json model_json(const LatencyModel& m) {
  return {{"ms_per_madd", m.ms_per_madd}, {"fixed_ms", m.fixed_ms}, {"noise", m.noise},
          {"seed", m.seed},               {"overhead_ms", m.overhead_ms}};
}

std::vector<Genome> load_genomes(const std::string& inline_tokens, const std::string& file) {
  if (!inline_tokens.empty() && !file.empty()) {
    throw ConfigError("give either --genome or --genomes, not both");
  }
  if (!inline_tokens.empty()) return {parse_genome(inline_tokens)};
  if (file.empty()) throw ConfigError("no genome given (--genome or --genomes)");
  std::istringstream in(read_file(file));
  auto genomes = read_genomes(in);
  if (genomes.empty()) throw ConfigError("'" + file + "' contains no genomes");
  return genomes;
}

// --lut path, or a synthesized table covering the space.
struct LutChoice {
  std::string path;
  LatencyModel model;

  LatencyTable load(const SearchSpaceDef& space, int image_size) const {
    if (!path.empty()) return load_lut(path);
    const auto sigs = space_signatures(space, image_size);
    return synth_lut(std::span<const OpSignature>(sigs), model);
  }

  json describe() const {
    if (!path.empty()) return {{"path", path}};
    return {{"synthesized", model_json(model)}};
  }
};

void add_model_options(CLI::App* cmd, LatencyModel& m) {
  cmd->add_option("--ms-per-madd", m.ms_per_madd, "Synthetic latency per MAdd (ms)")
      ->capture_default_str();
  cmd->add_option("--fixed-ms", m.fixed_ms, "Synthetic fixed latency per op (ms)")
      ->capture_default_str();
  cmd->add_option("--noise", m.noise, "Relative Gaussian noise on synthetic entries")
      ->capture_default_str();
  cmd->add_option("--lut-seed", m.seed, "Seed of the synthetic noise")->capture_default_str();
  cmd->add_option("--overhead-ms", m.overhead_ms, "Constant latency overhead (ms)")
      ->capture_default_str();
}

// Quality oracle selection shared by search and sweep-repeats.
struct EvaluatorChoice {
  std::string kind = "surrogate";
  std::uint64_t surrogate_seed = 0;
  std::string exchange_dir;
  double timeout_s = 3600.0;
  double poll_s = 0.1;

  void add_options(CLI::App* cmd) {
    cmd->add_option("--evaluator", kind, "surrogate | external")
        ->check(CLI::IsMember({"surrogate", "external"}))
        ->capture_default_str();
    cmd->add_option("--surrogate-seed", surrogate_seed, "Seed of the planted surrogate")
        ->capture_default_str();
    cmd->add_option("--exchange-dir", exchange_dir, "Request/response directory (external)");
    cmd->add_option("--timeout", timeout_s, "Seconds to wait per external response")
        ->capture_default_str();
    cmd->add_option("--poll", poll_s, "Seconds between response polls")->capture_default_str();
  }

  std::unique_ptr<Evaluator> make(const SearchSpaceDef& space) const {
    if (kind == "external") {
      if (exchange_dir.empty()) throw ConfigError("--evaluator external needs --exchange-dir");
      if (!(timeout_s > 0.0) || !(poll_s > 0.0)) {
        throw ConfigError("--timeout and --poll must be positive");
      }
      ExchangeConfig cfg;
      cfg.directory = exchange_dir;
      cfg.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(timeout_s * 1000.0));
      cfg.poll_interval = std::chrono::milliseconds(
          std::max<std::int64_t>(1, static_cast<std::int64_t>(poll_s * 1000.0)));
      return std::make_unique<ExternalEvaluator>(cfg);
    }
    SurrogateSpec spec;
    spec.seed = surrogate_seed;
    return std::make_unique<SurrogateEvaluator>(space, spec);
  }

  json describe() const {
    if (kind == "external") {
      return {{"kind", kind}, {"exchange_dir", exchange_dir}, {"timeout_s", timeout_s},
              {"poll_s", poll_s}};
    }
    return {{"kind", kind}, {"surrogate_seed", surrogate_seed}};
  }
};

std::string format_big(const BigInt& v) { return v.str(); }

std::string sci(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

std::string sci(const BigInt& v) {
  return sci(v.convert_to<double>());
}

// --- subcommands ----------------------------------------------------------

int run_cardinality(const std::string& space_arg) {
  const SearchSpaceDef space = resolve_space(space_arg);
  const BigInt exact = cardinality(space);
  const auto published = published_cardinality(space.name);
  std::cout << "space\t" << space.name << "\n";
  std::cout << "exact\t" << format_big(exact) << "\n";
  std::cout << "approx\t" << sci(exact) << "\n";
  if (published) {
    std::cout << "published\t" << sci(*published) << "\n";
    std::cout << "exact/published\t" << sci(exact.convert_to<double>() / *published) << "\n";
  } else {
    std::cout << "published\tn/a\n";
  }
  std::cout << "distinct_genomes\t" << format_big(schema_product(token_schema(space))) << "\n";
  return 0;
}

int run_verify_sdo(const std::string& grid) {
  if (grid != "default") throw ConfigError("unknown grid '" + grid + "' (only 'default')");
  const SearchSpaceDef space = preset("mnasfpn");
  int cases = 0;
  int violations = 0;
  for (int k : {2, 4, 8}) {
    for (int c : space.channel_choices) {
      for (int f : space.expansion_choices) {
        for (int r : {5, 10, 20, 40}) {
          const FeatureSpec in{kMinLevel, k * r, c};
          const auto on = merge_path_madds(in, r, f, true).madds;
          const auto off = merge_path_madds(in, r, f, false).madds;
          ++cases;
          if (!(on < off)) {
            ++violations;
            std::cout << "violation\tk=" << k << " C=" << c << " F=" << f << " R=" << r
                      << "\t" << on << " >= " << off << "\n";
          }
        }
      }
    }
  }
  std::cout << "cases\t" << cases << "\nviolations\t" << violations << "\n";
  std::cout << (violations == 0 ? "PASS" : "FAIL") << "\n";
  return violations == 0 ? 0 : 1;
}

int run_sample(const Manifest& manifest, const std::string& space_arg, std::uint64_t seed,
               int count, const std::string& out) {
  if (count < 1) throw ConfigError("--count must be >= 1");
  const SearchSpaceDef space = resolve_space(space_arg);
  std::vector<Genome> genomes;
  for (int i = 0; i < count; ++i) {
    genomes.push_back(sample_uniform(space, derive_seed(seed, static_cast<std::uint64_t>(i))));
  }
  std::ostringstream text;
  write_genomes(text, genomes);
  if (!out.empty() && out != "-") {
    manifest.write(out + ".manifest.json", "sample",
                   {{"space", space_json(space)}, {"seed", seed}, {"count", count}});
  }
  emit(out, text.str());
  return 0;
}

int run_cost(const Manifest& manifest, const std::string& space_arg, const std::string& genome,
             const std::string& genomes_file, const PlanParams& plan, const LutChoice& lut_choice,
             bool madds_only, const std::string& sdo, const std::string& out) {
  SearchSpaceDef space = resolve_space(space_arg);
  if (sdo == "on") space.sdo_enabled = true;
  if (sdo == "off") space.sdo_enabled = false;
  const auto genomes = load_genomes(genome, genomes_file);
  std::optional<LatencyTable> lut;
  if (!madds_only) lut = lut_choice.load(space, plan.image_size);

  std::ostringstream text;
  for (std::size_t i = 0; i < genomes.size(); ++i) {
    const ResolvedGraph g = build_graph(genomes[i], space, plan);
    CostReport report = graph_madds(g);
    if (lut) report = full_cost_report(g, *lut);
    text << "# genome " << i << ": " << format_genome(genomes[i]) << "\n";
    text << format_cost_report(report);
  }
  if (!out.empty() && out != "-") {
    manifest.write(out + ".manifest.json", "cost",
                   {{"space", space_json(space)},
                    {"repeats", plan.repeats},
                    {"image_size", plan.image_size},
                    {"lut", madds_only ? json(nullptr) : lut_choice.describe()}});
  }
  emit(out, text.str());
  return 0;
}

int run_search_cmd(const Manifest& manifest, SearchConfig config, const std::string& controller,
                   const LutChoice& lut_choice, const EvaluatorChoice& eval_choice,
                   const std::string& out) {
  config.controller = parse_controller_kind(controller);
  check_search_config(config);
  const LatencyTable lut = lut_choice.load(config.space, config.plan.image_size);
  const auto evaluator = eval_choice.make(config.space);

  const std::string manifest_base = !config.history_path.empty() ? config.history_path : out;
  if (!manifest_base.empty() && manifest_base != "-") {
    manifest.write(manifest_base + ".manifest.json", "search",
                   {{"space", space_json(config.space)},
                    {"controller", std::string(to_string(config.controller))},
                    {"w", config.reward.w},
                    {"budget", config.budget},
                    {"batch_size", config.batch_size},
                    {"seed", config.seed},
                    {"repeats", config.plan.repeats},
                    {"image_size", config.plan.image_size},
                    {"parallelism", config.parallelism},
                    {"history", config.history_path},
                    {"lut", lut_choice.describe()},
                    {"evaluator", eval_choice.describe()}});
  }

  const SearchResult result = run_search(config, *evaluator, lut);
  int failed = 0;
  for (const auto& c : result.history) failed += !c.ok();
  std::cerr << "evaluated " << result.history.size() << " candidates (" << result.new_evaluations
            << " new, " << failed << " failed), frontier " << result.frontier.members.size()
            << (result.complete ? "" : ", stopped early") << "\n";
  emit(out, format_frontier_table(result.frontier));
  return 0;
}

int run_frontier(const Manifest& manifest, const std::string& history, const std::string& out) {
  const auto records = read_history(history);
  const Frontier f = pareto_frontier(records);
  if (!out.empty() && out != "-") {
    manifest.write(out + ".manifest.json", "frontier", {{"history", history}});
  }
  emit(out, format_frontier_table(f));
  return 0;
}

std::string format_selection(const std::vector<double>& targets,
                             const std::vector<std::optional<Candidate>>& picks) {
  std::ostringstream text;
  text << "target_ms\tlatency_ms\tquality\treward\tstep\tgenome\n";
  char buf[256];
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!picks[i]) {
      std::snprintf(buf, sizeof buf, "%.17g\tabsent\n", targets[i]);
      text << buf;
      continue;
    }
    const Candidate& c = *picks[i];
    std::snprintf(buf, sizeof buf, "%.17g\t%.17g\t%.17g\t%.17g\t%d\t", targets[i], c.latency_ms,
                  c.quality, c.reward, c.step);
    text << buf << format_genome(c.genome) << "\n";
  }
  return text.str();
}

int run_select(const Manifest& manifest, const std::string& history,
               const std::vector<double>& targets, const std::string& out) {
  const Frontier f = pareto_frontier(read_history(history));
  if (f.members.empty()) throw DomainError("history has no successful candidates");
  const auto picks = select_at_latency(f, targets);
  if (!out.empty() && out != "-") {
    manifest.write(out + ".manifest.json", "select",
                   {{"history", history}, {"targets", targets}});
  }
  emit(out, format_selection(targets, picks));
  return 0;
}

int run_sweep(const Manifest& manifest, const std::string& history, const std::string& space_arg,
              const std::vector<double>& targets, const std::vector<int>& repeats,
              int image_size, const RewardConfig& reward_config, const LutChoice& lut_choice,
              const EvaluatorChoice& eval_choice, const std::string& out) {
  const SearchSpaceDef space = resolve_space(space_arg);
  const Frontier f = pareto_frontier(read_history(history));
  if (f.members.empty()) throw DomainError("history has no successful candidates");

  // Distinct picks in target order.
  std::vector<Candidate> base;
  std::set<int> seen;
  for (const auto& p : select_at_latency(f, targets)) {
    if (p && seen.insert(p->step).second) base.push_back(*p);
  }
  if (base.empty()) throw DomainError("no frontier member meets any target latency");

  const LatencyTable lut = lut_choice.load(space, image_size);
  const auto evaluator = eval_choice.make(space);
  if (!out.empty() && out != "-") {
    manifest.write(out + ".manifest.json", "sweep-repeats",
                   {{"history", history},
                    {"space", space_json(space)},
                    {"targets", targets},
                    {"repeats", repeats},
                    {"image_size", image_size},
                    {"w", reward_config.w},
                    {"lut", lut_choice.describe()},
                    {"evaluator", eval_choice.describe()}});
  }
  const SweepResult sweep =
      sweep_repeats(base, repeats, space, image_size, *evaluator, lut, reward_config);

  std::ostringstream text;
  text << "base_step\trepeats\tlatency_ms\tquality\treward\tstatus\n";
  char buf[256];
  for (std::size_t i = 0; i < sweep.candidates.size(); ++i) {
    const Candidate& c = sweep.candidates[i];
    std::snprintf(buf, sizeof buf, "%d\t%d\t%.17g\t%.17g\t%.17g\t%s\n",
                  base[i / repeats.size()].step, c.repeats, c.latency_ms, c.quality, c.reward,
                  c.ok() ? "ok" : "failed");
    text << buf;
  }
  text << "# frontier\n" << format_frontier_table(sweep.frontier);
  emit(out, text.str());
  return 0;
}

int run_export(const Manifest& manifest, const std::string& space_arg, const std::string& genome,
               const std::string& genomes_file, const PlanParams& plan, const std::string& format,
               const std::string& out) {
  const SearchSpaceDef space = resolve_space(space_arg);
  const auto genomes = load_genomes(genome, genomes_file);
  if (genomes.size() != 1) throw ConfigError("export takes exactly one genome");
  const ResolvedGraph g = build_graph(genomes.front(), space, plan);
  if (!out.empty() && out != "-") {
    manifest.write(out + ".manifest.json", "export",
                   {{"space", space_json(space)},
                    {"genome", genomes.front().tokens},
                    {"repeats", plan.repeats},
                    {"image_size", plan.image_size},
                    {"format", format}});
  }
  emit(out, format == "dot" ? export_dot(g) : export_graph(g));
  return 0;
}

int run_lut_synth(const Manifest& manifest, const std::string& space_arg, int image_size,
                  const LatencyModel& model, const std::string& out) {
  const SearchSpaceDef space = resolve_space(space_arg);
  const auto sigs = space_signatures(space, image_size);
  const LatencyTable lut = synth_lut(std::span<const OpSignature>(sigs), model);
  if (!out.empty() && out != "-") {
    manifest.write(out + ".manifest.json", "lut synth",
                   {{"space", space_json(space)},
                    {"image_size", image_size},
                    {"model", model_json(model)}});
  }
  emit(out, format_lut(lut));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Search-space, cost and search tooling for pyramid-head architecture search"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Manifest manifest;
  for (int i = 0; i < argc; ++i) manifest.argv.emplace_back(argv[i]);

  // Shared option storage.
  std::string space_arg = "mnasfpn";
  std::string out;
  std::string genome;
  std::string genomes_file;
  std::string history;
  std::uint64_t seed = 0;
  PlanParams plan;
  LutChoice lut_choice;
  EvaluatorChoice eval_choice;
  RewardConfig reward_config;

  const auto add_space = [&](CLI::App* cmd) {
    cmd->add_option("--space", space_arg, "Preset name or space config file")
        ->capture_default_str();
  };
  const auto add_out = [&](CLI::App* cmd) {
    cmd->add_option("--out", out, "Output file (default: stdout)");
  };
  const auto add_genome = [&](CLI::App* cmd) {
    cmd->add_option("--genome", genome, "Genome tokens, space separated");
    cmd->add_option("--genomes", genomes_file, "File with one genome per line");
  };
  const auto add_plan = [&](CLI::App* cmd) {
    cmd->add_option("--repeats", plan.repeats, "Cell repeats")->capture_default_str();
    cmd->add_option("--image-size", plan.image_size, "Input image side (pixels)")
        ->capture_default_str();
  };

  auto* card = app.add_subcommand("cardinality", "Exact search-space size");
  add_space(card);

  std::string grid = "default";
  auto* sdo = app.add_subcommand("verify-sdo", "Check size-dependent ordering over a grid");
  sdo->add_option("--grid", grid, "Grid to check")->capture_default_str();

  int count = 1;
  auto* sample = app.add_subcommand("sample", "Uniformly sample genomes");
  add_space(sample);
  sample->add_option("--seed", seed, "Random seed")->capture_default_str();
  sample->add_option("--count", count, "Number of genomes")->capture_default_str();
  add_out(sample);

  bool madds_only = false;
  std::string sdo_mode = "space";
  auto* cost = app.add_subcommand("cost", "MAdds, params and latency breakdown");
  add_space(cost);
  add_genome(cost);
  add_plan(cost);
  cost->add_option("--lut", lut_choice.path, "Latency table (default: synthesized)");
  add_model_options(cost, lut_choice.model);
  cost->add_flag("--madds-only", madds_only, "Skip latency");
  cost->add_option("--sdo", sdo_mode, "space | on | off")
      ->check(CLI::IsMember({"space", "on", "off"}))
      ->capture_default_str();
  add_out(cost);

  SearchConfig search_config;
  std::string controller = "policy-gradient";
  auto* search = app.add_subcommand("search", "Run an architecture search");
  add_space(search);
  add_plan(search);
  search->add_option("--budget", search_config.budget, "Candidates to evaluate")
      ->capture_default_str();
  search->add_option("--batch-size", search_config.batch_size, "Candidates per controller update")
      ->capture_default_str();
  search->add_option("--controller", controller, "policy-gradient | random | evolution")
      ->capture_default_str();
  search->add_option("--w", reward_config.w, "Latency exponent of the reward")
      ->capture_default_str();
  search->add_option("--seed", seed, "Search seed")->capture_default_str();
  search->add_option("--lut", lut_choice.path, "Latency table (default: synthesized)");
  add_model_options(search, lut_choice.model);
  search->add_option("--history", history, "Append-only history file (resumed if present)");
  search->add_option("--parallelism", search_config.parallelism, "Concurrent evaluations")
      ->capture_default_str();
  search->add_option("--max-new", search_config.max_new_evaluations,
                     "Stop after this many new evaluations (0 = no limit)")
      ->capture_default_str();
  search->add_option("--lr", search_config.policy.learning_rate, "Policy learning rate")
      ->capture_default_str();
  eval_choice.add_options(search);
  add_out(search);

  auto* frontier = app.add_subcommand("frontier", "Pareto frontier of a history file");
  frontier->add_option("--history", history, "History file")->required();
  add_out(frontier);

  std::vector<double> targets{166.0, 173.0, 180.0};
  auto* select = app.add_subcommand("select", "Best frontier member under target latencies");
  select->add_option("--history", history, "History file")->required();
  select->add_option("--targets", targets, "Target latencies (ms)")
      ->delimiter(',')
      ->capture_default_str();
  add_out(select);

  std::vector<int> sweep_list{3, 4, 5};
  auto* sweep = app.add_subcommand("sweep-repeats", "Re-cost selected models at other repeats");
  sweep->add_option("--history", history, "History file")->required();
  add_space(sweep);
  sweep->add_option("--targets", targets, "Target latencies picking the base models (ms)")
      ->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--repeats", sweep_list, "Repeat counts")->delimiter(',')->capture_default_str();
  sweep->add_option("--image-size", plan.image_size, "Input image side (pixels)")
      ->capture_default_str();
  sweep->add_option("--w", reward_config.w, "Latency exponent of the reward")
      ->capture_default_str();
  sweep->add_option("--lut", lut_choice.path, "Latency table (default: synthesized)");
  add_model_options(sweep, lut_choice.model);
  eval_choice.add_options(sweep);
  add_out(sweep);

  std::string format = "json";
  auto* exp = app.add_subcommand("export", "Write the resolved operator graph");
  add_space(exp);
  add_genome(exp);
  add_plan(exp);
  exp->add_option("--format", format, "json | dot")
      ->check(CLI::IsMember({"json", "dot"}))
      ->capture_default_str();
  add_out(exp);

  auto* lut = app.add_subcommand("lut", "Latency table tools");
  lut->require_subcommand(1);
  auto* synth = lut->add_subcommand("synth", "Synthesize a table for every op of a space");
  add_space(synth);
  synth->add_option("--image-size", plan.image_size, "Input image side (pixels)")
      ->capture_default_str();
  add_model_options(synth, lut_choice.model);
  add_out(synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (*card) return run_cardinality(space_arg);
    if (*sdo) return run_verify_sdo(grid);
    if (*sample) return run_sample(manifest, space_arg, seed, count, out);
    if (*cost) {
      return run_cost(manifest, space_arg, genome, genomes_file, plan, lut_choice, madds_only,
                      sdo_mode, out);
    }
    if (*search) {
      search_config.space = resolve_space(space_arg);
      search_config.seed = seed;
      search_config.plan = plan;
      search_config.reward = reward_config;
      search_config.history_path = history;
      return run_search_cmd(manifest, search_config, controller, lut_choice, eval_choice, out);
    }
    if (*frontier) return run_frontier(manifest, history, out);
    if (*select) return run_select(manifest, history, targets, out);
    if (*sweep) {
      return run_sweep(manifest, history, space_arg, targets, sweep_list, plan.image_size,
                       reward_config, lut_choice, eval_choice, out);
    }
    if (*exp) return run_export(manifest, space_arg, genome, genomes_file, plan, format, out);
    if (*synth) return run_lut_synth(manifest, space_arg, plan.image_size, lut_choice.model, out);
  } catch (const std::exception& e) {
    std::cerr << "fpnas: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
