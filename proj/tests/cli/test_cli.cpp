#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "fpnas/cost.hpp"
#include "fpnas/graph.hpp"
#include "fpnas/search.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;  // stdout and stderr
};

Run fpnas_cli(const std::string& args, const fs::path& cwd) {
  const std::string cmd =
      "cd '" + cwd.string() + "' && '" FPNAS_CLI_PATH "' " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path workdir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "fpnas_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cardinality") {
  const fs::path dir = workdir("card");
  const Run r = fpnas_cli("cardinality --space mnasfpn", dir);
  CHECK(r.code == 0);
  // 3,112,013,520,000 * 2^9 * 4^5 * 24 * 3^9 * 6 * 7^9
  CHECK(r.out.find("exact\t186615424657489896730672496640000\n") != std::string::npos);
  CHECK(r.out.find("published\t1.000e+31") != std::string::npos);

  const Run lite = fpnas_cli("cardinality --space nas-fpnlite-s", dir);
  CHECK(lite.out.find("published\t2.000e+22") != std::string::npos);
}

TEST_CASE("verify-sdo") {
  const Run r = fpnas_cli("verify-sdo --grid default", workdir("sdo"));
  CHECK(r.code == 0);
  CHECK(r.out.find("cases\t504\n") != std::string::npos);
  CHECK(r.out.find("violations\t0\n") != std::string::npos);
  CHECK(r.out.find("PASS") != std::string::npos);
}

TEST_CASE("exit codes") {
  const fs::path dir = workdir("codes");
  CHECK(fpnas_cli("", dir).code == 2);
  CHECK(fpnas_cli("cardinality --spaec mnasfpn", dir).code == 2);
  CHECK(fpnas_cli("frontier", dir).code == 2);
  CHECK(fpnas_cli("export --format png --genome '1 2'", dir).code == 2);
  CHECK(fpnas_cli("--help", dir).code == 0);

  const Run unknown = fpnas_cli("cardinality --space nasfpn", dir);
  CHECK(unknown.code == 1);
  CHECK(unknown.out.find("unknown search space preset") != std::string::npos);
  CHECK(fpnas_cli("frontier --history missing.jsonl", dir).code == 1);
  CHECK(fpnas_cli("search --budget 10 --w 0.5", dir).code == 1);
  CHECK(fpnas_cli("export --genome '1 2 3'", dir).code == 1);
  CHECK(fpnas_cli("verify-sdo --grid other", dir).code == 1);
}

TEST_CASE("search is reproducible and writes a manifest first") {
  const fs::path dir = workdir("search");
  const std::string args = "search --space mnasfpn --budget 200 --controller random --seed 1";
  REQUIRE(fpnas_cli(args + " --history a.jsonl --out a.tsv", dir).code == 0);
  REQUIRE(fpnas_cli(args + " --history b.jsonl --out b.tsv", dir).code == 0);
  const std::string a = slurp(dir / "a.jsonl");
  CHECK(a == slurp(dir / "b.jsonl"));
  CHECK(std::count(a.begin(), a.end(), '\n') == 200);
  CHECK(slurp(dir / "a.tsv") == slurp(dir / "b.tsv"));

  const auto manifest = nlohmann::json::parse(slurp(dir / "a.jsonl.manifest.json"));
  CHECK(manifest["command"] == "search");
  CHECK(manifest["config"]["seed"] == 1);
  CHECK(manifest["config"]["budget"] == 200);
  CHECK(manifest["config"]["controller"] == "random");
  CHECK(manifest["config"]["w"] == -0.3);
  CHECK(manifest["config"]["evaluator"]["kind"] == "surrogate");
  CHECK(manifest.contains("timestamp"));
  CHECK(manifest.contains("version"));

  // Recomputing the frontier from the history matches the search output.
  REQUIRE(fpnas_cli("frontier --history a.jsonl --out c.tsv", dir).code == 0);
  CHECK(slurp(dir / "c.tsv") == slurp(dir / "a.tsv"));

  // A policy-gradient run resumes after an early stop.
  const std::string pg = "search --budget 100 --batch-size 20 --seed 5";
  REQUIRE(fpnas_cli(pg + " --history full.jsonl", dir).code == 0);
  REQUIRE(fpnas_cli(pg + " --history part.jsonl --max-new 45", dir).code == 0);
  const Run resumed = fpnas_cli(pg + " --history part.jsonl", dir);
  REQUIRE(resumed.code == 0);
  CHECK(resumed.out.find("55 new") != std::string::npos);
  CHECK(slurp(dir / "part.jsonl") == slurp(dir / "full.jsonl"));

  // Parallel evaluation writes the same history.
  REQUIRE(fpnas_cli(args + " --history p.jsonl --parallelism 4", dir).code == 0);
  CHECK(slurp(dir / "p.jsonl") == a);
}

TEST_CASE("lut synth feeds search without being modified") {
  const fs::path dir = workdir("lut");
  REQUIRE(fpnas_cli("lut synth --space mnasfpn --noise 0.1 --out t.lut", dir).code == 0);
  CHECK(fs::exists(dir / "t.lut.manifest.json"));
  const std::string table = slurp(dir / "t.lut");
  std::istringstream in(table);
  const fpnas::LatencyTable lut = fpnas::parse_lut(in);
  CHECK(lut.size() > 100);
  CHECK(lut.overhead_ms() == 100.0);

  REQUIRE(fpnas_cli("search --budget 40 --batch-size 10 --lut t.lut --history h.jsonl", dir).code ==
          0);
  CHECK(slurp(dir / "t.lut") == table);
  for (const auto& c : fpnas::read_history((dir / "h.jsonl").string())) CHECK(c.latency_ms > 100.0);

  const Run miss = fpnas_cli("search --budget 20 --image-size 640 --lut t.lut", dir);
  CHECK(miss.code == 1);
  CHECK(miss.out.find("no entry for signature") != std::string::npos);
}

TEST_CASE("sample, cost and export") {
  const fs::path dir = workdir("tools");
  REQUIRE(fpnas_cli("sample --space no-expand --seed 4 --count 3 --out g.txt", dir).code == 0);
  const std::string genomes = slurp(dir / "g.txt");
  CHECK(std::count(genomes.begin(), genomes.end(), '\n') == 3);
  REQUIRE(fpnas_cli("sample --space no-expand --seed 4 --count 3 --out g2.txt", dir).code == 0);
  CHECK(slurp(dir / "g2.txt") == genomes);

  const Run cost = fpnas_cli("cost --space no-expand --genomes g.txt --repeats 2", dir);
  CHECK(cost.code == 0);
  CHECK(std::count(cost.out.begin(), cost.out.end(), '#') == 3);
  CHECK(cost.out.find("TOTAL") != std::string::npos);
  CHECK(cost.out.find("overhead") != std::string::npos);

  const std::string first = genomes.substr(0, genomes.find('\n'));
  REQUIRE(fpnas_cli("export --space no-expand --genome '" + first + "' --out g.json", dir).code ==
          0);
  const std::string text = slurp(dir / "g.json");
  const fpnas::ResolvedGraph g = fpnas::parse_graph(text);
  CHECK(fpnas::export_graph(g) == text);
  CHECK(g.repeats == 3);
  CHECK(fs::exists(dir / "g.json.manifest.json"));

  const Run dot = fpnas_cli("export --space no-expand --format dot --genome '" + first + "'", dir);
  CHECK(dot.code == 0);
  CHECK(dot.out.rfind("digraph", 0) == 0);
}

TEST_CASE("select and sweep-repeats") {
  const fs::path dir = workdir("select");
  REQUIRE(fpnas_cli("search --budget 100 --controller random --history h.jsonl", dir).code == 0);
  const Run sel = fpnas_cli("select --history h.jsonl --targets 1,120,1000", dir);
  CHECK(sel.code == 0);
  CHECK(sel.out.find("\n1\tabsent\n") != std::string::npos);

  const Run sweep =
      fpnas_cli("sweep-repeats --history h.jsonl --targets 1000 --repeats 3,4,5 --out s.tsv", dir);
  REQUIRE(sweep.code == 0);
  const std::string s = slurp(dir / "s.tsv");
  CHECK(s.find("\t3\t") != std::string::npos);
  CHECK(s.find("\t5\t") != std::string::npos);
  CHECK(fs::exists(dir / "s.tsv.manifest.json"));
}
