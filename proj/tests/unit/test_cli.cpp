#include <doctest.h>

#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "bllopt/pipeline.hpp"
#include "cli.hpp"
#include "test_support.hpp"

using namespace bllopt;
using testing_support::read_file;
using testing_support::TempDir;
using testing_support::write_file;

namespace {

struct Invocation {
  int code = 0;
  std::string out;
  std::string err;
};

Invocation invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "bllopt");
  std::ostringstream out, err;
  Invocation r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

const std::string kFixture = testing_support::fixture_path().string();

// Coarse lattice keeps these tests fast; the default grid is exercised by
// the acceptance suite.
const std::vector<std::string> kCoarse = {"--p1-range=-2:2:0.2", "--p2-range=-2:2:0.2"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("cli: full run writes every artifact") {
  TempDir dir;
  const auto r = invoke(with({"run", "--input", kFixture, "--out", dir.path().string(), "--emit-trace"}, kCoarse));
  INFO(r.err);
  REQUIRE(r.code == 0);
  for (auto name : {artifacts::kPanel, artifacts::kGapRegistry, artifacts::kValidation, artifacts::kNormalized,
                    artifacts::kDescriptive, artifacts::kClustersCsv, artifacts::kClustersJson, artifacts::kPlanCsv,
                    artifacts::kPlanJson, artifacts::kTrace, artifacts::kReportJson, artifacts::kReportText,
                    artifacts::kClusterDeltas, artifacts::kReallocation}) {
    CHECK(std::filesystem::exists(dir.path() / std::string(name)));
  }
  const auto plan = parse_plan_json(read_file(dir.path() / std::string(artifacts::kPlanJson)));
  CHECK(plan.delta_cases >= 0.0);

  // Every artifact reads back through its module reader.
  CHECK(parse_panel(dir.path() / std::string(artifacts::kPanel)).panel ==
        parse_panel(testing_support::fixture_path()).panel);
  std::istringstream norm(read_file(dir.path() / std::string(artifacts::kNormalized)));
  CHECK(read_normalized_csv(norm) == normalize_panel(parse_panel(testing_support::fixture_path()).panel));
  const auto clusters = parse_assignment_json(read_file(dir.path() / std::string(artifacts::kClustersJson)));
  std::istringstream clusters_csv(read_file(dir.path() / std::string(artifacts::kClustersCsv)));
  CHECK(read_assignment_csv(clusters_csv).medoids == clusters.medoids);
  for (auto name : {artifacts::kGapRegistry, artifacts::kValidation, artifacts::kDescriptive, artifacts::kReportJson}) {
    CHECK_FALSE(nlohmann::json::parse(read_file(dir.path() / std::string(name))).is_null());
  }
  CHECK(r.out.find("Improvement") != std::string::npos);
}

TEST_CASE("cli: two runs are byte-identical") {
  TempDir a, b;
  REQUIRE(invoke(with({"run", "-i", kFixture, "-o", a.path().string(), "--emit-trace"}, kCoarse)).code == 0);
  REQUIRE(invoke(with({"run", "-i", kFixture, "-o", b.path().string(), "--emit-trace"}, kCoarse)).code == 0);
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(a.path())) {
    ++n;
    CHECK(read_file(e.path()) == read_file(b.path() / e.path().filename()));
  }
  CHECK(n >= 13u);
}

TEST_CASE("cli: staged reruns reproduce the full run") {
  TempDir full, staged;
  REQUIRE(invoke(with({"run", "-i", kFixture, "-o", full.path().string()}, kCoarse)).code == 0);
  const auto out = staged.path().string();
  REQUIRE(invoke({"ingest", "-i", kFixture, "-o", out}).code == 0);
  REQUIRE(invoke({"normalize", "-i", out + "/panel.csv", "-o", out}).code == 0);
  REQUIRE(invoke({"cluster", "-i", kFixture, "--normalized", out + "/normalized_panel.csv", "-o", out}).code == 0);
  REQUIRE(invoke(with({"optimize", "-i", kFixture, "-o", out}, kCoarse)).code == 0);
  REQUIRE(invoke({"evaluate", "-i", kFixture, "--plan", out + "/allocation_plan.json", "--clusters",
                  out + "/clusters.json", "-o", out})
              .code == 0);
  for (auto name : {artifacts::kNormalized, artifacts::kClustersJson, artifacts::kPlanJson, artifacts::kReportJson,
                    artifacts::kClusterDeltas, artifacts::kReallocation}) {
    CHECK(read_file(full.path() / std::string(name)) == read_file(staged.path() / std::string(name)));
  }
}

TEST_CASE("cli: empty input fails in the ingest stage") {
  TempDir dir;
  write_file(dir / "empty.csv", "");
  const auto r = invoke({"run", "-i", (dir / "empty.csv").string(), "-o", (dir / "out").string()});
  CHECK(r.code != 0);
  CHECK(r.err.find("stage=ingest") != std::string::npos);

  write_file(dir / "header.csv",
             "geo_id,geo_name,borough,year,tests,cases_5plus,cases_10plus,cases_15plus,child_population\n");
  const auto h = invoke({"run", "-i", (dir / "header.csv").string(), "-o", (dir / "out").string()});
  CHECK(h.code == 1);
  CHECK(h.err.find("stage=ingest") != std::string::npos);
}

TEST_CASE("cli: window longer than the panel fails in the optimize stage") {
  TempDir dir;
  const auto r = invoke(with({"run", "-i", kFixture, "-o", dir.path().string(), "--window", "40"}, kCoarse));
  CHECK(r.code == 2);
  CHECK(r.err.find("stage=optimize") != std::string::npos);
  CHECK(r.err.find("precondition") != std::string::npos);
}

TEST_CASE("cli: configuration errors and infeasible searches") {
  TempDir dir;
  const auto out = dir.path().string();
  CHECK(invoke({"run", "-i", kFixture, "-o", out, "--k", "1"}).code == 2);
  CHECK(invoke({"run", "-i", kFixture, "-o", out, "--floor", "1.5"}).code == 2);
  CHECK(invoke({"run", "-i", kFixture, "-o", out, "--p1-range", "1:0:0.1"}).code == 2);
  CHECK(invoke({"run", "-i", kFixture, "-o", out, "--grid-preset", "huge"}).code == 2);
  CHECK(invoke({"run", "-o", out}).code == 2);
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"run", "-i", (dir / "missing.csv").string(), "-o", out}).code == 1);
  const auto inf = invoke({"optimize", "-i", kFixture, "-o", out, "--p1-range=-1:-0.5:0.5", "--p2-range=-1:-0.5:0.5"});
  CHECK(inf.code == 3);
  CHECK(inf.err.find("stage=optimize") != std::string::npos);
  CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("cli: configuration file with flag override") {
  TempDir dir;
  write_file(dir / "run.toml", "input = \"" + kFixture + "\"\nout = \"" + (dir / "cfg").string() +
                                   "\"\ntotal-tests = 5000\np1-range = \"0:1:0.5\"\np2-range = \"0:1:0.5\"\n");
  const auto r = invoke({"run", "--config", (dir / "run.toml").string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(parse_plan_json(read_file(dir / "cfg/allocation_plan.json")).total_tests == 5000);

  const auto o = invoke({"run", "--config", (dir / "run.toml").string(), "--total-tests", "7000"});
  REQUIRE(o.code == 0);
  CHECK(parse_plan_json(read_file(dir / "cfg/allocation_plan.json")).total_tests == 7000);

  write_file(dir / "bad.toml", "no-such-option = 3\n");
  CHECK(invoke({"run", "--config", (dir / "bad.toml").string()}).code == 2);
}

TEST_CASE("pipeline: T defaults to the forecast") {
  TempDir dir;
  RunConfig cfg;
  cfg.input_path = testing_support::fixture_path();
  cfg.output_dir = dir.path();
  cfg.grid = {{-1, 1, 0.5}, {-1, 1, 0.5}};
  const auto r = run_pipeline(cfg);
  const auto panel = parse_panel(cfg.input_path).panel;
  CHECK(r.total_tests == forecast_total_tests(panel.yearly_test_totals()));
  CHECK(r.plan.target_year == 2021);
  CHECK(r.rejected_rows == 0u);
  CHECK(r.violations == 0u);
}
