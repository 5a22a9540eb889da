#include "doctest.h"

#include "mirnn/error.hpp"
#include "mirnn/experiment.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mirnn;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

std::string message_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("mirnn_cfg_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A Burgers run small enough to train in well under a second.
json tiny(const fs::path& out) {
  json j = json::parse(R"({
    "problem": {"name": "burgers"},
    "partition": {"blocks": 2, "mutual_length": 0.1},
    "conditioning": "end",
    "forget_factors": 0.5,
    "network": {"hidden_layers": 1, "width": 4},
    "training": {"epochs": 3, "seed": 2},
    "sampling": {"interior": 20, "boundary": 4, "initial": 4, "mutual": 4},
    "evaluation": {"spacing": 0.25, "slice_width": 0.5},
    "noise": {"sigmas": [0.1]},
    "sweep": {"table1": {"blocks": [2, 3], "mutual_lengths": [0.0, 2.0]},
              "table2": {"conditioning": ["TA", [2.55, 2.55, 2.55]],
                         "forget_factors": [0.5, [0.1, 0.5, 1.0]]}}
  })");
  j["output_dir"] = out.string();
  return j;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST_CASE("defaults") {
  const ExperimentConfig c = parse_config("{}");
  CHECK(c.problem == "burgers");
  CHECK(c.blocks == 2);
  CHECK(c.mutual_length == 0.01);
  CHECK(c.train.adam.lr == 1e-3);
  CHECK(c.train.epochs == 20000);
  CHECK(c.train.sampling.interior == 10000);
  CHECK(c.train.sampling.boundary == 400);
  CHECK(c.train.mutual.enabled);
  CHECK_FALSE(c.train.mutual.detach);
  CHECK(c.spacing == 0.01);
  CHECK(c.make_partition().block(1).start == 2.5);
}

TEST_CASE("shipped configs parse") {
  int n = 0;
  for (const auto& e : fs::directory_iterator(MIRNN_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    CAPTURE(e.path().string());
    CHECK_NOTHROW(load_config(e.path().string()));
    ++n;
  }
  CHECK(n >= 5);
}

TEST_CASE("conditioning and forget factors parse") {
  const ExperimentConfig c = parse_config(
      R"({"conditioning": ["TA", 2.55, "end"], "forget_factors": [0.1, 0.5, 1.0]})");
  CHECK(c.policy.rules[0].kind == Conditioning::temporal_alignment);
  CHECK(c.policy.rules[1].describe() == "2.55");
  CHECK(c.policy.rules[2].describe() == "end");
  CHECK(c.ff.factors == std::array<double, 3>{0.1, 0.5, 1.0});
  CHECK(parse_rule("2.55").describe() == "2.55");
  CHECK(code_of([] { parse_rule("later"); }) == ErrorCode::config);
}

TEST_CASE("validation reports every offending field") {
  const std::string msg = message_of([] {
    parse_config(R"({
      "training": {"lr": -1, "beta1": 1.5},
      "partition": {"mutual_length": -0.1},
      "forget_factors": [0.5, 2.0, 0.5],
      "bogus": 1
    })");
  });
  CHECK(msg.find("training.lr") != std::string::npos);
  CHECK(msg.find("training.beta1") != std::string::npos);
  CHECK(msg.find("partition.mutual_length") != std::string::npos);
  CHECK(msg.find("forget_factors") != std::string::npos);
  CHECK(msg.find("bogus") != std::string::npos);
  CHECK(code_of([] { parse_config("{not json"); }) == ErrorCode::config);
  CHECK(code_of([] { parse_config(R"({"partition": {"blocks": 2, "mutual_length": 3}})"); }) ==
        ErrorCode::config);
  CHECK(code_of([] { load_config("/nonexistent/config.json"); }) == ErrorCode::not_found);
}

TEST_CASE("config hash is a stable FNV-1a digest") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  const fs::path d = scratch("hash");
  const fs::path p = write_config(d, tiny(d / "run"));
  CHECK(config_hash(p.string()) == fnv1a_hex(slurp(p)));
}

TEST_CASE("eval without a checkpoint fails cleanly and writes nothing") {
  const fs::path d = scratch("eval_missing");
  const fs::path out = d / "run";
  const fs::path p = write_config(d, tiny(out));
  RunOptions o;
  o.quiet = true;
  o.checkpoint = (d / "missing.json").string();
  CHECK(code_of([&] { run_experiment(p.string(), Command::eval, o); }) == ErrorCode::not_found);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("train then eval writes a complete report") {
  const fs::path d = scratch("train");
  const fs::path out = d / "run";
  const fs::path p = write_config(d, tiny(out));
  RunOptions o;
  o.quiet = true;
  run_experiment(p.string(), Command::train, o);
  for (const char* f : {"checkpoint.json", "loss.csv", "grid.csv", "mse_time.csv", "slices.csv",
                        "report.json"})
    CHECK(fs::exists(out / f));
  const json rep = json::parse(slurp(out / "report.json"));
  CHECK(rep["config_hash"] == config_hash(p.string()));
  CHECK(rep["seed"] == 2);
  CHECK(rep["metrics"]["grid_points"] == 17 * 21);
  for (const char* k : {"r2", "mse", "relative_error", "per_block_mse", "transition_ratios"})
    CHECK(rep["metrics"].contains(k));
  for (const char* k : {"ic", "pde_1", "pde_2", "bc_1", "bc_2", "mutual_12", "total"})
    CHECK(rep["final_loss"].contains(k));
  const std::string loss = slurp(out / "loss.csv");
  CHECK(loss.rfind("epoch,ic,pde_1,pde_2,bc_1,bc_2,mutual_12,total,seconds\n", 0) == 0);
  CHECK(std::count(loss.begin(), loss.end(), '\n') == 4);

  const std::string report_before = slurp(out / "report.json");
  o.spacing = 0.5;
  run_experiment(p.string(), Command::eval, o);
  const json ev = json::parse(slurp(out / "report.json"));
  CHECK(ev["command"] == "eval");
  CHECK(ev["metrics"]["grid_points"] == 9 * 11);
  CHECK(ev["epochs"] == 3);
  (void)report_before;
}

TEST_CASE("seed override changes the run") {
  const fs::path d = scratch("seed");
  const fs::path p = write_config(d, tiny(d / "run"));
  RunOptions o;
  o.quiet = true;
  o.seed = 9;
  run_experiment(p.string(), Command::train, o);
  CHECK(json::parse(slurp(d / "run" / "report.json"))["seed"] == 9);
}

TEST_CASE("sweeps emit one matrix per table") {
  const fs::path d = scratch("sweep");
  json j = tiny(d / "run");
  j["training"]["epochs"] = 1;
  const fs::path p = write_config(d, j);
  RunOptions o;
  o.quiet = true;
  o.table = 1;
  run_experiment(p.string(), Command::sweep, o);
  const std::string t1 = slurp(d / "run" / "sweep_table1.csv");
  CHECK(t1.rfind("blocks,none,2\n", 0) == 0);
  CHECK(std::count(t1.begin(), t1.end(), '\n') == 3);
  // Three blocks cannot share two seconds of overlap: the cell is reported, not fatal.
  CHECK(t1.find("\n3,") != std::string::npos);
  CHECK(t1.find(",nan\n") != std::string::npos);
  o.table = 2;
  run_experiment(p.string(), Command::sweep, o);
  const std::string t2 = slurp(d / "run" / "sweep_table2.csv");
  CHECK(std::count(t2.begin(), t2.end(), '\n') == 3);
  CHECK(t2.find("[TA TA TA]") != std::string::npos);
  CHECK(t2.find("[2.55 2.55 2.55]") != std::string::npos);
}

TEST_CASE("noise command writes one row per sigma and block") {
  const fs::path d = scratch("noise");
  const fs::path p = write_config(d, tiny(d / "run"));
  RunOptions o;
  o.quiet = true;
  run_experiment(p.string(), Command::noise, o);
  const std::string csv = slurp(d / "run" / "noise.csv");
  CHECK(csv.rfind("sigma,block,mse,log10_mse,final_mutual\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}
