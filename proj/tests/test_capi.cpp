#include "doctest.h"

#include "mirnn/mirnn.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const std::string data = MIRNN_TEST_DATA;

// Runs in a private working directory so relative output dirs stay contained.
struct WorkDir {
  fs::path old = fs::current_path();
  fs::path dir = fs::temp_directory_path() / "mirnn_capi";
  WorkDir() {
    fs::remove_all(dir);
    fs::create_directories(dir);
    fs::current_path(dir);
  }
  ~WorkDir() { fs::current_path(old); }
};

}  // namespace

TEST_CASE("version and null handling") {
  CHECK(std::string(mirnn_version()).size() > 0);
  mirnn_experiment* e = nullptr;
  CHECK(mirnn_experiment_open(nullptr, &e) == MIRNN_ERROR_ARGUMENT);
  CHECK(mirnn_experiment_set_seed(nullptr, 1) == MIRNN_ERROR_ARGUMENT);
  CHECK(mirnn_experiment_run(nullptr, MIRNN_TRAIN) == MIRNN_ERROR_ARGUMENT);
  CHECK(mirnn_model_coords(nullptr) == 0);
  mirnn_experiment_close(nullptr);
  mirnn_model_close(nullptr);
}

TEST_CASE("errors map to status codes with a message") {
  mirnn_experiment* e = nullptr;
  CHECK(mirnn_experiment_open((data + "/invalid.json").c_str(), &e) == MIRNN_ERROR_CONFIG);
  CHECK(e == nullptr);
  const std::string msg = mirnn_last_error();
  CHECK(msg.find("problem.mu") != std::string::npos);
  CHECK(msg.find("partition.blocks") != std::string::npos);
  CHECK(mirnn_experiment_open((data + "/absent.json").c_str(), &e) == MIRNN_ERROR_NOT_FOUND);
}

TEST_CASE("train, load and predict through the C API") {
  WorkDir wd;
  mirnn_experiment* e = nullptr;
  REQUIRE(mirnn_experiment_open((data + "/tiny.json").c_str(), &e) == MIRNN_OK);
  CHECK(std::string(mirnn_experiment_output_dir(e)) == "tiny_run");
  CHECK(mirnn_experiment_set_quiet(e, 1) == MIRNN_OK);
  CHECK(mirnn_experiment_set_table(e, 7) == MIRNN_ERROR_CONFIG);
  CHECK(mirnn_experiment_set_spacing(e, -1.0) == MIRNN_ERROR_CONFIG);
  CHECK(mirnn_experiment_set_checkpoint(e, "nowhere.json") == MIRNN_OK);
  CHECK(mirnn_experiment_run(e, MIRNN_EVAL) == MIRNN_ERROR_NOT_FOUND);
  CHECK_FALSE(fs::exists("tiny_run"));
  REQUIRE(mirnn_experiment_run(e, MIRNN_TRAIN) == MIRNN_OK);
  mirnn_experiment_close(e);

  mirnn_model* m = nullptr;
  REQUIRE(mirnn_model_load((data + "/tiny.json").c_str(), "tiny_run/checkpoint.json", &m) ==
          MIRNN_OK);
  CHECK(mirnn_model_coords(m) == 2);
  CHECK(mirnn_model_fields(m) == 1);
  CHECK(mirnn_model_blocks(m) == 2);
  const std::vector<double> pts{0.5, 1.0, 2.0, 2.55, 3.0, 4.5};
  std::vector<double> out(3), exact(3);
  CHECK(mirnn_model_predict(m, 1, pts.data(), 3, out.data()) == MIRNN_OK);
  for (double v : out) CHECK(std::isfinite(v));
  CHECK(mirnn_model_exact(m, pts.data(), 3, exact.data()) == MIRNN_OK);
  CHECK(exact[0] == doctest::Approx(
                        2 * 0.01 * M_PI * std::sin(M_PI * 0.5) * std::exp(-0.01 * M_PI * M_PI * (1.0 - 5.0)) /
                        (2 + std::cos(M_PI * 0.5) * std::exp(-0.01 * M_PI * M_PI * (1.0 - 5.0)))));
  CHECK(mirnn_model_predict(m, 5, pts.data(), 3, out.data()) == MIRNN_ERROR_ARGUMENT);
  // A point outside the time domain is a domain error, reported generically.
  const std::vector<double> late{1.0, 9.0};
  CHECK(mirnn_model_predict(m, 1, late.data(), 1, out.data()) == MIRNN_ERROR);
  mirnn_model_close(m);
}
