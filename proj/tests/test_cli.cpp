#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <sys/wait.h>

#include "ccm/io.hpp"
#include "ccm/synth.hpp"

namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "ccm_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(CCM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

fs::path write_example_predictions() {
  // target column y, a perfect model and a noisy one
  const fs::path path = work_dir() / "perfect.csv";
  std::ofstream out(path);
  out << "good,bad,y\n";
  for (int i = 0; i < 20; ++i) {
    const double y = 0.3 * i - 2.0;
    out << ccm::format_double(y) << ',' << ccm::format_double(y + ((i % 3) - 1.0)) << ','
        << ccm::format_double(y) << '\n';
  }
  return path;
}

}  // namespace

TEST_CASE("synth emits the sampled landscape at benchmark scale") {
  const auto csv = (work_dir() / "msg4.csv").string();
  const auto json = (work_dir() / "msg4.json").string();
  REQUIRE(run("synth --dim 4 --components 160 --samples 160 --seed 42 --out " + csv +
              " --landscape-out " + json) == 0);

  const auto table = ccm::read_csv(csv);
  CHECK(table.columns == std::vector<std::string>{"x_1", "x_2", "x_3", "x_4", "y"});
  CHECK(table.values.rows() == 160);

  // the parameters file reproduces the y column exactly
  const auto land = ccm::landscape_from_json(ccm::read_json_file(json));
  const ccm::Vector again = ccm::evaluate_msg(land, table.values.leftCols(4));
  for (long i = 0; i < 160; ++i)
    CHECK(again[i] == Catch::Approx(table.values(i, 4)).margin(1e-12));
}

TEST_CASE("synth output is byte-identical across runs") {
  const auto a_csv = (work_dir() / "det_a.csv").string();
  const auto b_csv = (work_dir() / "det_b.csv").string();
  REQUIRE(run("synth --dim 2 --components 5 --samples 30 --seed 9 --out " + a_csv) == 0);
  REQUIRE(run("synth --dim 2 --components 5 --samples 30 --seed 9 --out " + b_csv) == 0);
  CHECK(slurp(a_csv) == slurp(b_csv));
  CHECK(slurp(work_dir() / "det_a.json") == slurp(work_dir() / "det_b.json"));
}

TEST_CASE("fit solves the perfect-predictor instance from a prediction matrix") {
  const auto pred = write_example_predictions().string();
  const auto out = (work_dir() / "perfect.json").string();
  REQUIRE(run("fit --data " + pred + " --target y --predictions " + pred + " --out " + out) == 0);

  const auto report = ccm::weights_report_from_json(ccm::read_json_file(out));
  REQUIRE(report.models == std::vector<std::string>{"good", "bad"});
  CHECK(report.alpha[0] == Catch::Approx(1.0).margin(1e-6));
  CHECK(report.rmse <= 1e-7);
  CHECK(report.solver == "qp");
  CHECK(report.converged);
  CHECK(report.config_echo["target"] == "y");
}

TEST_CASE("eval reproduces the fit rmse from the same predictions") {
  const auto pred = write_example_predictions().string();
  const auto report_path = (work_dir() / "rt_report.json").string();
  const auto metrics_path = (work_dir() / "rt_metrics.json").string();
  const auto pairs_path = (work_dir() / "rt_pairs.csv").string();
  REQUIRE(run("fit --data " + pred + " --target y --predictions " + pred + " --out " +
              report_path) == 0);
  REQUIRE(run("eval --weights " + report_path + " --data " + pred + " --predictions " + pred +
              " --out " + metrics_path + " --pairs-out " + pairs_path) == 0);

  const auto report = ccm::read_json_file(report_path);
  const auto metrics = ccm::read_json_file(metrics_path);
  CHECK(std::abs(metrics["rmse"].get<double>() - report["rmse"].get<double>()) <= 1e-10);

  const auto pairs = ccm::read_csv(pairs_path);
  CHECK(pairs.columns == std::vector<std::string>{"actual", "predicted"});
  CHECK(pairs.values.rows() == 20);
}

TEST_CASE("fit with the model zoo, test split and roc") {
  const auto train = (work_dir() / "zoo_train.csv").string();
  const auto test = (work_dir() / "zoo_test.csv").string();
  REQUIRE(run("synth --dim 2 --components 8 --samples 60 --seed 3 --out " + train) == 0);
  REQUIRE(run("synth --dim 2 --components 8 --samples 25 --seed 4 --out " + test) == 0);
  // note: seed 4 samples a different landscape; swap in the train landscape's values
  {
    const auto land = ccm::landscape_from_json(ccm::read_json_file(work_dir() / "zoo_train.json"));
    auto table = ccm::read_csv(test);
    table.values.col(2) = ccm::evaluate_msg(land, table.values.leftCols(2));
    ccm::write_csv(test, table.columns, table.values);
  }

  // threshold at the median test target so both label classes exist
  const std::string cutoff = [&] {
    auto table = ccm::read_csv(test);
    std::vector<double> y(table.values.col(2).data(), table.values.col(2).data() + 25);
    std::nth_element(y.begin(), y.begin() + 12, y.end());
    return ccm::format_double(y[12]);
  }();

  const auto out = (work_dir() / "zoo_report.json").string();
  REQUIRE(run("fit --data " + train + " --target y --models rbf-gaussian,knn,ridge --cv k:5"
              " --seed 1 --out " + out + " --test-file " + test + " --roc-threshold " + cutoff) == 0);
  const auto report = ccm::weights_report_from_json(ccm::read_json_file(out));
  CHECK(report.models == std::vector<std::string>{"rbf-gaussian", "knn", "ridge"});
  CHECK(report.alpha.sum() == Catch::Approx(1.0).margin(1e-9));
  REQUIRE(report.test_rmse.has_value());
  CHECK(*report.test_rmse >= 0.0);
  REQUIRE(report.roc.has_value());
  CHECK((*report.roc)["auc"].get<double>() >= 0.0);
  CHECK((*report.roc)["auc"].get<double>() <= 1.0);

  // the saved ensemble can be re-scored on new data without predictions
  const auto metrics_path = (work_dir() / "zoo_metrics.json").string();
  REQUIRE(run("eval --weights " + out + " --data " + test + " --out " + metrics_path) == 0);
  const auto metrics = ccm::read_json_file(metrics_path);
  CHECK(metrics["rmse"].get<double>() == Catch::Approx(*report.test_rmse).margin(1e-9));
}

TEST_CASE("eval with a unit point-weights file reports wrmse equal to rmse") {
  const auto pred = write_example_predictions().string();
  const auto report_path = (work_dir() / "pw_report.json").string();
  REQUIRE(run("fit --data " + pred + " --target y --predictions " + pred + " --out " +
              report_path) == 0);

  const auto ones = work_dir() / "ones.csv";
  {
    std::ofstream out(ones);
    out << "point_index,raw_density,beta\n";
    for (int i = 0; i < 20; ++i) out << i << ",1,1\n";
  }
  const auto metrics_path = (work_dir() / "pw_metrics.json").string();
  REQUIRE(run("eval --weights " + report_path + " --data " + pred + " --predictions " + pred +
              " --point-weights " + ones.string() + " --out " + metrics_path) == 0);
  const auto metrics = ccm::read_json_file(metrics_path);
  REQUIRE_FALSE(metrics["wrmse"].is_null());
  CHECK(metrics["wrmse"].get<double>() == metrics["rmse"].get<double>());
}

TEST_CASE("eval of a corner report reduces to the single column's metrics") {
  const auto pred = write_example_predictions().string();
  ccm::WeightsReport corner;
  corner.models = {"good", "bad"};
  corner.alpha = ccm::Vector(2);
  corner.alpha << 0.0, 1.0;
  corner.solver = "qp";
  corner.config_echo["target"] = "y";
  const auto report_path = (work_dir() / "corner.json").string();
  ccm::write_json_file(report_path, ccm::to_json(corner));

  const auto metrics_path = (work_dir() / "corner_metrics.json").string();
  REQUIRE(run("eval --weights " + report_path + " --data " + pred + " --predictions " + pred +
              " --out " + metrics_path) == 0);
  const auto metrics = ccm::read_json_file(metrics_path);

  const auto table = ccm::read_csv(pred);
  const double expect = ccm::rmse(table.values.col(1), table.values.col(2));  // bad vs y
  CHECK(metrics["rmse"].get<double>() == Catch::Approx(expect).margin(1e-12));
}

TEST_CASE("qp never loses to the es baseline on the same instance") {
  const auto data = (work_dir() / "duel.csv").string();
  REQUIRE(run("synth --dim 2 --components 6 --samples 40 --seed 5 --out " + data) == 0);
  const auto qp_out = (work_dir() / "duel_qp.json").string();
  const auto es_out = (work_dir() / "duel_es.json").string();
  const std::string base = "fit --data " + data + " --target y --models knn,ridge --cv k:5 --seed 2 --out ";
  REQUIRE(run(base + qp_out + " --solver qp") == 0);
  REQUIRE(run(base + es_out + " --solver es --es-budget 500") == 0);
  const auto qp = ccm::read_json_file(qp_out);
  const auto es = ccm::read_json_file(es_out);
  CHECK(qp["rmse"].get<double>() <= es["rmse"].get<double>() + 1e-12);
  CHECK(es["kkt_residual"].is_null());
  CHECK_FALSE(qp["kkt_residual"].is_null());
}

TEST_CASE("es trace export has one row per evaluation") {
  const auto pred = write_example_predictions().string();
  const auto out = (work_dir() / "trace_report.json").string();
  const auto trace = (work_dir() / "trace.csv").string();
  REQUIRE(run("fit --data " + pred + " --target y --predictions " + pred +
              " --solver es --es-budget 120 --seed 6 --out " + out + " --es-trace " + trace) == 0);
  const auto table = ccm::read_csv(trace);
  CHECK(table.values.rows() == 120);
  CHECK(table.columns.front() == "evaluation_index");
  CHECK(table.columns.back() == "objective");
}

TEST_CASE("density on a uniform grid emits unit weights") {
  const auto data = (work_dir() / "grid.csv").string();
  {
    std::ofstream out(data);
    out << "x\n";
    for (int i = 0; i < 10; ++i) out << i << '\n';
  }
  const auto out = (work_dir() / "grid_density.csv").string();
  REQUIRE(run("density --data " + data + " --density-k 1 --out " + out) == 0);
  const auto table = ccm::read_csv(out);
  REQUIRE(table.values.rows() == 10);
  for (long i = 0; i < 10; ++i) CHECK(table.values(i, 2) == 1.0);
}

TEST_CASE("density reproduces the clustered hand example through the cli") {
  const auto data = (work_dir() / "cluster.csv").string();
  {
    std::ofstream out(data);
    out << "x\n0\n0.01\n0.02\n10\n20\n30\n";
  }
  const auto out = (work_dir() / "cluster_density.csv").string();
  REQUIRE(run("density --data " + data + " --density-k 2 --out " + out) == 0);
  const auto table = ccm::read_csv(out);
  const double mean = 5.8375;  // of the k=2 median distances
  CHECK(table.values(0, 2) == Catch::Approx(0.015 / mean).epsilon(1e-13));
  CHECK(table.values(1, 2) == Catch::Approx(0.01 / mean).epsilon(1e-13));
  CHECK(table.values(2, 2) == Catch::Approx(0.015 / mean).epsilon(1e-13));
  for (long i = 3; i < 6; ++i) CHECK(table.values(i, 2) == 1.0);
}

TEST_CASE("ternary grids enumerate the barycentric lattice") {
  const auto data = (work_dir() / "tern.csv").string();
  REQUIRE(run("synth --dim 2 --components 6 --samples 30 --seed 8 --out " + data) == 0);
  const auto out = (work_dir() / "tern_grid.csv").string();
  REQUIRE(run("ternary --data " + data +
              " --target y --models rbf-gaussian,rbf-exponential,rbf-spline --cv k:5 --step 0.5"
              " --out " + out) == 0);
  const auto table = ccm::read_csv(out);
  REQUIRE(table.values.rows() == 7);  // C(4,2) = 6 grid rows plus the optimum
  double optimum = -1.0;
  double grid_min = 1e300;
  for (long i = 0; i < 7; ++i) {
    CHECK(table.values(i, 0) + table.values(i, 1) + table.values(i, 2) ==
          Catch::Approx(1.0).margin(1e-9));
    if (table.values(i, 4) == 1.0)
      optimum = table.values(i, 3);
    else
      grid_min = std::min(grid_min, table.values(i, 3));
  }
  REQUIRE(optimum >= 0.0);
  CHECK(grid_min >= optimum - 1e-9);
}

TEST_CASE("exit codes distinguish usage, data and solver failures") {
  const auto pred = write_example_predictions().string();
  CHECK(run("fit --data " + pred + " --target y") == 2);  // neither models nor predictions
  CHECK(run("fit --target y --out /tmp/x.json --models knn") == 2);  // missing --data
  CHECK(run("fit --data " + pred + " --target absent --predictions " + pred +
            " --out /tmp/x.json") == 3);
  CHECK(run("density --data /nonexistent.csv --out /tmp/x.csv") == 3);

  // a noisy instance whose optimum is not exactly representable, run with an
  // unreachable tolerance
  const auto noisy = work_dir() / "noisy.csv";
  {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::ofstream f(noisy);
    f << "m1,m2,y\n";
    for (int i = 0; i < 30; ++i)
      f << ccm::format_double(gauss(rng)) << ',' << ccm::format_double(gauss(rng)) << ','
        << ccm::format_double(gauss(rng)) << '\n';
  }
  const auto out = (work_dir() / "nonconv.json").string();
  CHECK(run("fit --data " + noisy.string() + " --target y --predictions " + noisy.string() +
            " --max-iterations 1 --kkt-tolerance 1e-300 --out " + out) == 4);
  const auto report = ccm::weights_report_from_json(ccm::read_json_file(out));
  CHECK_FALSE(report.converged);  // report still written
}

TEST_CASE("fit output is byte-identical across runs") {
  const auto pred = write_example_predictions().string();
  const auto a = (work_dir() / "fit_det_a.json").string();
  const auto b = (work_dir() / "fit_det_b.json").string();
  const std::string args = "fit --data " + pred + " --target y --predictions " + pred +
                           " --solver es --es-budget 200 --seed 11 --out ";
  REQUIRE(run(args + a) == 0);
  REQUIRE(run(args + b) == 0);
  CHECK(slurp(a) == slurp(b));
}
