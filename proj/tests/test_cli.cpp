#include <catch2/catch_amalgamated.hpp>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "ritr/serialization.hpp"
#include "ritr/simulation.hpp"

using namespace ritr;

namespace {

const std::string kCli = RITR_CLI_PATH;

struct TempDir {
  std::string path;
  TempDir() {
    char tmpl[] = "/tmp/ritr_cli_XXXXXX";
    path = mkdtemp(tmpl);
  }
  std::string file(const std::string& name) const { return path + "/" + name; }
};

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

/// Simulated Model II CSV plus the schema flags that read it.
std::string make_data_csv(const TempDir& dir, int n, int replicate = 0) {
  Scenario sc;
  sc.family = TruthFamily::model_II;
  sc.n = n;
  const auto [data, truth] = generate(sc, replicate);
  std::ostringstream out;
  save_csv(data, out);
  const std::string path = dir.file("data.csv");
  write_file(path, out.str());
  return path;
}

const std::string kSchemaFlags =
    " --outcome y --treatment a --covariates x1,x2,x3 --propensity column:prop1";

}  // namespace

TEST_CASE("cli fit writes a loadable model and a manifest") {
  TempDir dir;
  const std::string data = make_data_csv(dir, 300);
  const std::string model = dir.file("model.json");
  const int rc = run("fit --data " + data + kSchemaFlags +
                     " --loss pinball:0.5 --contrast \"linear(*)\" --baseline \"linear(*)\""
                     " --out " + model + " --report " + dir.file("report.txt"));
  REQUIRE(rc == 0);
  const json doc = json::parse(file_bytes(model));
  const FittedModel fitted = model_from_json(doc);
  CHECK(fitted.loss.kind == LossKind::pinball);
  CHECK(fitted.beta[0].size() == 4);
  CHECK(doc.contains("schema"));
  const json manifest = json::parse(file_bytes(model + ".manifest.json"));
  CHECK(manifest["command"] == "fit");
  CHECK(manifest["outputs"].size() == 2);
  CHECK(manifest.contains("config_hash"));
}

TEST_CASE("cli fit rejects bad inputs with exit 2") {
  TempDir dir;
  const std::string data = make_data_csv(dir, 50);
  CHECK(run("fit --data " + data + kSchemaFlags +
            " --loss hinge:1 --contrast \"linear(*)\" --baseline \"linear(*)\"") == 2);
  CHECK(run("fit --data " + data + kSchemaFlags +
            " --contrast \"linear(zz)\" --baseline \"linear(*)\"") == 2);
  CHECK(run("fit --data /nonexistent.csv" + kSchemaFlags +
            " --contrast \"linear(*)\" --baseline \"linear(*)\"") == 2);
  CHECK(run("fit --data " + data) == 2);  // missing required flags
}

TEST_CASE("cli recommend applies the rule and validates dimensions") {
  TempDir dir;
  FittedModel m;
  m.spec.baseline_map = FeatureMap::linear(3);
  m.spec.contrast_map = FeatureMap::linear(3);
  m.beta = {Eigen::VectorXd(4)};
  m.beta[0] << 0.0, 1.0, -1.0, 1.0;
  m.gamma = Eigen::VectorXd::Zero(4);
  m.diagnostics.converged = true;
  m.diagnostics.final_objective = 0.0;
  m.diagnostics.final_grad_norm = 0.0;
  const std::string model = dir.file("rule.json");
  write_file(model, to_json(m, {"x1", "x2", "x3"}).dump());

  write_file(dir.file("new.csv"), "x1,x2,x3\n1,1,1\n0,0,0\n");
  const std::string out = dir.file("rec.csv");
  REQUIRE(run("recommend --model " + model + " --covariates-csv " + dir.file("new.csv") +
              " --out " + out) == 0);
  CHECK(file_bytes(out) == "row,contrast,treatment\n1,1,1\n2,0,0\n");

  write_file(dir.file("short.csv"), "x1,x2\n1,1\n");
  CHECK(run("recommend --model " + model + " --covariates-csv " + dir.file("short.csv") +
            " --out " + dir.file("r2.csv")) == 2);
}

TEST_CASE("cli evaluate runs both estimators and flags empty concordance") {
  TempDir dir;
  const std::string data = make_data_csv(dir, 400);
  const std::string model = dir.file("model.json");
  REQUIRE(run("fit --data " + data + kSchemaFlags +
              " --loss squared --contrast \"linear(*)\" --baseline \"linear(*)\" --out " +
              model) == 0);
  const std::string out = dir.file("value.csv");
  REQUIRE(run("evaluate --data " + data + " --model " + model + " --out " + out) == 0);
  std::istringstream csv(file_bytes(out));
  std::string header, ipwe_line, aipwe_line;
  std::getline(csv, header);
  std::getline(csv, ipwe_line);
  std::getline(csv, aipwe_line);
  CHECK(header == "estimator,value,se,ci_low,ci_high");
  double vi, si, va, sa;
  REQUIRE(std::sscanf(ipwe_line.c_str(), "ipwe,%lf,%lf", &vi, &si) == 2);
  REQUIRE(std::sscanf(aipwe_line.c_str(), "aipwe,%lf,%lf", &va, &sa) == 2);
  CHECK(std::abs(vi - va) <= 3.0 * std::sqrt(si * si + sa * sa));

  // a rule that always treats, against data where nobody was treated
  FittedModel always;
  always.spec.baseline_map = FeatureMap::linear(3);
  always.spec.contrast_map = FeatureMap::linear(3);
  always.beta = {Eigen::VectorXd(4)};
  always.beta[0] << 1.0, 0.0, 0.0, 0.0;
  always.gamma = Eigen::VectorXd::Zero(4);
  always.diagnostics.converged = true;
  always.diagnostics.final_objective = 0.0;
  always.diagnostics.final_grad_norm = 0.0;
  const std::string amodel = dir.file("always.json");
  json adoc = to_json(always, {"x1", "x2", "x3"});
  adoc["schema"] = json::parse(file_bytes(model)).at("schema");
  write_file(amodel, adoc.dump());

  Scenario sc;
  sc.family = TruthFamily::model_II;
  sc.n = 30;
  auto [untreated, truth] = generate(sc, 1);
  untreated.a.setZero();
  std::ostringstream buf;
  save_csv(untreated, buf);
  write_file(dir.file("untreated.csv"), buf.str());
  CHECK(run("evaluate --data " + dir.file("untreated.csv") + " --model " + amodel +
            " --estimator ipwe --out " + dir.file("v2.csv")) == 4);
}

TEST_CASE("cli bootstrap is seed-deterministic") {
  TempDir dir;
  const std::string data = make_data_csv(dir, 250);
  const std::string model = dir.file("model.json");
  REQUIRE(run("fit --data " + data + kSchemaFlags +
              " --loss squared --contrast \"linear(*)\" --baseline \"linear(*)\" --out " +
              model) == 0);
  const std::string b1 = dir.file("b1.csv");
  const std::string b2 = dir.file("b2.csv");
  REQUIRE(run("bootstrap --data " + data + " --model " + model + " --B 25 --seed 42 --out " +
              b1) == 0);
  REQUIRE(run("bootstrap --data " + data + " --model " + model +
              " --B 25 --seed 42 --jobs 2 --out " + b2) == 0);
  CHECK(file_bytes(b1) == file_bytes(b2));

  // env fallback seed
  const std::string b3 = dir.file("b3.csv");
  const std::string cmd = "ROBUST_ITR_SEED=42 " + kCli + " bootstrap --data " + data +
                          " --model " + model + " --B 25 --out " + b3 + " >/dev/null 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(file_bytes(b3) == file_bytes(b1));
}

TEST_CASE("cli simulate writes tables, a manifest, and is deterministic") {
  TempDir dir;
  write_file(dir.file("cfg.json"), R"({
    "replications": 4,
    "validation_size": 500,
    "seed": 7,
    "n_values": [100],
    "methods": ["ls", "pinball:0.5"],
    "scenarios": [
      {"family": "model_II", "error": "normal", "sigma": "homogeneous", "n": 100},
      {"family": "interaction", "error": "gamma_centered", "sigma": "treatment_interacted",
       "d0": 10, "n": 100}
    ]
  })");
  REQUIRE(run("simulate --config " + dir.file("cfg.json") + " --out-dir " + dir.path) == 0);
  const std::string first = file_bytes(dir.file("scenarios.csv"));
  CHECK(first.find("model_II") != std::string::npos);
  CHECK(first.find("delta_0.25") != std::string::npos);
  const json manifest = json::parse(file_bytes(dir.file("manifest.json")));
  CHECK(manifest["seed"] == 7);

  // flat metric records alongside the csv
  const json records = json::parse(file_bytes(dir.file("scenarios.json")));
  REQUIRE(records.is_array());
  REQUIRE(!records.empty());
  CHECK(records[0].contains("scenario"));
  CHECK(records[0].contains("metric"));
  CHECK(records[0].contains("value"));
  CHECK(records[0].contains("mc_se"));

  REQUIRE(run("simulate --config " + dir.file("cfg.json") + " --out-dir " + dir.path +
              " --jobs 2") == 0);
  CHECK(file_bytes(dir.file("scenarios.csv")) == first);

  write_file(dir.file("bad.json"), R"({
    "scenarios": [{"family": "model_I", "error": "normal",
                   "sigma": "treatment_interacted", "n": 100}]
  })");
  CHECK(run("simulate --config " + dir.file("bad.json") + " --out-dir " + dir.path) == 2);
}

TEST_CASE("cli fit smoke-runs on the bundled synthetic sample") {
  TempDir dir;
  const std::string model = dir.file("sample_model.json");
  REQUIRE(run(std::string("fit --data ") + RITR_DATA_DIR + "/synthetic_sample.csv" +
              " --outcome y --treatment a --covariates x1,x2,x3 --propensity column:prop1"
              " --loss pinball:0.5 --contrast \"linear(*)\" --baseline \"linear(*)\" --out " +
              model) == 0);
  const json doc = json::parse(file_bytes(model));
  CHECK(doc["diagnostics"]["converged"] == true);
  CHECK(doc["loss"]["kind"] == "pinball");
}

TEST_CASE("cli simulate runs a named table preset at smoke scale") {
  TempDir dir;
  write_file(dir.file("cfg.json"), R"({
    "tables": ["table3"],
    "replications": 2,
    "validation_size": 300,
    "seed": 3,
    "n_values": [100],
    "methods": ["ls"]
  })");
  REQUIRE(run("simulate --config " + dir.file("cfg.json") + " --out-dir " + dir.path) == 0);
  const std::string csv = file_bytes(dir.file("table3.csv"));
  CHECK(csv.find("interaction") != std::string::npos);
  CHECK(csv.find("gamma_centered") != std::string::npos);
  // delta-only table: no mse rows
  CHECK(csv.find(",mse,") == std::string::npos);
}
