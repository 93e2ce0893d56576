#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "encompass");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = encompass::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const fs::path kSource = ENCOMPASS_SOURCE_DIR;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "encompass_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// Small PQD-only manifest so the tests stay fast.
fs::path pqd_manifest() {
  const auto p = scratch("pqd.json");
  write(p, R"({"schema": "encompass.manifest/1", "name": "pqd", "dataset": "father_son",
    "models": [{"name": "M3", "spec": ")" + (kSource / "manifests/models/father_son/m3.json").string() + R"("}],
    "settings": {"n_draws": 20000, "pilot_n": 5000, "replicates": 2}})");
  return p;
}

}  // namespace

TEST(Cli, DatasetsListsFixtures) {
  const auto r = run({"datasets"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("father_son"), std::string::npos);
  EXPECT_NE(r.out.find("6x6"), std::string::npos);
  EXPECT_NE(r.out.find("5x4 x 2 strata"), std::string::npos);
  EXPECT_NE(r.out.find("3x3x3x3 x 2 strata"), std::string::npos);
}

TEST(Cli, DatasetsJsonAndDataDir) {
  const auto empty = scratch("empty_dir");
  fs::create_directories(empty);
  const auto r = run({"datasets", "--json", "--data-dir", empty.string()});
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["datasets"].size(), 3u);
  const auto with_data = run({"datasets", "--data-dir", (kSource / "data").string()});
  EXPECT_EQ(with_data.code, 0);
  EXPECT_NE(with_data.out.find("father_son.csv"), std::string::npos);
  EXPECT_EQ(run({"datasets", "--data-dir", "/no/such/dir"}).code, 1);
}

TEST(Cli, BfReportEchoesConfiguration) {
  const auto r = run({"bf", pqd_manifest().string(), "--seed", "7"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("seed=7"), std::string::npos);
  EXPECT_NE(r.out.find("alpha grid"), std::string::npos);
  EXPECT_NE(r.out.find("decisive for M3"), std::string::npos);
}

TEST(Cli, BfIsByteIdenticalOnRerun) {
  const auto a = run({"bf", pqd_manifest().string(), "--format", "json"});
  const auto b = run({"bf", pqd_manifest().string(), "--format", "json", "--threads", "3"});
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  const auto j = nlohmann::json::parse(a.out);
  EXPECT_EQ(j["schema"], "encompass.report/1");
  EXPECT_NEAR(j["models"][0]["log_bf"].get<double>(), 4.33, 0.3);
  EXPECT_EQ(j["settings"]["n_draws"], 20000);
}

TEST(Cli, LogBaseTen) {
  const auto e = nlohmann::json::parse(run({"bf", pqd_manifest().string(), "--format", "json"}).out);
  const auto d = nlohmann::json::parse(run({"bf", pqd_manifest().string(), "--format", "json", "--log-base", "10"}).out);
  EXPECT_NEAR(d["models"][0]["log_bf"].get<double>() * std::log(10.0), e["models"][0]["log_bf"].get<double>(), 1e-9);
}

TEST(Cli, OutWritesReport) {
  const auto dir = scratch("out");
  fs::remove_all(dir);
  const auto r = run({"bf", pqd_manifest().string(), "--format", "csv", "--out", dir.string()});
  ASSERT_EQ(r.code, 0);
  std::ifstream in(dir / "pqd.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), r.out);
}

TEST(Cli, SensitivitySingleKappaMatchesBf) {
  const auto bf = nlohmann::json::parse(run({"bf", pqd_manifest().string(), "--format", "json"}).out);
  const auto sens =
      nlohmann::json::parse(run({"sensitivity", pqd_manifest().string(), "--kappa", "1", "--format", "json"}).out);
  EXPECT_EQ(sens["runs"][0]["models"][0]["log_bf"], bf["models"][0]["log_bf"]);
  EXPECT_TRUE(sens["ranking_stable"].get<bool>());
}

TEST(Cli, UnboundedEstimateExitsTwo) {
  const auto p = scratch("tp2.json");
  write(p, R"({"dataset": "father_son", "models": [{"spec": ")" +
               (kSource / "manifests/models/father_son/m4.json").string() +
               R"("}], "settings": {"n_draws": 1000, "pilot_n": 500}})");
  const auto r = run({"bf", p.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("unbounded (prior side)"), std::string::npos);
}

TEST(Cli, InputErrorsExitOne) {
  EXPECT_EQ(run({"bf", "/no/such/manifest.json"}).code, 1);
  const auto p = scratch("bad_dims.json");
  write(p, R"({"dataset": "alzheimer", "models": [{"spec": {"name": "X", "logit_types": "local",
      "constraints": [{"type": "tp2", "vars": [1, 3]}]}}]})");
  const auto r = run({"bf", p.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("constraint #1"), std::string::npos) << r.err;
  const auto q = scratch("bad_key.json");
  write(q, R"({"dataset": "father_son", "models": [{"spec": {"logit_types": "local"}}], "settings": {"draws": 5}})");
  EXPECT_NE(run({"bf", q.string()}).err.find("unknown key"), std::string::npos);
  EXPECT_EQ(run({"bf"}).code, 1);
  EXPECT_EQ(run({"fit", "--dataset", "nope", "--model", "x.json"}).code, 1);
}

TEST(Cli, FitAndPosterior) {
  const auto model = (kSource / "manifests/models/father_son/m4.json").string();
  const auto f = run({"fit", "--dataset", "father_son", "--model", model});
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_NE(f.out.find("converged: yes"), std::string::npos);
  EXPECT_NE(f.out.find("lor father:son[5,5]"), std::string::npos);
  // TP2 is rare under the posterior too; PQD is not.
  const auto pqd = (kSource / "manifests/models/father_son/m3.json").string();
  const auto p = run({"posterior", "--dataset", "father_son", "--model", pqd, "--draws", "20000", "--format", "json"});
  ASSERT_EQ(p.code, 0) << p.err;
  const auto j = nlohmann::json::parse(p.out);
  EXPECT_EQ(j["eta_labels"].size(), 35u);
  EXPECT_GT(j["sample"]["acceptance"].get<double>(), 0.9);
  const auto& lower = j["sample"]["eta_lower_2.5"];
  ASSERT_EQ(lower.size(), 35u);
  for (std::size_t k = 10; k < 35; ++k) EXPECT_GE(lower[k].get<double>(), -1e-12) << k;
}

TEST(Cli, PosteriorRareModelReportsNoSummaries) {
  const auto model = (kSource / "manifests/models/father_son/m4.json").string();
  const auto p = run({"posterior", "--dataset", "father_son", "--model", model, "--draws", "2000", "--format", "json"});
  ASSERT_EQ(p.code, 0) << p.err;
  const auto j = nlohmann::json::parse(p.out);
  EXPECT_EQ(j["sample"]["accepted"].get<int>(), 0);
  EXPECT_TRUE(j["sample"]["eta_lower_2.5"].empty());
  EXPECT_FALSE(j["sample"]["warnings"].empty());
}

TEST(Cli, FitRejectsEmptyTable) {
  const auto p = scratch("zero.csv");
  write(p, "# dims: 2,2\nstratum,A1,A2,count\n");
  const auto r = run({"fit", "--dataset", p.string(), "--model",
                      (kSource / "manifests/models/father_son/m3.json").string()});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, ShippedManifestsLoad) {
  for (const auto& e : fs::recursive_directory_iterator(kSource / "manifests")) {
    if (e.path().parent_path().filename() == "ci" || e.path().parent_path() == kSource / "manifests") {
      if (e.path().extension() != ".json") continue;
      EXPECT_NO_THROW(encompass::cli::load_manifest(e.path())) << e.path();
    }
  }
}
