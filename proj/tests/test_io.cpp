#include "nexon/io.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace nexon;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("nexon_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(DataCsv, RoundTripIsExact) {
  const auto dir = scratch("csv");
  std::mt19937_64 rng(1);
  const Matrix m = nexon::testing::random_matrix(9, 4, rng) * 1e3;
  io::write_data_csv(dir / "a.csv", {"g1", "g2", "g3", "g4"}, m);
  const auto t = io::read_data_csv(dir / "a.csv");
  EXPECT_EQ(t.names, (std::vector<std::string>{"g1", "g2", "g3", "g4"}));
  EXPECT_EQ(t.values, m);
}

TEST(DataCsv, RaggedAndNonNumericRowsAreErrors) {
  const auto dir = scratch("csv_bad");
  io::write_text(dir / "r.csv", "a,b\n1,2\n3\n");
  EXPECT_THROW(io::read_data_csv(dir / "r.csv"), DataError);
  io::write_text(dir / "n.csv", "a,b\n1,2\n3,x\n");
  EXPECT_THROW(io::read_data_csv(dir / "n.csv"), DataError);
  io::write_text(dir / "c.csv", "a,b\n1,2\n3,4,5\n");
  EXPECT_THROW(io::read_data_csv(dir / "c.csv"), DataError);
  io::write_text(dir / "f.csv", "a,b\n1,nan\n");
  EXPECT_THROW(io::read_data_csv(dir / "f.csv"), DataError);
}

TEST(Manifest, LoadsGroupsAndNamesMismatchedFiles) {
  const auto dir = scratch("manifest");
  io::write_data_csv(dir / "l1.csv", {"x", "y"}, Matrix::Ones(3, 2));
  io::write_data_csv(dir / "l2.csv", {"x", "y"}, Matrix::Zero(4, 2));
  io::write_manifest(dir / "m.csv", {{"l1.csv", 1, 3}, {"l2.csv", 2, 4}});
  const auto ds = io::load_dataset(dir / "m.csv");
  EXPECT_EQ(ds.num_levels(), 2u);
  EXPECT_EQ(ds.groups[1].level.value, 2);
  EXPECT_EQ(ds.variable_names, (std::vector<std::string>{"x", "y"}));

  io::write_data_csv(dir / "l3.csv", {"x", "y", "z"}, Matrix::Zero(4, 3));
  io::write_manifest(dir / "bad.csv", {{"l1.csv", 1, 3}, {"l3.csv", 2, 4}});
  try {
    io::load_dataset(dir / "bad.csv");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("l1.csv"), std::string::npos);
    EXPECT_NE(msg.find("l3.csv"), std::string::npos);
  }
  io::write_manifest(dir / "count.csv", {{"l1.csv", 1, 5}});
  EXPECT_THROW(io::load_dataset(dir / "count.csv"), DataError);
}

TEST(KeyValueConfig, ParsesAndRejectsUnknownKeys) {
  const auto kv = io::KeyValueConfig::parse("# comment\nalpha = 2.5\nlist = 1, 2,3\n\nflag=true\n");
  EXPECT_NO_THROW(kv.reject_unknown({"alpha", "list", "flag"}));
  EXPECT_THROW(kv.reject_unknown({"alpha", "list"}), ConfigError);
  double a = 0;
  kv.read("alpha", a);
  EXPECT_EQ(a, 2.5);
  bool f = false;
  kv.read("flag", f);
  EXPECT_TRUE(f);
  EXPECT_EQ(*kv.list("list"), (std::vector<double>{1, 2, 3}));
  EXPECT_THROW(io::KeyValueConfig::parse("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(io::KeyValueConfig::parse("no equals sign\n"), ConfigError);
  int n = 0;
  EXPECT_THROW(io::KeyValueConfig::parse("n = 1.5\n").read("n", n), ConfigError);
}

TEST(JsonSchema, RejectsUnknownMajorVersion) {
  io::Json doc{{"schema_version", "2.0"}, {"kind", "fit"}};
  EXPECT_THROW(io::check_schema(doc, "fit", "doc"), DataError);
  doc["schema_version"] = "1.7";
  EXPECT_NO_THROW(io::check_schema(doc, "fit", "doc"));
  EXPECT_THROW(io::check_schema(doc, "truth", "doc"), DataError);
  EXPECT_THROW(io::check_schema(io::Json{{"kind", "fit"}}, "fit", "doc"), DataError);
}

TEST(FitDocument, RoundTrip) {
  io::FitDocument f;
  f.method = "nexon";
  f.variable_names = {"a", "b", "c"};
  f.levels = {1, 2};
  f.nu0 = {0.01, 0.02};
  std::mt19937_64 rng(2);
  for (int k = 0; k < 2; ++k) {
    f.ppi.push_back(nexon::testing::random_matrix(3, 3, rng));
    f.omega.push_back(nexon::testing::random_matrix(3, 3, rng));
  }
  f.beta_mean = nexon::testing::random_matrix(3, 3, rng);
  f.elbo_traces = {{-10.5, -9.25}};
  f.converged = {true};
  f.iterations = {2};
  f.hyperparameters = {{"nu1", 1.0}};
  const auto doc = io::fit_to_json(f);
  const auto g = io::fit_from_json(io::Json::parse(doc.dump()));
  EXPECT_EQ(g.ppi, f.ppi);
  EXPECT_EQ(g.omega, f.omega);
  EXPECT_EQ(*g.beta_mean, *f.beta_mean);
  EXPECT_FALSE(g.zeta_mean.has_value());
  EXPECT_EQ(g.elbo_traces, f.elbo_traces);
  EXPECT_EQ(g.levels, f.levels);
}
