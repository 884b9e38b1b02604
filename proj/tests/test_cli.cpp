#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "survey/cli.hpp"
#include "survey/population.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "survey");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = survey::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string data(const std::string& name) { return std::string(SURVEY_DATA_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("survey_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, InclusionSymmetric) {
  const auto pop = write("p.csv", "x,p\n1,0.5\n2,0.5\n3,0.5\n");
  const auto r = run({"inclusion", "--pop", pop, "--n", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "unit,p,pi");
  while (std::getline(lines, line)) {
    const double pi = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_NEAR(pi, 2.0 / 3.0, 1e-15);
  }
}

TEST_F(CliTest, InclusionRoundTripsThroughInverse) {
  const auto fwd = run({"inclusion", "--pop", data("small_n6.csv"), "--n", "3", "--out", path("fwd.csv"),
                        "--pairs-out", path("pairs.csv")});
  ASSERT_EQ(fwd.code, 0) << fwd.err;
  EXPECT_TRUE(fs::exists(path("pairs.csv")));
  // Reuse the pi column as input to the inverse map.
  std::ifstream in(path("fwd.csv"));
  std::string line, text = "x,pi\n";
  std::vector<double> p;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    p.push_back(std::stod(line.substr(a + 1, b - a - 1)));
    text += "1," + line.substr(b + 1) + "\n";
  }
  const auto inv = run({"inclusion", "--pop", write("pi.csv", text), "--n", "3", "--direction", "inverse"});
  ASSERT_EQ(inv.code, 0) << inv.err;
  std::istringstream out(inv.out);
  std::getline(out, line);
  for (double expected : p) {
    std::getline(out, line);
    const auto a = line.find(','), b = line.rfind(',');
    EXPECT_NEAR(std::stod(line.substr(a + 1, b - a - 1)), expected, 1e-8);
  }
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({"inclusion", "--pop", data("small_n6.csv"), "--n", "6"}).code, 2);
  EXPECT_EQ(run({"inclusion", "--pop", data("small_n6.csv"), "--n", "9"}).code, 2);
  EXPECT_EQ(run({"sample", "--pop", path("missing.csv"), "--scheme", "swor", "--n", "2"}).code, 2);
  EXPECT_EQ(run({"sample", "--pop", data("small_n6.csv"), "--scheme", "bogus", "--n", "2"}).code, 2);
  EXPECT_EQ(run({"bounds", "--pop", data("small_n6.csv"), "--scheme", "swor", "--n", "2", "--t-grid", "0:1"}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, NoPartialOutputOnError) {
  const auto r = run({"verify", "--pop", data("swor_n100.csv"), "--scheme", "swor", "--n", "20",
                      "--checks", "nonsense", "--out", path("report.csv")});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(path("report.csv")));
  EXPECT_FALSE(fs::exists(path("report.csv.tmp")));
}

TEST_F(CliTest, SampleAndEstimate) {
  const auto s = run({"sample", "--pop", data("small_n6.csv"), "--scheme", "rejective", "--n", "3", "--reps", "4"});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_EQ(std::count(s.out.begin(), s.out.end(), '\n'), 1 + 4 * 3);
  const auto e = run({"estimate", "--pop", data("swor_n100.csv"), "--scheme", "swor", "--n", "20", "--reps", "3",
                      "--profile-out", path("profile.txt")});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(e.out.substr(0, e.out.find('\n')), "replication,size,ht_pi,ht_p");
  EXPECT_NE(slurp(path("profile.txt")).find("d_N=16"), std::string::npos);
}

TEST_F(CliTest, BoundsLongFormat) {
  const auto r = run({"bounds", "--pop", data("small_n6.csv"), "--scheme", "rejective", "--n", "3",
                      "--t-grid", "0:10:5", "--constant-C", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1 + 6 * 5);
  EXPECT_NE(r.out.find("rejective-bennett,0,2,1,uncalibrated-constant"), std::string::npos);
  EXPECT_NE(r.out.find("na-bennett,0,2,1,\n"), std::string::npos);
}

TEST_F(CliTest, CiWithTrivialLevelHasZeroRadius) {
  const auto r = run({"ci", "--pop", data("poisson_n200.csv"), "--scheme", "poisson", "--delta", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("radius=0\n"), std::string::npos);
  const auto r2 = run({"ci", "--pop", data("poisson_n200.csv"), "--scheme", "poisson", "--delta", "0.05"});
  EXPECT_EQ(r2.out.find("radius=0\n"), std::string::npos);
}

TEST_F(CliTest, VerifySworPassesAndIsByteIdentical) {
  const std::vector<std::string> base{"verify", "--pop", data("swor_n100.csv"), "--scheme", "swor", "--n", "20",
                                      "--reps", "5000", "--seed", "11"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", path("a.csv"), "--summary", path("a.txt"), "--workers", "1"});
  b.insert(b.end(), {"--out", path("b.csv"), "--summary", path("b.txt"), "--workers", "3"});
  const auto ra = run(a), rb = run(b);
  ASSERT_EQ(ra.code, 0) << ra.err << slurp(path("a.txt"));
  ASSERT_EQ(rb.code, 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_EQ(slurp(path("a.txt")), slurp(path("b.txt")));
  const std::string csv = slurp(path("a.csv"));
  for (const char* check : {"unbiasedness", "pathwise-bias", "local-limit", "variance-identity", "size-distribution",
                            "tail:na-bennett", "sufficient-constant:rejective-bennett", "sharpness:bennett"}) {
    EXPECT_NE(csv.find(check), std::string::npos) << check;
  }
}

TEST_F(CliTest, CompareReportsPinsker) {
  const auto r = run({"compare", "--pop", data("small_n6.csv"), "--n", "3", "--tails-out", path("tails.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "reference,approximation,l1,kl,sqrt_2kl,pinsker,max_tail_gap,transfer");
  std::vector<std::string> cells;
  std::stringstream ss(row);
  for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
  ASSERT_EQ(cells.size(), 8u);
  EXPECT_LE(std::stod(cells[2]), std::stod(cells[4]));
  EXPECT_EQ(cells[5], "1");
  EXPECT_EQ(cells[7], "1");
  EXPECT_TRUE(fs::exists(path("tails.csv")));
}
