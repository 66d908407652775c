#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "trapsim/config.hpp"
#include "trapsim/io.hpp"

using namespace trapsim;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST(ConfigParse, SectionsFlattenAndTypesHold) {
  Config c = Config::parse(
      "# a comment\n"
      "experiment = \"hydro\"   # trailing comment\n"
      "output = \"out/run #1\"\n"
      "\n"
      "[params]\n"
      "N = [64, 256]\n"
      "gamma = 1.5\n"
      "replicas = 200\n"
      "bouchaud = false\n"
      "tags = [\"a\", \"b,c\"]\n");
  EXPECT_EQ(c.get_string("experiment"), "hydro");
  EXPECT_EQ(c.get_string("output"), "out/run #1");
  EXPECT_EQ(c.get_double("params.gamma"), 1.5);
  EXPECT_EQ(c.get_int("params.replicas"), 200);
  EXPECT_FALSE(c.get_bool("params.bouchaud"));
  std::vector<long long> ns = c.get_int_list("params.N");
  ASSERT_EQ(ns.size(), 2u);
  EXPECT_EQ(ns[0], 64);
  EXPECT_EQ(ns[1], 256);
  // quoted commas stay inside one element
  const ConfigValue& tags = c.entries().at("params.tags");
  ASSERT_EQ(tags.items.size(), 2u);
  EXPECT_EQ(tags.items[1].s, "b,c");
  EXPECT_TRUE(c.has("params.N"));
  EXPECT_FALSE(c.has("params.missing"));
}

TEST(ConfigParse, FallbacksAndIntegerRules) {
  Config c = Config::parse("x = 3\ny = 2.5\n");
  EXPECT_EQ(c.get_int("x"), 3);
  EXPECT_EQ(c.get_int("absent", 7), 7);
  EXPECT_EQ(c.get_double("absent", 0.25), 0.25);
  EXPECT_EQ(c.get_string("absent", "d"), "d");
  EXPECT_TRUE(c.get_bool("absent", true));
  EXPECT_THROW(c.get_int("y"), std::runtime_error);       // not integral
  EXPECT_THROW(c.get_string("x"), std::runtime_error);    // wrong type
  EXPECT_THROW(c.get_bool("x"), std::runtime_error);
  EXPECT_THROW(c.get_double("missing"), std::runtime_error);
  EXPECT_THROW(c.get_double_list("x"), std::runtime_error);
}

TEST(ConfigParse, SyntaxErrorsCarryLineNumbers) {
  EXPECT_THROW(Config::parse("a b c\n"), std::runtime_error);
  EXPECT_THROW(Config::parse("[open\n"), std::runtime_error);
  EXPECT_THROW(Config::parse("k = [1, 2\n"), std::runtime_error);
  EXPECT_THROW(Config::parse("k = [1,, 2]\n"), std::runtime_error);
  EXPECT_THROW(Config::parse("k =\n"), std::runtime_error);
  EXPECT_THROW(Config::parse("k = nonsense\n"), std::runtime_error);
  EXPECT_THROW(Config::parse("k = 1\nk = 2\n"), std::runtime_error);
  EXPECT_THROW(Config::parse("bad key = 1\n"), std::runtime_error);
  EXPECT_THROW(Config::parse("k = \"unterminated\n"), std::runtime_error);
  try {
    Config::parse("ok = 1\nbroken\n");
    FAIL() << "expected parse failure";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  // an empty array is legal
  Config c = Config::parse("k = []\n");
  EXPECT_TRUE(c.get_int_list("k").empty());
}

TEST(ConfigParse, LoadFromFileAndMissingFile) {
  std::string path = temp_path("trapsim_cfg_test.toml");
  {
    std::ofstream out(path, std::ios::trunc);
    out << "experiment = \"env-check\"\n";
  }
  Config c = Config::load(path);
  EXPECT_EQ(c.get_string("experiment"), "env-check");
  std::remove(path.c_str());
  EXPECT_THROW(Config::load(path), std::runtime_error);
}

TEST(CsvWriter, ExactBytesAndWidthCheck) {
  Table t;
  t.header = {"a", "b"};
  auto& r1 = t.add_row();
  r1 = {cell(1), cell(0.1)};
  auto& r2 = t.add_row();
  r2 = {cell(-3LL), cell(std::string("x"))};
  std::string path = temp_path("trapsim_csv_test.csv");
  write_csv(path, t);
  EXPECT_EQ(slurp(path), "a,b\n1,0.10000000000000001\n-3,x\n");
  std::remove(path.c_str());

  Table bad;
  bad.header = {"a", "b"};
  bad.add_row().push_back("only-one");
  EXPECT_THROW(write_csv(path, bad), std::runtime_error);
}

TEST(CsvWriter, FullPrecisionRoundTrip) {
  for (double v : {1.0 / 3.0, 2.2250738585072014e-308, 6.02214076e23, -0.0,
                   123456789.123456789, 5e-324}) {
    std::string s = format_full(v);
    EXPECT_EQ(std::strtod(s.c_str(), nullptr), v) << s;
  }
}

TEST(DensityBinary, RoundTripAndTruncation) {
  DensityField df;
  df.times = {0.0, 0.5};
  df.u = {{1.0, 2.0, 3.0}, {0.25, 0.5, 0.125}};
  std::string path = temp_path("trapsim_density_test.bin");
  write_density_binary(path, df, 3);
  DensityMatrix m = read_density_binary(path);
  EXPECT_EQ(m.N, 3u);
  EXPECT_EQ(m.n_times, 2u);
  ASSERT_EQ(m.values.size(), 6u);
  for (int k = 0; k < 2; ++k)
    for (int x = 0; x < 3; ++x)
      EXPECT_EQ(m.values[static_cast<std::size_t>(3 * k + x)],
                df.u[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)]);

  // 8-byte header: N = 3, n_times = 2, little-endian
  std::string bytes = slurp(path);
  ASSERT_EQ(bytes.size(), 8u + 48u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 3);
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 2);

  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes.substr(0, 20);
  }
  EXPECT_THROW(read_density_binary(path), std::runtime_error);
  std::remove(path.c_str());
  EXPECT_THROW(read_density_binary(path), std::runtime_error);

  DensityField mismatch;
  mismatch.times = {0.0};
  mismatch.u = {{1.0, 2.0}};
  EXPECT_THROW(write_density_binary(path, mismatch, 3), std::invalid_argument);
}

TEST(DensityCsv, LongFormRows) {
  DensityField df;
  df.times = {0.25};
  df.u = {{1.5, 2.5}};
  std::string path = temp_path("trapsim_density_test.csv");
  write_density_csv(path, df, 2);
  EXPECT_EQ(slurp(path), "t,x,u\n0.25,0,1.5\n0.25,1,2.5\n");
  std::remove(path.c_str());
}

TEST(SvgPlot, WritesPolylinesAndValidates) {
  PlotSeries s;
  s.label = "series";
  s.x = {1.0, 2.0, 3.0};
  s.y = {0.5, 0.25, 0.125};
  std::string path = temp_path("trapsim_plot_test.svg");
  write_svg_plot(path, "title", "x", "y", {s});
  std::string body = slurp(path);
  EXPECT_NE(body.find("<svg"), std::string::npos);
  EXPECT_NE(body.find("<polyline"), std::string::npos);
  EXPECT_NE(body.find("series"), std::string::npos);
  std::remove(path.c_str());

  PlotSeries bad;
  bad.x = {1.0};
  EXPECT_THROW(write_svg_plot(path, "t", "x", "y", {bad}), std::invalid_argument);
  EXPECT_THROW(write_svg_plot(path, "t", "x", "y", {}), std::invalid_argument);

  // constant series still renders (degenerate ranges get padded)
  PlotSeries flat;
  flat.label = "flat";
  flat.x = {1.0, 2.0};
  flat.y = {3.0, 3.0};
  write_svg_plot(path, "t", "x", "y", {flat});
  EXPECT_NE(slurp(path).find("<polyline"), std::string::npos);
  std::remove(path.c_str());
}
