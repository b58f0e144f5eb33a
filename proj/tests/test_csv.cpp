#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "aipw/csv.hpp"

using namespace aipw;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("format_double round-trips bit-exactly") {
  for (double v : {0.0, 1.0, -1.0, 0.1, 1.0 / 3.0, 1e-300, 1e300, 3.141592653589793,
                   -2.2250738585072014e-308}) {
    const std::string s = format_double(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(2.0) == "2");
}

TEST_CASE("write_csv emits LF rows and replaces atomically") {
  CsvTable t;
  t.header = {"a", "b"};
  t.rows = {{"1", "x"}, {"2", "y"}};
  const auto path = temp_path("aipw_csv_test.csv");
  write_csv(t, path);
  CHECK(slurp(path) == "a,b\n1,x\n2,y\n");
  // overwrite with new content; no .tmp remnants
  t.rows = {{"3", "z"}};
  write_csv(t, path);
  CHECK(slurp(path) == "a,b\n3,z\n");
  CHECK(!std::filesystem::exists(path.string() + ".tmp"));
  std::filesystem::remove(path);
}

TEST_CASE("write_csv accepts an empty table and rejects ragged rows") {
  CsvTable empty;
  empty.header = {"only", "header"};
  const auto path = temp_path("aipw_csv_empty.csv");
  write_csv(empty, path);
  CHECK(slurp(path) == "only,header\n");
  std::filesystem::remove(path);

  CsvTable ragged;
  ragged.header = {"a", "b"};
  ragged.rows = {{"1"}};
  CHECK_THROWS_AS(write_csv(ragged, temp_path("aipw_csv_bad.csv")), std::invalid_argument);
}
