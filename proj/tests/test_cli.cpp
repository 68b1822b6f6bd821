// SPDX-License-Identifier: MIT
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

// Exercises the installed binary end to end: locations come from the build
// system via CART_BIN and CART_CONFIG_DIR.

namespace {

std::string env_or_fail(const char* name) {
  const char* v = std::getenv(name);
  REQUIRE(v != nullptr);
  return v;
}

int run_cli(const std::string& args) {
  const std::string cmd =
      "\"" + env_or_fail("CART_BIN") + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string config(const char* name) {
  return (std::filesystem::path(env_or_fail("CART_CONFIG_DIR")) / name)
      .string();
}

std::filesystem::path fresh_dir(const char* name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("bad invocations exit nonzero") {
  CHECK(run_cli("") != 0);
  CHECK(run_cli("frobnicate") != 0);
  CHECK(run_cli("rate") != 0);
  const auto dir = fresh_dir("cart_cli_noconfig");
  CHECK(run_cli("rate --config /nonexistent_config.json --out \"" +
                dir.string() + "\"") != 0);
  CHECK(!std::filesystem::exists(dir / "rows.csv"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("every subcommand writes artifacts and exits zero") {
  const struct {
    const char* sub;
    const char* cfg;
  } runs[] = {
      {"rate", "rate_small.json"},
      {"coverage", "coverage_small.json"},
      {"xor", "xor_small.json"},
      {"diagnose", "diagnose_small.json"},
      {"oracle-table", "oracle_table_small.json"},
  };
  for (const auto& r : runs) {
    CAPTURE(r.sub);
    const auto dir = fresh_dir("cart_cli_run");
    CHECK(run_cli(std::string(r.sub) + " --config \"" + config(r.cfg) +
                  "\" --out \"" + dir.string() + "\"") == 0);
    CHECK(std::filesystem::exists(dir / "rows.csv"));
    CHECK(std::filesystem::exists(dir / "summary.json"));
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("config errors exit with code 2") {
  const auto dir = fresh_dir("cart_cli_bad");
  CHECK(run_cli("coverage --config \"" + config("bad_config.json") +
                "\" --out \"" + dir.string() + "\"") == 2);
  // A structurally valid file fed to the wrong subcommand is also a config
  // error: the rate section is missing.
  CHECK(run_cli("rate --config \"" + config("diagnose_small.json") +
                "\" --out \"" + dir.string() + "\"") == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("enumeration cap violations exit with code 3") {
  const auto dir = fresh_dir("cart_cli_cap");
  CHECK(run_cli("diagnose --config \"" + config("cap_config.json") +
                "\" --out \"" + dir.string() + "\"") == 3);
  std::filesystem::remove_all(dir);
}

TEST_CASE("reruns are byte-identical and overrides take effect") {
  const std::string cfg = config("rate_small.json");
  const auto dir_a = fresh_dir("cart_cli_det_a");
  const auto dir_b = fresh_dir("cart_cli_det_b");
  const auto dir_c = fresh_dir("cart_cli_det_c");
  const auto dir_d = fresh_dir("cart_cli_det_d");

  CHECK(run_cli("rate --config \"" + cfg + "\" --out \"" + dir_a.string() +
                "\"") == 0);
  CHECK(run_cli("rate --config \"" + cfg + "\" --out \"" + dir_b.string() +
                "\"") == 0);
  CHECK(run_cli("rate --config \"" + cfg + "\" --out \"" + dir_c.string() +
                "\" --threads 2") == 0);
  CHECK(run_cli("rate --config \"" + cfg + "\" --out \"" + dir_d.string() +
                "\" --seed 999") == 0);

  const std::string rows_a = read_text(dir_a / "rows.csv");
  CHECK(rows_a == read_text(dir_b / "rows.csv"));
  CHECK(rows_a == read_text(dir_c / "rows.csv"));
  CHECK(rows_a != read_text(dir_d / "rows.csv"));
  for (const auto& dir : {dir_a, dir_b, dir_c, dir_d})
    std::filesystem::remove_all(dir);
}
