#ifndef REID_TESTS_TEST_UTIL_HPP_
#define REID_TESTS_TEST_UTIL_HPP_

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace reid::testing {

// Fresh scratch directory named after the running test.
inline std::filesystem::path scratch_dir() {
  const char* root = std::getenv("REID_TEST_TMP");
  std::filesystem::path base =
      root ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "reid_tests";
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const auto dir = base / (std::string(info->test_suite_name()) + "." + info->name());
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace reid::testing

#endif  // REID_TESTS_TEST_UTIL_HPP_
