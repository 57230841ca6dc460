#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

namespace vdls::testing {

/// Empty scratch directory under $VDLS_TEST_TMP (or the system temp dir).
inline std::filesystem::path fresh_dir(const std::string& name) {
  const char* root = std::getenv("VDLS_TEST_TMP");
  std::filesystem::path base = root && *root ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "vdls-tests";
  auto dir = base / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace vdls::testing
