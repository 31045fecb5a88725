#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace cape::testing {

inline std::filesystem::path data_path(const std::string& rel) {
  return std::filesystem::path(CAPE_DATA_DIR) / rel;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace cape::testing
