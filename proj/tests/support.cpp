#include "support.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace cvfm::test {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::set<std::string> relative_files(const fs::path& root, const std::vector<std::string>& skip) {
  std::set<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    if (std::find(skip.begin(), skip.end(), e.path().filename().string()) != skip.end()) continue;
    out.insert(fs::relative(e.path(), root).generic_string());
  }
  return out;
}

}  // namespace

bool same_tree(const fs::path& a, const fs::path& b, const std::vector<std::string>& skip) {
  const auto fa = relative_files(a, skip);
  const auto fb = relative_files(b, skip);
  if (fa != fb || fa.empty()) return false;
  for (const auto& f : fa)
    if (read_file(a / f) != read_file(b / f)) return false;
  return true;
}

}  // namespace cvfm::test
