#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dgseg/image.hpp"
#include "dgseg/rng.hpp"

namespace dgseg::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    Rng rng(derive_seed(static_cast<std::uint64_t>(::getpid()), {hash_name(tag), static_cast<std::uint64_t>(counter++)}));
    path_ = std::filesystem::temp_directory_path() / ("dgseg_" + tag + "_" + std::to_string(rng.next_u64() % 1000000007));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Image random_image(int h, int w, Rng& rng) {
  Image img(h, w);
  for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
  return img;
}

inline Image constant_image(int h, int w, float v) { return Image(h, w, v); }

inline LabelMap random_label(int h, int w, int classes, Rng& rng) {
  LabelMap l(h, w);
  for (auto& v : l.data()) v = static_cast<std::uint8_t>(rng.uniform_int(static_cast<std::uint64_t>(classes)));
  return l;
}

}  // namespace dgseg::testing
