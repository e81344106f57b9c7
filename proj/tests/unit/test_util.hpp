#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fusionkit/matrix.hpp"
#include "fusionkit/rng.hpp"
#include "oracles.hpp"

namespace testutil {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("fusionkit-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
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
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream(p, std::ios::binary) << content;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline fusionkit::Matrix random_matrix(fusionkit::Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  fusionkit::Matrix m(r, c);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

inline oracle::Mat to_mat(const fusionkit::Matrix& m) {
  oracle::Mat out(m.rows(), oracle::Vec(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

inline oracle::Vec to_vec(const fusionkit::Matrix& column) {
  return oracle::Vec(column.values().begin(), column.values().end());
}

}  // namespace testutil
