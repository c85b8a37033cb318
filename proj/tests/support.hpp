#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <random>
#include <string>

#include "pemuta/dataset.hpp"

namespace pemuta::test {

namespace fs = std::filesystem;

inline fs::path fixture(const std::string& rel) { return fs::path(PEMUTA_FIXTURES) / rel; }
inline fs::path source(const std::string& rel) { return fs::path(PEMUTA_SOURCE_DIR) / rel; }

inline std::string read(const fs::path& p) { return dataset::read_file(p); }

/// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    auto tick = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = fs::temp_directory_path() /
            ("pemuta-test-" + std::to_string(tick) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline const char* kLayoutFixtures[] = {"three_sections", "furniture", "paragraphs",
                                        "placeholders", "chinese", "matter"};

}  // namespace pemuta::test
