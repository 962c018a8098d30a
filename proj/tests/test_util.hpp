#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "creole/eval.hpp"

namespace testutil {

inline std::filesystem::path fixture_dir() { return CREOLE_FIXTURE_DIR; }

// A scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("creolelm-test-" + std::to_string(rd()) + std::to_string(rd()));
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
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Scores each query with a user function returning raw log-probabilities.
class FunctionModel : public creole::MaskedLanguageModel {
 public:
  using Fn = std::function<std::vector<double>(const creole::MaskedQuery&)>;
  FunctionModel(std::size_t vocab, Fn fn, std::size_t max_len = 64)
      : vocab_(vocab), max_len_(max_len), fn_(std::move(fn)) {}

  std::size_t vocab_size() const override { return vocab_; }
  std::size_t max_len() const override { return max_len_; }
  std::vector<std::vector<double>> masked_log_probs(const std::vector<creole::MaskedQuery>& qs) const override {
    std::vector<std::vector<double>> out;
    for (const auto& q : qs) out.push_back(fn_(q));
    return out;
  }

 private:
  std::size_t vocab_;
  std::size_t max_len_;
  Fn fn_;
};

inline FunctionModel uniform_model(std::size_t vocab, std::size_t max_len = 64) {
  return FunctionModel(vocab, [vocab](const creole::MaskedQuery&) {
    return std::vector<double>(vocab, -std::log(static_cast<double>(vocab)));
  }, max_len);
}

}  // namespace testutil
