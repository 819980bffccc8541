// Shared helpers for the unit and acceptance suites: deterministic random
// instances and a driver for the installed CLI binary.
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "anchorgen/allocator.hpp"
#include "anchorgen/frame.hpp"

namespace anchorgen::testutil {

// Noisy concave RD curves plus occasional duplicate/dominated points so the
// tie rules get exercised.
std::vector<RdPoint> random_points(std::mt19937& rng, int count);
std::vector<SequenceRdSet> random_sets(std::mt19937& rng, int num_sets,
                                       int max_points);

// A budget whose limit spans the feasible range: from all-minimum up to a
// little past all-maximum.
Budget random_budget(std::mt19937& rng,
                     const std::vector<SequenceRdSet>& sets);

Plane random_plane(std::mt19937& rng, int width, int height);
// src plus i.i.d. uniform integer noise in [-amplitude, amplitude], clamped.
Plane noisy_plane(const Plane& src, std::mt19937& rng, int amplitude);

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

// Runs `bin args...` through the shell, capturing combined output.
CliResult run_cli(const std::string& bin, const std::string& args);

// Binary path from ANCHORGEN_BIN, or empty when unset.
std::string cli_bin_from_env();

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

// Fresh directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace anchorgen::testutil
