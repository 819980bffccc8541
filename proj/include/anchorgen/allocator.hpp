// Rate-distortion allocation: submission-size arithmetic, per-sequence upper
// convex hulls, Lagrangian point selection, and global budget solving.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace anchorgen {

// One measured encoding outcome for a sequence.
struct RdPoint {
  std::string config_id;
  int qp = 0;
  std::int64_t size_bytes = 0;
  double quality = 0.0;  // sequence MS-SSIM, in (0, 1]

  bool operator==(const RdPoint&) const = default;
};

// All candidate points for one sequence plus the cached upper hull.
// hull holds indices into points, ordered by strictly increasing size_bytes
// and strictly increasing quality, with strictly decreasing slopes between
// consecutive entries.
struct SequenceRdSet {
  std::string sequence_id;
  std::vector<RdPoint> points;
  std::vector<std::size_t> hull;

  static SequenceRdSet create(std::string sequence_id,
                              std::vector<RdPoint> points);

  const RdPoint& hull_point(std::size_t hull_pos) const {
    return points[hull[hull_pos]];
  }
};

// The challenge constraint. submission = data / data_divisor + decoder.
struct Budget {
  double limit_bytes = 1309062500.0;
  double data_divisor = 0.019;
  std::int64_t decoder_bytes = 0;

  void validate() const;
};

// Solver output: one chosen point per sequence plus aggregate stats.
struct Allocation {
  std::map<std::string, RdPoint> choices;
  std::int64_t total_data_bytes = 0;
  double submission_bytes = 0.0;
  double mean_quality = 0.0;
  double sum_quality = 0.0;
  double lambda_star = 0.0;
};

class InfeasibleBudgetError : public std::runtime_error {
 public:
  explicit InfeasibleBudgetError(double overshoot_bytes);
  double overshoot_bytes() const { return overshoot_bytes_; }

 private:
  double overshoot_bytes_;
};

// total_data_bytes / divisor + decoder_bytes, in double precision.
double submission_size(std::int64_t total_data_bytes, const Budget& budget);

// 100 * submission / limit.
double relative_model_size(double submission_bytes, double limit_bytes);

// Upper concave envelope of the point set. Ties on equal size keep only the
// higher quality; ties on equal (size, quality) keep the first by input
// order. Throws std::invalid_argument on an empty input.
std::vector<std::size_t> upper_hull(const std::vector<RdPoint>& points);

// Hull position maximizing quality - lambda * size_bytes; exact ties go to
// the smaller size. lambda must be >= 0 and the hull non-empty.
std::size_t select_hull_pos(const SequenceRdSet& set, double lambda);
const RdPoint& select_at_lambda(const SequenceRdSet& set, double lambda);

// Global budget solve: lambda bisection over the hull-slope breakpoints,
// then greedy hull upgrades to recover the discrete duality gap. Throws
// InfeasibleBudgetError when even all-minimum choices exceed the limit.
Allocation solve_budget(const std::vector<SequenceRdSet>& sets,
                        const Budget& budget);

// RD-point interchange CSV: header `sequence_id,config_id,qp,size_bytes,
// quality`, UTF-8, LF endings, quality printed with 9 decimal digits.
std::string format_rd_csv(const std::vector<SequenceRdSet>& sets);
void write_rd_csv(const std::vector<SequenceRdSet>& sets,
                  const std::filesystem::path& path);
std::vector<SequenceRdSet> parse_rd_csv(const std::string& text);
std::vector<SequenceRdSet> read_rd_csv(const std::filesystem::path& path);

// Allocation output JSON, self-describing enough for reporting.
struct AllocationFile {
  std::string adapter;
  Budget budget;
  Allocation allocation;
};
std::string format_allocation_json(const AllocationFile& file);
void write_allocation_json(const AllocationFile& file,
                           const std::filesystem::path& path);
AllocationFile read_allocation_json(const std::filesystem::path& path);

}  // namespace anchorgen
