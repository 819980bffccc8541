// Turns allocations into the comparison table, configuration/QP histograms,
// and RD-curve exports. Reports carry no arithmetic of their own beyond
// formatting; every number is recomputable through the allocator.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "anchorgen/allocator.hpp"

namespace anchorgen {

struct CodecSummary {
  std::string adapter_name;
  std::int64_t total_data_bytes = 0;
  std::int64_t decoder_bytes = 0;
  double mean_quality = 0.0;
  double submission_bytes = 0.0;
  double relative_model_size_percent = 0.0;
};

CodecSummary codec_summary(const Allocation& allocation, const Budget& budget,
                           const std::string& adapter_name);

// Either the config buckets or the qp buckets are populated, depending on
// which stat produced the report; counts always sum to the sequence count.
struct HistogramReport {
  std::map<std::string, std::int64_t> config_counts;
  std::map<int, std::int64_t> qp_counts;
  double mean_qp = 0.0;
};

HistogramReport config_frequency(const Allocation& allocation);
HistogramReport qp_stats(const Allocation& allocation);

struct RdCurveRow {
  double lambda = 0.0;
  std::int64_t total_data_bytes = 0;
  double submission_bytes = 0.0;
  double sum_quality = 0.0;
  double mean_quality = 0.0;
  bool chosen = false;
};

// One row per distinct lambda selection, sizes strictly increasing, plus
// the allocation's operating point marked chosen (inserted in size order
// when greedy refinement moved it off the pure-lambda sweep).
std::vector<RdCurveRow> rd_curve(const std::vector<SequenceRdSet>& sets,
                                 const Budget& budget,
                                 const Allocation& allocation);

struct ReportInput {
  AllocationFile allocation;
  std::vector<SequenceRdSet> sets;  // empty: skip the rd curve export
};

// Writes summary.json, configs.csv, qps.csv, table2.md, and one
// rd_<adapter>.csv per input that carries sets. Byte-stable across reruns.
void write_report_bundle(const std::vector<ReportInput>& inputs,
                         const std::filesystem::path& out_dir);

}  // namespace anchorgen
