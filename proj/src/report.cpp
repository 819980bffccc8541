#include "anchorgen/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace anchorgen {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  out << text;
  if (!out) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

void require_nonempty(const Allocation& allocation, const char* what) {
  if (allocation.choices.empty()) {
    throw std::invalid_argument(std::string(what) + ": empty allocation");
  }
}

}  // namespace

CodecSummary codec_summary(const Allocation& allocation, const Budget& budget,
                           const std::string& adapter_name) {
  require_nonempty(allocation, "codec_summary");
  CodecSummary s;
  s.adapter_name = adapter_name;
  s.total_data_bytes = allocation.total_data_bytes;
  s.decoder_bytes = budget.decoder_bytes;
  s.mean_quality = allocation.mean_quality;
  s.submission_bytes = submission_size(allocation.total_data_bytes, budget);
  s.relative_model_size_percent =
      relative_model_size(s.submission_bytes, budget.limit_bytes);
  return s;
}

HistogramReport config_frequency(const Allocation& allocation) {
  require_nonempty(allocation, "config_frequency");
  HistogramReport report;
  for (const auto& [id, point] : allocation.choices) {
    ++report.config_counts[point.config_id];
  }
  return report;
}

HistogramReport qp_stats(const Allocation& allocation) {
  require_nonempty(allocation, "qp_stats");
  HistogramReport report;
  double sum = 0.0;
  for (const auto& [id, point] : allocation.choices) {
    ++report.qp_counts[point.qp];
    sum += point.qp;
  }
  report.mean_qp = sum / static_cast<double>(allocation.choices.size());
  return report;
}

std::vector<RdCurveRow> rd_curve(const std::vector<SequenceRdSet>& sets,
                                 const Budget& budget,
                                 const Allocation& allocation) {
  if (sets.empty()) {
    throw std::invalid_argument("rd_curve: no sets");
  }
  std::vector<double> lambdas;
  for (const auto& set : sets) {
    for (std::size_t pos = 0; pos + 1 < set.hull.size(); ++pos) {
      const RdPoint& a = set.hull_point(pos);
      const RdPoint& b = set.hull_point(pos + 1);
      lambdas.push_back((b.quality - a.quality) /
                        static_cast<double>(b.size_bytes - a.size_bytes));
    }
  }
  std::sort(lambdas.begin(), lambdas.end(), std::greater<>());
  lambdas.erase(std::unique(lambdas.begin(), lambdas.end()), lambdas.end());
  lambdas.push_back(0.0);  // all-max endpoint

  const double n = static_cast<double>(sets.size());
  std::vector<RdCurveRow> rows;
  std::vector<std::size_t> prev_sel;
  for (double lambda : lambdas) {
    std::vector<std::size_t> sel(sets.size());
    RdCurveRow row;
    row.lambda = lambda;
    for (std::size_t k = 0; k < sets.size(); ++k) {
      sel[k] = select_hull_pos(sets[k], lambda);
      const RdPoint& p = sets[k].hull_point(sel[k]);
      row.total_data_bytes += p.size_bytes;
      row.sum_quality += p.quality;
    }
    if (sel == prev_sel) continue;
    prev_sel = std::move(sel);
    row.submission_bytes = submission_size(row.total_data_bytes, budget);
    row.mean_quality = row.sum_quality / n;
    rows.push_back(row);
  }

  // Mark (or insert) the operating point actually allocated.
  bool marked = false;
  for (auto& row : rows) {
    if (row.total_data_bytes == allocation.total_data_bytes &&
        row.sum_quality == allocation.sum_quality) {
      row.chosen = true;
      marked = true;
      break;
    }
  }
  if (!marked) {
    RdCurveRow row;
    row.lambda = allocation.lambda_star;
    row.total_data_bytes = allocation.total_data_bytes;
    row.submission_bytes = allocation.submission_bytes;
    row.sum_quality = allocation.sum_quality;
    row.mean_quality = allocation.mean_quality;
    row.chosen = true;
    const auto at = std::lower_bound(
        rows.begin(), rows.end(), row.total_data_bytes,
        [](const RdCurveRow& r, std::int64_t total) {
          return r.total_data_bytes < total;
        });
    rows.insert(at, row);
  }
  return rows;
}

void write_report_bundle(const std::vector<ReportInput>& inputs,
                         const fs::path& out_dir) {
  if (inputs.empty()) {
    throw std::invalid_argument("write_report_bundle: no inputs");
  }
  {
    std::set<std::string> names;
    for (const auto& input : inputs) {
      if (!names.insert(input.allocation.adapter).second) {
        throw std::invalid_argument(
            "write_report_bundle: duplicate adapter '" +
            input.allocation.adapter + "'");
      }
    }
  }
  fs::create_directories(out_dir);

  ordered_json summary = ordered_json::array();
  std::string configs_csv = "adapter,config_id,count\n";
  std::string qps_csv = "adapter,qp,count\n";
  std::string table =
      "| Encoder | Data Size | Decoder Size | MS-SSIM | Relative model size "
      "|\n| --- | ---: | ---: | ---: | ---: |\n";

  for (const auto& input : inputs) {
    const auto& file = input.allocation;
    const CodecSummary s =
        codec_summary(file.allocation, file.budget, file.adapter);
    const HistogramReport configs = config_frequency(file.allocation);
    const HistogramReport qps = qp_stats(file.allocation);

    ordered_json row;
    row["adapter_name"] = s.adapter_name;
    row["total_data_bytes"] = s.total_data_bytes;
    row["decoder_bytes"] = s.decoder_bytes;
    row["mean_quality"] = s.mean_quality;
    row["submission_bytes"] = s.submission_bytes;
    row["relative_model_size_percent"] = s.relative_model_size_percent;
    row["mean_qp"] = qps.mean_qp;
    summary.push_back(std::move(row));

    for (const auto& [config, count] : configs.config_counts) {
      configs_csv += s.adapter_name + "," + config + "," +
                     std::to_string(count) + "\n";
    }
    for (const auto& [qp, count] : qps.qp_counts) {
      qps_csv += s.adapter_name + "," + std::to_string(qp) + "," +
                 std::to_string(count) + "\n";
    }
    table += "| " + s.adapter_name + " | " +
             std::to_string(s.total_data_bytes) + " | " +
             std::to_string(s.decoder_bytes) + " | " +
             fmt("%.5f", s.mean_quality) + " | " +
             fmt("%.2f", s.relative_model_size_percent) + "% |\n";

    if (!input.sets.empty()) {
      const auto rows = rd_curve(input.sets, file.budget, file.allocation);
      std::string csv =
          "lambda,total_data_bytes,submission_bytes,sum_quality,"
          "mean_quality,chosen\n";
      for (const auto& r : rows) {
        csv += fmt("%.12g", r.lambda) + "," +
               std::to_string(r.total_data_bytes) + "," +
               fmt("%.3f", r.submission_bytes) + "," +
               fmt("%.9f", r.sum_quality) + "," +
               fmt("%.9f", r.mean_quality) + "," +
               (r.chosen ? "1" : "0") + "\n";
      }
      write_text(out_dir / ("rd_" + s.adapter_name + ".csv"), csv);
    }
  }

  write_text(out_dir / "summary.json", summary.dump(2) + "\n");
  write_text(out_dir / "configs.csv", configs_csv);
  write_text(out_dir / "qps.csv", qps_csv);
  write_text(out_dir / "table2.md", table);
}

}  // namespace anchorgen
