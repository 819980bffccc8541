// Plans the (sequence x configuration x QP) grid, runs encoder/decoder
// binaries through argv templates, measures bitstream sizes and MS-SSIM,
// caches results, and assembles per-sequence RD sets. A deterministic mock
// codec makes the full pipeline testable with no external binaries.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "anchorgen/allocator.hpp"
#include "anchorgen/frame.hpp"
#include "anchorgen/metrics.hpp"
#include "anchorgen/pixio.hpp"

namespace anchorgen {

struct EncoderConfig {
  std::string id;
  std::vector<std::string> args;  // expanded in place of a {config} token
  bool screen_content_only = false;
};

struct EncoderAdapter {
  enum class QpStyle { kQp, kCrf };

  std::string name;
  std::vector<std::string> encode_template;
  std::vector<std::string> decode_template;
  std::vector<EncoderConfig> configs;
  std::int64_t decoder_bytes = 0;
  QpStyle qp_style = QpStyle::kQp;
  int qp_min = 0;
  int qp_max = 51;
  double timeout_seconds = 86400.0;
  bool mock = false;

  void validate() const;
  const EncoderConfig& config(const std::string& id) const;
};

// Shipped defaults: vtm, hm, x265, mock.
EncoderAdapter builtin_adapter(const std::string& name);
std::vector<std::string> builtin_adapter_names();
EncoderAdapter load_adapter(const std::filesystem::path& path);
// Accepts a builtin name or a path to an adapter json file.
EncoderAdapter resolve_adapter(const std::string& name_or_path);

struct SequenceInfo {
  std::string id;
  std::filesystem::path source;  // coded (even-dimension) I420 file
  int width = 0;
  int height = 0;
  int frame_count = 0;
  bool screen_content = false;
  PaddingRecord padding;  // how the coded frame relates to the original
};

struct Manifest {
  std::vector<SequenceInfo> sequences;
};
// Relative source paths resolve against the manifest's directory; sources
// must exist at load time.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest,
                   const std::filesystem::path& path);

struct Job {
  SequenceInfo sequence;
  std::string config_id;
  int qp = 0;
};

// Cartesian product filtered by per-sequence config eligibility
// (screen-content-only configs require the flag), ordered (sequence,
// config, qp). The qp range must lie within the adapter's declared range.
std::vector<Job> plan_grid(const std::vector<SequenceInfo>& sequences,
                           const EncoderAdapter& adapter, int qp_min,
                           int qp_max);

struct CommandPaths {
  std::filesystem::path input;
  std::filesystem::path output;
};

// Substitutes {input} {output} {width} {height} {qp} {frames} and expands a
// standalone {config} token; any placeholder left over is an error naming
// it. No shell is involved; the result is an argv.
std::vector<std::string> render_command(const std::vector<std::string>& tmpl,
                                        const EncoderAdapter& adapter,
                                        const Job& job,
                                        const CommandPaths& paths);

struct JobResult {
  std::string sequence_id;
  RdPoint point;
  std::filesystem::path bitstream_path;
  std::filesystem::path reconstruction_path;
  double wall_time = 0.0;
  std::string adapter_name;
  bool from_cache = false;
};

struct JobFailure {
  std::string sequence_id;
  std::string config_id;
  int qp = 0;
  std::string message;
};

struct CacheKey {
  std::string adapter_name;
  std::string sequence_id;
  std::string config_id;
  int qp = 0;
  std::string source_digest;

  std::string to_string() const;
};

// JSONL index beside the artifacts; appends are serialized and flushed so
// interrupted runs resume cleanly.
class ResultCache {
 public:
  explicit ResultCache(std::filesystem::path index_path);

  std::optional<JobResult> lookup(const CacheKey& key) const;
  void store(const CacheKey& key, const JobResult& result);
  // Memoized content digest of a source file.
  std::string source_digest(const std::filesystem::path& path);

 private:
  std::filesystem::path index_path_;
  mutable std::mutex mutex_;
  std::map<std::string, JobResult> entries_;
  std::map<std::string, std::string> digests_;
};

struct RunOptions {
  std::filesystem::path workdir;
  int parallelism = 1;
  bool use_cache = true;
  ChannelMode channel_mode = ChannelMode::kRgbMean;
  ColorMatrix matrix = ColorMatrix::kBt709;
  MsSsimParams metric_params{};
  std::function<void(const std::string&)> log;  // per-job lines, optional
};

// encode -> stat bitstream -> decode -> score reconstruction against the
// cropped source. Mock adapters skip the processes and use the closed-form
// model, still writing a bitstream of exactly the modelled size.
JobResult run_job(const Job& job, const EncoderAdapter& adapter,
                  const RunOptions& options, ResultCache* cache);

struct RunOutcome {
  std::vector<SequenceRdSet> sets;   // sequences in planned order
  std::vector<JobResult> results;    // successes in planned job order
  std::vector<JobFailure> failures;  // failures in planned job order
};

// Bounded worker pool; results are assembled in planned order so output is
// identical for any parallelism. Throws only when every job failed.
RunOutcome run_all(const std::vector<Job>& jobs,
                   const EncoderAdapter& adapter, const RunOptions& options);

// Deterministic RD model: size halves every 6 QP steps from the per-(seed,
// config) anchor S0 at QP 24, distortion doubles every 6 steps from D0.
std::uint64_t sequence_seed(const std::string& sequence_id);
std::pair<std::int64_t, double> mock_codec(std::uint64_t sequence_seed,
                                           const std::string& config_id,
                                           int qp);

std::uint64_t fnv1a64(std::string_view data);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

}  // namespace anchorgen
