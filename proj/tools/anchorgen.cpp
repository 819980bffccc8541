// anchorgen: standardized-codec anchor generation for a byte-budgeted
// video-compression challenge. Subcommands: convert, encode, allocate,
// report.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "anchorgen/allocator.hpp"
#include "anchorgen/metrics.hpp"
#include "anchorgen/orchestrator.hpp"
#include "anchorgen/pixio.hpp"
#include "anchorgen/report.hpp"

namespace fs = std::filesystem;
using namespace anchorgen;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitPartial = 2;

struct ConvertArgs {
  std::string png_dir;
  std::string yuv_file;
  std::string out;
  std::string pad_file;
  std::string matrix = "bt709";
  bool matrix_given = false;
};

struct EncodeArgs {
  std::string manifest;
  std::string adapter;
  std::string workdir;
  std::string out;
  int qp_min = 24;
  int qp_max = 42;
  int parallelism = 1;
  bool no_cache = false;
  std::string channel_mode = "rgb-mean";
  std::string matrix = "bt709";
};

struct AllocateArgs {
  std::string results;
  std::string out;
  std::string adapter;
  double limit = 1309062500.0;
  double divisor = 0.019;
  std::int64_t decoder_bytes = 0;
  bool decoder_bytes_given = false;
};

struct ReportArgs {
  std::vector<std::string> allocations;
  std::vector<std::string> results;
  std::string out;
};

void write_json_file(const ordered_json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path.string());
  }
  out << j.dump(2) << "\n";
}

ordered_json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open: " + path.string());
  }
  ordered_json j;
  in >> j;
  return j;
}

int run_convert(const ConvertArgs& args) {
  if (args.png_dir.empty() == args.yuv_file.empty()) {
    throw std::runtime_error("convert: give exactly one of --png or --yuv");
  }
  if (!args.png_dir.empty()) {
    // PNG directory -> padded I420 + sidecar describing the padding.
    const ColorMatrix matrix = parse_color_matrix(args.matrix);
    const auto frames = read_png_sequence(args.png_dir);
    std::vector<Yuv420Frame> yuv;
    yuv.reserve(frames.size());
    PaddingRecord rec;
    for (const auto& frame : frames) {
      auto [padded, r] = pad_to_even(frame);
      rec = r;
      yuv.push_back(rgb_to_yuv420(padded, matrix));
    }
    write_yuv420(yuv, args.out);

    ordered_json sidecar;
    sidecar["width"] = rec.padded_width();
    sidecar["height"] = rec.padded_height();
    sidecar["frame_count"] = static_cast<int>(yuv.size());
    sidecar["matrix"] = to_string(matrix);
    sidecar["padding"] = {{"rows_added", rec.rows_added},
                          {"cols_added", rec.cols_added},
                          {"original_width", rec.original_width},
                          {"original_height", rec.original_height}};
    const fs::path pad_path = args.pad_file.empty()
                                  ? fs::path(args.out + ".pad.json")
                                  : fs::path(args.pad_file);
    write_json_file(sidecar, pad_path);
    std::cerr << "convert: wrote " << yuv.size() << " frames to " << args.out
              << " (" << rec.padded_width() << "x" << rec.padded_height()
              << ", rows_added=" << rec.rows_added
              << ", cols_added=" << rec.cols_added << ")\n";
    return kExitOk;
  }

  // I420 + sidecar -> cropped PNG directory.
  const fs::path pad_path = args.pad_file.empty()
                                ? fs::path(args.yuv_file + ".pad.json")
                                : fs::path(args.pad_file);
  const ordered_json sidecar = read_json_file(pad_path);
  const int width = sidecar.at("width").get<int>();
  const int height = sidecar.at("height").get<int>();
  const int frame_count = sidecar.at("frame_count").get<int>();
  PaddingRecord rec;
  rec.rows_added = sidecar.at("padding").at("rows_added").get<int>();
  rec.cols_added = sidecar.at("padding").at("cols_added").get<int>();
  rec.original_width =
      sidecar.at("padding").at("original_width").get<int>();
  rec.original_height =
      sidecar.at("padding").at("original_height").get<int>();
  const ColorMatrix matrix =
      args.matrix_given ? parse_color_matrix(args.matrix)
                        : parse_color_matrix(
                              sidecar.value("matrix", std::string("bt709")));

  const auto yuv = read_yuv420(args.yuv_file, width, height, frame_count);
  std::vector<RgbFrame> frames;
  frames.reserve(yuv.size());
  for (const auto& f : yuv) {
    frames.push_back(crop(yuv420_to_rgb(f, matrix), rec));
  }
  write_png_sequence(frames, args.out);
  std::cerr << "convert: wrote " << frames.size() << " png frames to "
            << args.out << " (" << rec.original_width << "x"
            << rec.original_height << ")\n";
  return kExitOk;
}

int run_encode(const EncodeArgs& args) {
  const Manifest manifest = load_manifest(args.manifest);
  const EncoderAdapter adapter = resolve_adapter(args.adapter);
  const auto jobs =
      plan_grid(manifest.sequences, adapter, args.qp_min, args.qp_max);

  RunOptions options;
  options.workdir = args.workdir;
  options.parallelism = args.parallelism;
  options.use_cache = !args.no_cache;
  options.channel_mode = parse_channel_mode(args.channel_mode);
  options.matrix = parse_color_matrix(args.matrix);
  options.log = [](const std::string& line) {
    std::cerr << line << "\n";
  };

  std::cerr << "encode: " << jobs.size() << " jobs (" <<
      manifest.sequences.size() << " sequences, adapter " << adapter.name
            << ", qp " << args.qp_min << ".." << args.qp_max << ")\n";
  const RunOutcome outcome = run_all(jobs, adapter, options);

  const fs::path out = args.out.empty()
                           ? fs::path(args.workdir) / "results.csv"
                           : fs::path(args.out);
  write_rd_csv(outcome.sets, out);

  // Data-affecting settings only, so output is reproducible byte for byte
  // regardless of worker count.
  ordered_json config;
  config["command"] = "encode";
  config["manifest"] = args.manifest;
  config["adapter"] = adapter.name;
  config["qp_min"] = args.qp_min;
  config["qp_max"] = args.qp_max;
  config["channel_mode"] = args.channel_mode;
  config["matrix"] = args.matrix;
  config["results"] = out.string();
  write_json_file(config, fs::path(args.workdir) / "run_config.json");

  std::cerr << "encode: " << outcome.results.size() << " ok, "
            << outcome.failures.size() << " failed; results in "
            << out.string() << "\n";
  if (!outcome.failures.empty()) {
    for (const auto& f : outcome.failures) {
      std::cerr << "failed: seq=" << f.sequence_id << " config=" << f.config_id
                << " qp=" << f.qp << ": " << f.message << "\n";
    }
    return kExitPartial;
  }
  return kExitOk;
}

int run_allocate(const AllocateArgs& args) {
  Budget budget;
  budget.limit_bytes = args.limit;
  budget.data_divisor = args.divisor;
  std::string adapter_name = "unknown";
  if (!args.adapter.empty()) {
    const EncoderAdapter adapter = resolve_adapter(args.adapter);
    adapter_name = adapter.name;
    budget.decoder_bytes = adapter.decoder_bytes;
  }
  if (args.decoder_bytes_given) {
    budget.decoder_bytes = args.decoder_bytes;
  }
  budget.validate();

  const auto sets = read_rd_csv(args.results);
  const Allocation allocation = solve_budget(sets, budget);
  write_allocation_json({adapter_name, budget, allocation}, args.out);
  std::cerr << "allocate: " << allocation.choices.size()
            << " sequences, total_data_bytes=" << allocation.total_data_bytes
            << " submission_bytes=" << std::to_string(allocation.submission_bytes)
            << " (" << relative_model_size(allocation.submission_bytes,
                                           budget.limit_bytes)
            << "% of limit), mean_quality=" << allocation.mean_quality
            << ", lambda_star=" << allocation.lambda_star << "\n";
  return kExitOk;
}

int run_report(const ReportArgs& args) {
  if (!args.results.empty() && args.results.size() != args.allocations.size()) {
    throw std::runtime_error(
        "report: --results must be given once per --allocation or not at "
        "all");
  }
  std::vector<ReportInput> inputs;
  inputs.reserve(args.allocations.size());
  for (std::size_t i = 0; i < args.allocations.size(); ++i) {
    ReportInput input;
    input.allocation = read_allocation_json(args.allocations[i]);
    if (!args.results.empty()) {
      input.sets = read_rd_csv(args.results[i]);
    }
    inputs.push_back(std::move(input));
  }
  write_report_bundle(inputs, args.out);

  ordered_json config;
  config["command"] = "report";
  config["allocations"] = args.allocations;
  config["results"] = args.results;
  write_json_file(config, fs::path(args.out) / "run_config.json");
  std::cerr << "report: bundle written to " << args.out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Standardized-codec anchor harness: converts sources, sweeps "
               "encoders over a (sequence x config x QP) grid, solves the "
               "submission byte budget, and reports the outcome."};
  app.require_subcommand(1);

  ConvertArgs convert_args;
  auto* convert = app.add_subcommand(
      "convert", "Convert a PNG frame directory to padded I420 (and back)");
  convert->add_option("--png", convert_args.png_dir,
                      "PNG frame directory to convert to I420")
      ->envname("ANCHORGEN_PNG");
  convert->add_option("--yuv", convert_args.yuv_file,
                      "I420 file to convert back to PNGs")
      ->envname("ANCHORGEN_YUV");
  convert->add_option("--out", convert_args.out,
                      "Output file (forward) or directory (inverse)")
      ->required()
      ->envname("ANCHORGEN_OUT");
  convert->add_option("--pad", convert_args.pad_file,
                      "Padding sidecar path (default: <yuv>.pad.json)")
      ->envname("ANCHORGEN_PAD");
  auto* matrix_opt =
      convert->add_option("--matrix", convert_args.matrix,
                          "Color matrix: bt709 or bt601 (default bt709)")
          ->envname("ANCHORGEN_MATRIX");

  EncodeArgs encode_args;
  auto* encode = app.add_subcommand(
      "encode", "Run the (sequence x config x QP) grid and write the RD csv");
  encode->add_option("--manifest", encode_args.manifest, "Sequence manifest")
      ->required()
      ->envname("ANCHORGEN_MANIFEST");
  encode->add_option("--adapter", encode_args.adapter,
                     "Adapter: builtin name (vtm, hm, x265, mock) or json "
                     "path")
      ->required()
      ->envname("ANCHORGEN_ADAPTER");
  encode->add_option("--workdir", encode_args.workdir,
                     "Directory for bitstreams, logs and the cache")
      ->required()
      ->envname("ANCHORGEN_WORKDIR");
  encode->add_option("--out", encode_args.out,
                     "Results csv (default: <workdir>/results.csv)")
      ->envname("ANCHORGEN_OUT");
  encode->add_option("--qp-min", encode_args.qp_min, "Lowest QP (default 24)")
      ->envname("ANCHORGEN_QP_MIN");
  encode->add_option("--qp-max", encode_args.qp_max, "Highest QP (default 42)")
      ->envname("ANCHORGEN_QP_MAX");
  encode
      ->add_option("--parallelism", encode_args.parallelism,
                   "Concurrent jobs (default 1)")
      ->envname("ANCHORGEN_PARALLELISM");
  encode->add_flag("--no-cache", encode_args.no_cache,
                   "Disable the result cache")
      ->envname("ANCHORGEN_NO_CACHE");
  encode
      ->add_option("--channel-mode", encode_args.channel_mode,
                   "Quality channels: rgb-mean or luma-only (default "
                   "rgb-mean)")
      ->envname("ANCHORGEN_CHANNEL_MODE");
  encode->add_option("--matrix", encode_args.matrix,
                     "Color matrix: bt709 or bt601 (default bt709)")
      ->envname("ANCHORGEN_MATRIX");

  AllocateArgs allocate_args;
  auto* allocate = app.add_subcommand(
      "allocate", "Solve the byte budget over a results csv");
  allocate->add_option("--results", allocate_args.results, "RD results csv")
      ->required()
      ->envname("ANCHORGEN_RESULTS");
  allocate->add_option("--out", allocate_args.out, "Allocation json output")
      ->required()
      ->envname("ANCHORGEN_OUT");
  allocate->add_option("--adapter", allocate_args.adapter,
                       "Adapter supplying name and decoder size")
      ->envname("ANCHORGEN_ADAPTER");
  allocate
      ->add_option("--limit", allocate_args.limit,
                   "Submission size limit in bytes (default 1309062500)")
      ->envname("ANCHORGEN_LIMIT");
  allocate
      ->add_option("--divisor", allocate_args.divisor,
                   "Data size divisor (default 0.019)")
      ->envname("ANCHORGEN_DIVISOR");
  auto* decoder_opt =
      allocate
          ->add_option("--decoder-bytes", allocate_args.decoder_bytes,
                       "Decoder size in bytes (default: adapter's, else 0)")
          ->envname("ANCHORGEN_DECODER_BYTES");

  ReportArgs report_args;
  auto* report = app.add_subcommand(
      "report", "Write the summary/histogram/rd-curve bundle");
  report
      ->add_option("--allocation", report_args.allocations,
                   "Allocation json (repeat per adapter)")
      ->required()
      ->envname("ANCHORGEN_ALLOCATION");
  report
      ->add_option("--results", report_args.results,
                   "Results csv matching each --allocation, for rd curves")
      ->envname("ANCHORGEN_RESULTS");
  report->add_option("--out", report_args.out, "Bundle output directory")
      ->required()
      ->envname("ANCHORGEN_OUT");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitFatal;
  }

  convert_args.matrix_given = matrix_opt->count() > 0;
  allocate_args.decoder_bytes_given = decoder_opt->count() > 0;

  try {
    if (convert->parsed()) return run_convert(convert_args);
    if (encode->parsed()) return run_encode(encode_args);
    if (allocate->parsed()) return run_allocate(allocate_args);
    if (report->parsed()) return run_report(report_args);
  } catch (const InfeasibleBudgetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFatal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFatal;
  }
  return kExitFatal;
}
