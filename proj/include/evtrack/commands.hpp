#pragma once

#include <cstdint>
#include <exception>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evtrack/config.hpp"
#include "evtrack/io.hpp"
#include "evtrack/metrics.hpp"
#include "evtrack/pipeline.hpp"

namespace evtrack {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,    ///< configuration or I/O problem
  kExitRuntime = 2,   ///< pipeline / numerical failure
  kExitBridge = 3,    ///< bridge connection or protocol failure
};

int exit_code_for(const std::exception& e);

// --- simulate --------------------------------------------------------------

struct SimulateOptions {
  std::string config_path;
  std::string events_path;
  std::string groundtruth_path;
  std::optional<EventFormat> format;  ///< default: from the events file extension
  std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateOptions& opts, std::ostream& out, std::ostream& err);

// --- track -----------------------------------------------------------------

/// Flag overrides applied on top of the JSON config (flags win).
struct RunOverrides {
  std::optional<std::int64_t> N;
  std::optional<double> n;
  std::optional<int> bins;
  std::optional<std::string> detector;  ///< "oracle" or "bridge"
  std::optional<std::string> bridge_address;
  std::optional<double> sigma;
  std::optional<double> p_miss;
  std::optional<double> p_fp;
  std::optional<std::uint64_t> seed;
  std::optional<double> q;
  std::optional<double> sigma_meas;
  std::optional<double> latency;
  std::optional<double> query_rate;
  std::optional<bool> concurrent;
  std::optional<bool> gate;
  std::optional<int> width;
  std::optional<int> height;

  void apply(RunConfig& rc) const;
};

struct TrackOptions {
  std::string config_path;  ///< optional
  std::string events_path;
  std::optional<EventFormat> format;
  std::string groundtruth_path;  ///< required by the oracle detector
  std::string estimates_path;
  std::string detections_path;   ///< optional
  RunOverrides overrides;
};

/// Runs the pipeline on an event source. For the bridge detector the
/// connection and handshake happen before the first event is read.
PipelineResult track(const RunConfig& rc, const EventSource& source, const GroundTruth* gt);
PipelineResult track(const RunConfig& rc, std::span<const Event> events, const GroundTruth* gt);

void print_summary(std::ostream& out, const PipelineResult& result, double latency);

int cmd_track(const TrackOptions& opts, std::ostream& out, std::ostream& err);

// --- eval ------------------------------------------------------------------

/// Metrics for one trace. t_s defaults to the first updated row, t_f to the
/// end of the groundtruth. Detection metrics are filled when frames are given.
EvalReport evaluate(const EstimateTrace& trace, const GroundTruth& gt,
                    std::optional<double> first_update, std::optional<double> t_s,
                    std::optional<double> t_f, const std::vector<FrameDetections>* frames,
                    int target_class);

EvalReport evaluate(const PipelineResult& result, const GroundTruth& gt, const RunConfig& rc);

struct EvalOptions {
  std::string config_path;  ///< optional; supplies Q, target class and eval window
  std::string estimates_path;
  std::string groundtruth_path;
  std::string detections_path;  ///< optional
  std::string report_path;      ///< optional; stdout otherwise
  std::optional<double> t_s;
  std::optional<double> t_f;
  std::optional<double> q;
};

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err);

// --- sweep -----------------------------------------------------------------

struct SweepRow {
  std::int64_t N = 0;
  double n = 0.0;
  std::optional<EvalReport> report;  ///< nullopt when the run failed
  double mean_dt = 0.0;
  std::string error;
};

inline constexpr const char* kSweepHeader = "N,n,e_x,e_gt,precision,recall,coverage,mean_dt";

/// One track+eval per N. Failures are recorded in the row and the sweep goes on.
std::vector<SweepRow> sweep(const RunConfig& rc, std::span<const Event> events,
                            const GroundTruth& gt, std::span<const std::int64_t> sizes,
                            int jobs = 1);

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

struct SweepOptions {
  std::string config_path;
  std::string events_path;       ///< optional; simulated from the config scene otherwise
  std::optional<EventFormat> format;
  std::string groundtruth_path;  ///< required when events_path is given
  std::string out_path;          ///< optional; stdout otherwise
  std::vector<std::int64_t> sizes;
  int jobs = 1;
  RunOverrides overrides;
};

int cmd_sweep(const SweepOptions& opts, std::ostream& out, std::ostream& err);

// --- bench -----------------------------------------------------------------

struct BenchOptions {
  std::int64_t events = 2'000'000;
  std::int64_t N = 10'000;
  int bins = 5;
  SensorGeometry geometry{240, 180};
  std::uint64_t seed = 1;
};

struct BenchResult {
  std::int64_t events = 0;
  std::int64_t windows = 0;
  double seconds = 0.0;
  double events_per_second = 0.0;
};

/// Windowing + tensorization throughput on a synthetic uniform stream.
BenchResult bench_windowing(const BenchOptions& opts);

int cmd_bench(const BenchOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace evtrack
