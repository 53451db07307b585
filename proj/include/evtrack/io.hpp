#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "evtrack/metrics.hpp"
#include "evtrack/pipeline.hpp"

namespace evtrack {

/// Row of the estimate log: `t,k,x,y,vx,vy,p00..p33,updated`.
/// Window rows carry k >= 0. Fixed-rate query rows carry k = -1 and
/// updated = 0; they are informational and skipped when rebuilding a trace.
struct EstimateRow {
  StateEstimate estimate;  ///< estimate.k is the window index, nullopt for query rows
  bool updated = false;
};

inline constexpr const char* kEstimateHeader =
    "t,k,x,y,vx,vy,p00,p01,p02,p03,p10,p11,p12,p13,p20,p21,p22,p23,p30,p31,p32,p33,updated";

void write_estimate_header(std::ostream& out);
void write_estimate_row(std::ostream& out, const EstimateRow& row);

/// Writes the window records, interleaving open-loop query samples every
/// 1/query_rate seconds when query_rate > 0.
void write_estimate_log(std::ostream& out, const PipelineResult& result, double query_rate = 0.0);
void write_estimate_log_file(const std::string& path, const PipelineResult& result,
                             double query_rate = 0.0);

std::vector<EstimateRow> read_estimate_log(std::istream& in);
std::vector<EstimateRow> read_estimate_log_file(const std::string& path);

/// Window rows only, in order.
EstimateTrace trace_from_rows(std::span<const EstimateRow> rows, const MotionModel& model);

/// Detections log: `k,t,xmin,ymin,xmax,ymax,conf,cls`, one row per box.
void write_detections_log(std::ostream& out, std::span<const FrameDetections> frames);
void write_detections_log_file(const std::string& path, std::span<const FrameDetections> frames);
std::vector<Detection> read_detections_log(std::istream& in, std::vector<std::int64_t>* ks = nullptr);

/// Frames from the window rows of an estimate log, filled with the logged
/// detections of the same k.
std::vector<FrameDetections> frames_from_logs(std::span<const EstimateRow> rows,
                                              std::span<const Detection> detections,
                                              std::span<const std::int64_t> detection_ks);

/// `{e_x, e_gt, precision, recall, tp, fp, fn, coverage, t_s, t_f}`; missing
/// values are null.
std::string report_to_json(const EvalReport& report);

}  // namespace evtrack
