#include "evtrack/io.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "evtrack/error.hpp"

namespace evtrack {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s, std::size_t offset) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("malformed number '" + s + "'", offset);
  }
}

std::int64_t to_int(const std::string& s, std::size_t offset) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("malformed integer '" + s + "'", offset);
  }
}

}  // namespace

void write_estimate_header(std::ostream& out) { out << kEstimateHeader << '\n'; }

void write_estimate_row(std::ostream& out, const EstimateRow& row) {
  const auto& s = row.estimate;
  std::ostringstream line;
  line.precision(17);
  line << s.t << ',' << (s.k ? *s.k : -1);
  for (int i = 0; i < 4; ++i) line << ',' << s.x[i];
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) line << ',' << s.P(r, c);
  }
  line << ',' << (row.updated ? 1 : 0) << '\n';
  out << line.str();
}

void write_estimate_log(std::ostream& out, const PipelineResult& result, double query_rate) {
  write_estimate_header(out);
  const auto& records = result.records;
  for (std::size_t i = 0; i < records.size(); ++i) {
    write_estimate_row(out, {records[i].estimate, records[i].updated});
    if (query_rate <= 0.0 || i + 1 == records.size()) continue;
    // Open-loop samples strictly between this window and the next.
    const StateEstimate& from = records[i].estimate;
    const double next = records[i + 1].estimate.t;
    const double step = 1.0 / query_rate;
    for (double t = std::floor(from.t / step + 1.0) * step; t < next; t += step) {
      if (t <= from.t) continue;
      StateEstimate q = query(from, t, result.trace.model());
      q.k.reset();
      write_estimate_row(out, {q, false});
    }
  }
}

void write_estimate_log_file(const std::string& path, const PipelineResult& result,
                             double query_rate) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot create estimate log '" + path + "'");
  write_estimate_log(out, result, query_rate);
}

std::vector<EstimateRow> read_estimate_log(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing estimate log header", 0);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kEstimateHeader) throw ParseError("unexpected estimate log header", 0);
  std::size_t offset = line.size() + 1;
  std::vector<EstimateRow> rows;
  while (std::getline(in, line)) {
    const std::size_t here = offset;
    offset += line.size() + 1;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != 23) throw ParseError("estimate row needs 23 fields", here);
    EstimateRow row;
    row.estimate.t = to_double(f[0], here);
    const std::int64_t k = to_int(f[1], here);
    if (k >= 0) row.estimate.k = k;
    for (int i = 0; i < 4; ++i) row.estimate.x[i] = to_double(f[2 + i], here);
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) row.estimate.P(r, c) = to_double(f[6 + 4 * r + c], here);
    }
    const std::int64_t updated = to_int(f[22], here);
    if (updated != 0 && updated != 1) throw ParseError("'updated' must be 0 or 1", here);
    row.updated = updated == 1;
    rows.push_back(row);
  }
  return rows;
}

std::vector<EstimateRow> read_estimate_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open estimate log '" + path + "'");
  return read_estimate_log(in);
}

EstimateTrace trace_from_rows(std::span<const EstimateRow> rows, const MotionModel& model) {
  EstimateTrace trace(model);
  for (const auto& row : rows) {
    if (row.estimate.k) trace.append(row.estimate);
  }
  return trace;
}

void write_detections_log(std::ostream& out, std::span<const FrameDetections> frames) {
  out << "k,t,xmin,ymin,xmax,ymax,conf,cls\n";
  std::ostringstream line;
  line.precision(17);
  for (const auto& frame : frames) {
    for (const auto& d : frame.detections) {
      line.str("");
      line << frame.k << ',' << frame.t << ',' << d.bbox.x_min << ',' << d.bbox.y_min << ','
           << d.bbox.x_max << ',' << d.bbox.y_max << ',' << d.confidence << ',' << d.class_id
           << '\n';
      out << line.str();
    }
  }
}

void write_detections_log_file(const std::string& path, std::span<const FrameDetections> frames) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot create detections log '" + path + "'");
  write_detections_log(out, frames);
}

std::vector<Detection> read_detections_log(std::istream& in, std::vector<std::int64_t>* ks) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing detections header", 0);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "k,t,xmin,ymin,xmax,ymax,conf,cls") {
    throw ParseError("unexpected detections header", 0);
  }
  std::size_t offset = line.size() + 1;
  std::vector<Detection> out;
  while (std::getline(in, line)) {
    const std::size_t here = offset;
    offset += line.size() + 1;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw ParseError("detection row needs 8 fields", here);
    Detection d;
    if (ks != nullptr) ks->push_back(to_int(f[0], here));
    d.t = to_double(f[1], here);
    d.bbox = {to_double(f[2], here), to_double(f[3], here), to_double(f[4], here),
              to_double(f[5], here)};
    d.confidence = to_double(f[6], here);
    d.class_id = static_cast<int>(to_int(f[7], here));
    out.push_back(d);
  }
  return out;
}

std::vector<FrameDetections> frames_from_logs(std::span<const EstimateRow> rows,
                                              std::span<const Detection> detections,
                                              std::span<const std::int64_t> detection_ks) {
  std::map<std::int64_t, std::vector<Detection>> by_k;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    by_k[detection_ks[i]].push_back(detections[i]);
  }
  std::vector<FrameDetections> frames;
  for (const auto& row : rows) {
    if (!row.estimate.k) continue;
    FrameDetections f{*row.estimate.k, row.estimate.t, {}};
    if (auto it = by_k.find(f.k); it != by_k.end()) f.detections = std::move(it->second);
    frames.push_back(std::move(f));
  }
  return frames;
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  auto number = [](double v) -> nlohmann::ordered_json {
    if (!std::isfinite(v)) return nullptr;
    return v;
  };
  j["e_x"] = number(r.e_x);
  j["e_gt"] = number(r.e_gt);
  j["precision"] = r.precision ? number(*r.precision) : nullptr;
  j["recall"] = r.recall ? number(*r.recall) : nullptr;
  j["tp"] = r.tp ? nlohmann::ordered_json(*r.tp) : nullptr;
  j["fp"] = r.fp ? nlohmann::ordered_json(*r.fp) : nullptr;
  j["fn"] = r.fn ? nlohmann::ordered_json(*r.fn) : nullptr;
  j["coverage"] = r.coverage ? number(*r.coverage) : nullptr;
  j["t_s"] = r.t_s;
  j["t_f"] = r.t_f;
  return j.dump(2);
}

}  // namespace evtrack
