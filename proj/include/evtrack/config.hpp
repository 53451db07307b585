#pragma once

#include <optional>
#include <string>

#include "evtrack/detection.hpp"
#include "evtrack/pipeline.hpp"
#include "evtrack/simulate.hpp"

namespace evtrack {

struct DetectorChoice {
  enum class Kind { oracle, bridge };
  Kind kind = Kind::oracle;
  OracleNoise oracle;
  std::string bridge_address;
  int timeout_ms = 5000;
};

/// Everything a run needs, usually loaded from one JSON file. See
/// configs/*.json and the README for the schema.
struct RunConfig {
  SensorGeometry geometry{240, 180};
  std::optional<SceneConfig> scene;
  PipelineConfig pipeline;
  DetectorChoice detector;
  std::optional<double> t_s;  ///< nullopt: first accepted measurement
  std::optional<double> t_f;  ///< nullopt: end of groundtruth
  double query_rate = 0.0;    ///< fixed-rate query rows in the estimate log

  /// Propagates geometry into the scene and pipeline.
  void sync_geometry();
};

/// Parses a JSON document. Unknown keys are rejected. Throws ConfigError.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

/// A scene from a document; accepts either a full run config containing
/// "scene" or a bare scene object with an optional "geometry".
SceneConfig parse_scene_config(const std::string& json_text);

}  // namespace evtrack
