// evtrack: simulate, track, eval, sweep and bench from the command line.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "evtrack/commands.hpp"
#include "evtrack/events.hpp"

namespace {

using namespace evtrack;

std::optional<EventFormat> to_format(const std::string& name) {
  if (name.empty()) return std::nullopt;
  auto f = parse_format_name(name);
  if (!f) throw CLI::ValidationError("--format", "expected 'text' or 'binary'");
  return f;
}

template <typename T>
void opt(CLI::App* app, const std::string& name, std::optional<T>& target,
         const std::string& help) {
  app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

void add_run_overrides(CLI::App* app, RunOverrides& o) {
  opt(app, "--N", o.N, "events per window");
  opt(app, "--n", o.n, "events per pixel (N = round(n*W*H))");
  opt(app, "--bins", o.bins, "temporal bins of the event tensor");
  opt(app, "--detector", o.detector, "oracle | bridge");
  opt(app, "--bridge", o.bridge_address, "bridge address: host:port, tcp://host:port, exec:CMD");
  opt(app, "--sigma", o.sigma, "oracle box-edge noise [px]");
  opt(app, "--p-miss", o.p_miss, "oracle miss probability");
  opt(app, "--p-fp", o.p_fp, "oracle false-positive probability");
  opt(app, "--seed", o.seed, "oracle seed");
  opt(app, "--q", o.q, "isotropic process noise [px^2/s^4]");
  opt(app, "--sigma-meas", o.sigma_meas, "measurement noise std [px]");
  opt(app, "--latency", o.latency, "detector latency offset [s]");
  opt(app, "--query-rate", o.query_rate, "extra open-loop rows per second in the estimate log");
  opt(app, "--concurrent", o.concurrent, "run stages on separate threads");
  opt(app, "--gate", o.gate, "chi-square innovation gate");
  opt(app, "--width", o.width, "sensor width");
  opt(app, "--height", o.height, "sensor height");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-camera target tracking with a multi-rate Kalman filter"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  SimulateOptions sim;
  std::string sim_format;
  auto* s = app.add_subcommand("simulate", "render a synthetic scene into events + groundtruth");
  s->add_option("--config", sim.config_path, "scene config (JSON)")->required();
  s->add_option("--events", sim.events_path, "output event file")->required();
  s->add_option("--groundtruth,--gt", sim.groundtruth_path, "output groundtruth CSV")->required();
  s->add_option("--format", sim_format, "text | binary (default from extension)");
  opt(s, "--seed", sim.seed, "override scene seed");

  TrackOptions tr;
  std::string tr_format;
  auto* t = app.add_subcommand("track", "run the tracker over an event file");
  t->add_option("--config", tr.config_path, "run config (JSON)");
  t->add_option("--events", tr.events_path, "input event file")->required();
  t->add_option("--format", tr_format, "text | binary (default from extension)");
  t->add_option("--groundtruth,--gt", tr.groundtruth_path, "groundtruth CSV (oracle detector)");
  t->add_option("--out", tr.estimates_path, "estimate log CSV")->required();
  t->add_option("--detections", tr.detections_path, "detections log CSV");
  add_run_overrides(t, tr.overrides);

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "compute E_x, E_gt and detection metrics");
  e->add_option("--config", ev.config_path, "run config (JSON)");
  e->add_option("--estimates", ev.estimates_path, "estimate log CSV")->required();
  e->add_option("--groundtruth,--gt", ev.groundtruth_path, "groundtruth CSV")->required();
  e->add_option("--detections", ev.detections_path, "detections log CSV");
  e->add_option("--report", ev.report_path, "output JSON (default stdout)");
  opt(e, "--ts", ev.t_s, "evaluation start [s]");
  opt(e, "--tf", ev.t_f, "evaluation end [s]");
  opt(e, "--q", ev.q, "isotropic process noise used by the tracker");

  SweepOptions sw;
  std::string sw_format;
  auto* w = app.add_subcommand("sweep", "track+eval for several window sizes");
  w->add_option("--config", sw.config_path, "run config (JSON)")->required();
  w->add_option("--events", sw.events_path, "input event file (default: simulate the scene)");
  w->add_option("--format", sw_format, "text | binary");
  w->add_option("--groundtruth,--gt", sw.groundtruth_path, "groundtruth CSV");
  w->add_option("--sizes", sw.sizes, "window sizes N")->required()->delimiter(',');
  w->add_option("--jobs,-j", sw.jobs, "parallel runs")->check(CLI::PositiveNumber);
  w->add_option("--out", sw.out_path, "output CSV (default stdout)");
  add_run_overrides(w, sw.overrides);

  BenchOptions bn;
  auto* b = app.add_subcommand("bench", "windowing + tensor throughput");
  b->add_option("--events", bn.events, "stream length")->check(CLI::PositiveNumber);
  b->add_option("--N", bn.N, "events per window")->check(CLI::PositiveNumber);
  b->add_option("--bins", bn.bins, "temporal bins")->check(CLI::PositiveNumber);
  b->add_option("--width", bn.geometry.width, "sensor width");
  b->add_option("--height", bn.geometry.height, "sensor height");
  b->add_option("--seed", bn.seed, "stream seed");

  try {
    app.parse(argc, argv);
    sim.format = to_format(sim_format);
    tr.format = to_format(tr_format);
    sw.format = to_format(sw_format);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("evtrack"));
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  if (*s) return cmd_simulate(sim, std::cout, std::cerr);
  if (*t) return cmd_track(tr, std::cout, std::cerr);
  if (*e) return cmd_eval(ev, std::cout, std::cerr);
  if (*w) return cmd_sweep(sw, std::cout, std::cerr);
  return cmd_bench(bn, std::cout, std::cerr);
}
