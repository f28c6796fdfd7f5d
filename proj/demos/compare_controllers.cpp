// Flies the same scripted route under three yaw controllers and prints the
// localization error each one ends up with.
//
//   demo_compare_controllers [scene] [seconds] [seed]

#include <cstdio>

#include "aware/training.hpp"

using namespace aware;

int main(int argc, char** argv) {
  const std::string scene = argc > 1 ? argv[1] : "corridor_with_alcoves";
  const double seconds = argc > 2 ? std::stod(argv[2]) : 30.0;
  const uint64_t seed = argc > 3 ? std::stoull(argv[3]) : 3;

  SimConfig cfg;
  const Scenario sc = make_scenario(scene, cfg);
  EpisodeOptions eo;
  eo.duration = seconds;
  std::printf("%s, %.0f s, seed %llu, start index %zu\n\n", sc.name.c_str(), seconds,
              static_cast<unsigned long long>(seed), draw_start_index(sc, false, seed));
  std::printf("%-12s %-10s %8s %8s %8s %9s %12s\n", "controller", "status", "ape_mean", "ape_rmse", "ape_max", "drift%",
              "decision_ms");
  for (const char* spec : {"fixed:1", "fixed:8", "static:1000"}) {
    const EpisodeLog log = run_scripted(sc, cfg, ControllerSpec::parse(spec), seed, eo);
    const TrajMetrics m = log.metrics();
    double ms = 0;
    for (const auto& s : log.steps) ms += s.timing.decision_ms();
    std::printf("%-12s %-10s %8.3f %8.3f %8.3f %9.2f %12.2f\n", spec, status_name(log.status), m.ape_mean, m.ape_rmse,
                m.ape_max, m.drift_rate, ms / static_cast<double>(std::max<std::size_t>(log.steps.size(), 1)));
  }
}
