// Flies a few seconds, then draws the yaw observability cost seen from the
// current pose: lower bars are better-constrained headings.
//
//   demo_observability_curve [scene] [seconds]

#include <cstdio>

#include "aware/training.hpp"

using namespace aware;

int main(int argc, char** argv) {
  const std::string scene = argc > 1 ? argv[1] : "corridor_with_alcoves";
  const double seconds = argc > 2 ? std::stod(argv[2]) : 8.0;

  SimConfig cfg;
  const Scenario sc = make_scenario(scene, cfg);
  EpisodeOptions eo;
  eo.duration = seconds;
  eo.start_index = draw_start_index(sc, false, 1);
  auto pilot = make_scripted_pilot(sc, cfg, false, *eo.start_index);
  Episode ep(sc, cfg, ControllerSpec::static_mpc(1000), *pilot, 1, eo);
  while (!ep.done()) ep.step(ep.spec_weights());

  const ObservabilityCurve& c = ep.curve();
  double lo = 1e300, hi = -1e300;
  for (double j : c.costs) {
    lo = std::min(lo, std::log10(j));
    hi = std::max(hi, std::log10(j));
  }
  std::printf("%s at t = %.1f s, position (%.2f, %.2f, %.2f), heading %.2f rad\n", sc.name.c_str(), ep.stamp(),
              ep.gt().p.x(), ep.gt().p.y(), ep.gt().p.z(), ep.gt().psi);
  std::printf("candidate yaw is relative to the body; cost is trace((FIM + reg I)^-1), log scale\n\n");
  std::size_t best = 0;
  for (std::size_t i = 1; i < c.costs.size(); ++i)
    if (c.costs[i] < c.costs[best]) best = i;
  for (std::size_t i = 0; i < c.costs.size(); ++i) {
    const int bar = hi > lo ? static_cast<int>(50.0 * (std::log10(c.costs[i]) - lo) / (hi - lo)) : 0;
    std::printf("%+6.2f %10.3e |%s%s\n", c.yaws[i], c.costs[i], std::string(static_cast<std::size_t>(bar) + 1, '#').c_str(),
                i == best ? "  <- best" : "");
  }
}
