#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hgns/refsim.hpp"

namespace hgns {

// Knobs for synthetic dataset generation. Each trajectory gets its own
// permeability/porosity field, well pattern and initial pressure, all drawn
// from a per-trajectory stream so the dataset is a pure function of (config,
// seed).
struct GenConfig {
  std::array<int64_t, 3> dims{16, 16, 8};
  std::array<double, 3> cell_size{50.0, 50.0, 10.0};  // meters
  int trajectories = 10;
  int steps = 24;  // sim steps (months) per trajectory
  int min_wells = 5, max_wells = 10;

  // log-permeability field: mean_log_perm + log_perm_std * smoothed unit
  // noise, exponentiated to millidarcy. smooth_radius is the box-blur
  // half-width in cells (two passes, replicated edges). The default is tight
  // rock so that realistic injection rates produce O(100 psi) pressure
  // swings rather than pinning the whole field at producer BHP.
  double mean_log_perm = 0.4;  // exp(0.4) ~ 1.5 mD
  double log_perm_std = 0.8;
  int smooth_radius = 2;

  double initial_pressure = 4000.0;    // psi, jittered +-250 per trajectory
  double min_inject_rate = 800.0;      // barrels/month per injector
  double max_inject_rate = 2000.0;
  double min_producer_bhp = 2200.0;    // psi
  double max_producer_bhp = 3000.0;

  // per-step injector schedule: each month every injector runs at its base
  // rate times an independent draw from [min_rate_factor, max_rate_factor].
  // Without this the incompressible pressure field would freeze after the
  // start-up transient.
  double min_rate_factor = 0.4;
  double max_rate_factor = 1.6;

  SimConfig sim;
};

// Builds `trajectories` independent box-grid waterflood rollouts. Wells land
// on distinct (x, y) columns, perforated over the full height, alternating
// injector/producer so both kinds are always present. Each trajectory starts
// from the state after one burn-in step at base rates (wells already
// flowing), then advances `steps` scheduled months. When `reports` is given
// it receives one StepReport list per trajectory. Throws
// std::invalid_argument on an infeasible config (more wells than columns,
// bad counts or ranges).
std::vector<Trajectory> generate_dataset(const GenConfig& config, uint64_t seed,
                                         std::vector<std::vector<StepReport>>* reports = nullptr);

}  // namespace hgns
