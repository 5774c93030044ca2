#pragma once

#include <string>
#include <vector>

#include "hgns/grid.hpp"

namespace hgns {

struct State {
  std::vector<double> pressure;      // psi
  std::vector<double> water_volume;  // barrels
  std::vector<double> oil_volume;    // barrels
  int64_t time_index = 0;            // months
};

// Controls applied while advancing from state t to t+1.
struct StepControls {
  std::vector<double> water_injection_rate;  // per-cell, barrels/month
};

struct Trajectory {
  Grid grid;
  std::vector<State> states;
  std::vector<StepControls> controls;  // size >= states.size() - 1
};

// On-disk layout: a directory holding manifest.json plus one little-endian
// float32 array per field (static_<name>.f32, state_<t>_<name>.f32,
// control_<t>_<name>.f32), each ncells long, x fastest (id = x+nx*(y+ny*z)).
void write_trajectory(const Trajectory& traj, const std::string& dir);
Trajectory read_trajectory(const std::string& dir);

// Raw f32 array helpers shared with checkpoints and tools.
void write_f32(const std::string& path, const std::vector<double>& values);
std::vector<double> read_f32(const std::string& path, int64_t expected);

}  // namespace hgns
