#pragma once

#include <cstdint>
#include <vector>

#include "hgns/grid.hpp"
#include "hgns/trajectory.hpp"

namespace hgns {

struct SimConfig {
  double dt = 1.0;              // months per step
  double cg_tol = 1e-10;        // relative residual
  int cg_max_iter = 5000;
  double max_sat_change = 0.05;  // per-substep |dS_w| cap
  bool gravity_enabled = false;
};

// Pressure system over active cells. face_i/face_j are row indices (i < j),
// face_coef the positive coupling c with A_ij = A_ji = -c; diag is the full
// diagonal (face sums plus well terms) and feeds the Jacobi preconditioner.
// matvec accumulates faces in flux form c * (x_i - x_j), so a constant field
// passes through the face terms exactly and only well_diag (the well part of
// the diagonal) contributes -- equilibria stay equilibria bit for bit.
struct PressureSystem {
  int64_t n = 0;
  std::vector<int32_t> cells;  // row -> cell id (empty for synthetic systems)
  std::vector<double> diag, rhs;
  std::vector<double> well_diag;  // empty means all zeros
  std::vector<int32_t> face_i, face_j;
  std::vector<double> face_coef;

  void matvec(const double* x, double* y) const;
};

struct CgResult {
  std::vector<double> x;
  int iters = 0;
  double rel_residual = 0.0;
};

struct StepReport {
  int cg_iters = 0;
  double cg_residual = 0.0;
  int substeps = 0;
  int64_t clamp_events = 0;
  double injected_water = 0.0;  // barrels over the step
  double produced_water = 0.0;
};

// lambda_j = k_rj(S_j) / mu_j per cell; phase 0 = water, 1 = oil. Inactive
// cells get 0.
std::vector<double> phase_mobility(const State& state, const Grid& grid, int phase);

// Peaceman-style well index: wi_multiplier times the cell's own
// transmissibility factor, mean over axes of (A_a/d_a) * k_a. Cell-local so
// an isolated perforated cell still couples to its well.
double well_index(const Grid& grid, int64_t cell, double multiplier);

PressureSystem assemble_pressure_system(const State& state, const Grid& grid, const std::vector<double>& lambda_total);

// Jacobi-preconditioned conjugate gradient, warm-started from x0 so that an
// equilibrium state (r0 = 0) returns x0 untouched.
CgResult solve_pressure(const PressureSystem& sys, const SimConfig& config, const std::vector<double>& x0);

// Makes V_w + V_o == V hold bitwise, adjusting V_o by a few ulps (and V_w by
// one ulp in the rare case where no V_o rounds to an exact sum).
void enforce_closure(double v, double& vw, double& vo);

// Explicit upwind water transport against a fixed pressure field, sub-stepped
// so |dS_w| <= max_sat_change per substep. inject holds per-cell injection
// rates (barrels/month); producer outflow is taken from grid.wells at the
// given pressures. Cells whose water volume does not move keep their exact
// bits. Does not advance time_index.
State explicit_saturation_update(const State& state, const std::vector<double>& pressure, const Grid& grid,
                                 const SimConfig& config, const std::vector<double>& inject,
                                 StepReport* report = nullptr);

// One IMPES step: implicit pressure (CG), explicit upwind water transport
// sub-stepped to the |dS| cap, producers BHP-controlled, injectors
// rate-controlled. Pure in its inputs. controls_out, when given, receives the
// per-cell injected-water rate applied during the step.
State sim_step(const State& state, const Grid& grid, const SimConfig& config, StepReport* report = nullptr,
               StepControls* controls_out = nullptr);

Trajectory sim_rollout(const State& initial, const Grid& grid, int steps, const SimConfig& config,
                       std::vector<StepReport>* reports = nullptr);

}  // namespace hgns
