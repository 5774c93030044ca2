#include "hgns/refsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace hgns {

namespace {

constexpr double kPsiPerPascal = 1.45037737730e-4;
constexpr double kGravity = 9.80665;  // m/s^2

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

int64_t axis_stride(const Grid& g, int axis) { return axis == 0 ? 1 : (axis == 1 ? g.dims[0] : g.dims[0] * g.dims[1]); }

const std::vector<double>& trans_of(const Grid& g, int axis) {
  return axis == 0 ? g.statics.trans_x : axis == 1 ? g.statics.trans_y : g.statics.trans_z;
}

}  // namespace

void PressureSystem::matvec(const double* x, double* y) const {
  if (well_diag.empty()) {
    for (int64_t i = 0; i < n; ++i) y[i] = diag[static_cast<size_t>(i)] * x[i];
    for (size_t f = 0; f < face_i.size(); ++f) {
      int32_t i = face_i[f], j = face_j[f];
      double c = face_coef[f];
      y[i] -= c * x[j];
      y[j] -= c * x[i];
    }
    return;
  }
  for (int64_t i = 0; i < n; ++i) y[i] = well_diag[static_cast<size_t>(i)] * x[i];
  for (size_t f = 0; f < face_i.size(); ++f) {
    double d = face_coef[f] * (x[face_i[f]] - x[face_j[f]]);
    y[face_i[f]] += d;
    y[face_j[f]] -= d;
  }
}

std::vector<double> phase_mobility(const State& state, const Grid& grid, int phase) {
  const RelPermTable& table = phase == 0 ? grid.statics.fluid.relperm_w : grid.statics.fluid.relperm_o;
  double mu = phase == 0 ? grid.statics.fluid.mu_w : grid.statics.fluid.mu_o;
  int64_t n = grid.ncells();
  std::vector<double> lam(static_cast<size_t>(n), 0.0);
  for (int64_t c = 0; c < n; ++c) {
    if (!grid.is_active(c)) continue;
    double v = grid.statics.pore_volume[static_cast<size_t>(c)];
    if (!(v > 0.0)) continue;
    double vol = phase == 0 ? state.water_volume[static_cast<size_t>(c)] : state.oil_volume[static_cast<size_t>(c)];
    lam[static_cast<size_t>(c)] = table.eval(vol / v) / mu;
  }
  return lam;
}

double well_index(const Grid& grid, int64_t cell, double multiplier) {
  const std::vector<double>* perm[3] = {&grid.statics.perm_x, &grid.statics.perm_y, &grid.statics.perm_z};
  double vol = grid.cell_size[0] * grid.cell_size[1] * grid.cell_size[2];
  double sum = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    double d = grid.cell_size[static_cast<size_t>(axis)];
    sum += vol / (d * d) * (*perm[axis])[static_cast<size_t>(cell)];  // (A/d) * k
  }
  return multiplier * sum / 3.0;
}

PressureSystem assemble_pressure_system(const State& state, const Grid& grid, const std::vector<double>& lambda_total) {
  double lam_max = 0.0;
  for (double l : lambda_total) lam_max = std::max(lam_max, l);
  if (lam_max <= 0.0) throw std::runtime_error("assemble_pressure_system: singular system (total mobility is zero everywhere)");

  PressureSystem sys;
  sys.cells = grid.active_cells();
  sys.n = static_cast<int64_t>(sys.cells.size());
  std::vector<int32_t> row(static_cast<size_t>(grid.ncells()), -1);
  for (int64_t r = 0; r < sys.n; ++r) row[static_cast<size_t>(sys.cells[static_cast<size_t>(r)])] = static_cast<int32_t>(r);
  sys.diag.assign(static_cast<size_t>(sys.n), 0.0);
  sys.well_diag.assign(static_cast<size_t>(sys.n), 0.0);
  sys.rhs.assign(static_cast<size_t>(sys.n), 0.0);

  for (int64_t c = 0; c < grid.ncells(); ++c) {
    for (int axis = 0; axis < 3; ++axis) {
      double t = trans_of(grid, axis)[static_cast<size_t>(c)];
      if (t <= 0.0) continue;
      int64_t nb = c + axis_stride(grid, axis);
      double coef = t * 0.5 * (lambda_total[static_cast<size_t>(c)] + lambda_total[static_cast<size_t>(nb)]);
      if (coef <= 0.0) continue;
      int32_t ri = row[static_cast<size_t>(c)], rj = row[static_cast<size_t>(nb)];
      sys.face_i.push_back(ri);
      sys.face_j.push_back(rj);
      sys.face_coef.push_back(coef);
      sys.diag[static_cast<size_t>(ri)] += coef;
      sys.diag[static_cast<size_t>(rj)] += coef;
    }
  }
  for (const Well& w : grid.wells) {
    if (w.kind == Well::kInjector) {
      double per_perf = w.water_rate / static_cast<double>(w.perforations.size());
      for (int32_t p : w.perforations) sys.rhs[static_cast<size_t>(row[static_cast<size_t>(p)])] += per_perf;
    } else {
      for (int32_t p : w.perforations) {
        double wi = well_index(grid, p, w.wi_multiplier) * lambda_total[static_cast<size_t>(p)];
        int32_t r = row[static_cast<size_t>(p)];
        sys.diag[static_cast<size_t>(r)] += wi;
        sys.well_diag[static_cast<size_t>(r)] += wi;
        sys.rhs[static_cast<size_t>(r)] += wi * w.bhp;
      }
    }
  }
  return sys;
}

CgResult solve_pressure(const PressureSystem& sys, const SimConfig& config, const std::vector<double>& x0) {
  int64_t n = sys.n;
  if (static_cast<int64_t>(x0.size()) != n) throw std::invalid_argument("solve_pressure: x0 size mismatch");
  CgResult res;
  res.x = x0;
  std::vector<double> r(static_cast<size_t>(n)), z(static_cast<size_t>(n)), p(static_cast<size_t>(n)), ap(static_cast<size_t>(n));
  std::vector<double> minv(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    double d = sys.diag[static_cast<size_t>(i)];
    minv[static_cast<size_t>(i)] = d > 0.0 ? 1.0 / d : 1.0;
  }
  sys.matvec(res.x.data(), ap.data());
  for (int64_t i = 0; i < n; ++i) r[static_cast<size_t>(i)] = sys.rhs[static_cast<size_t>(i)] - ap[static_cast<size_t>(i)];
  double nb = norm2(sys.rhs);
  double nr0 = norm2(r);
  double denom = nb > 0.0 ? nb : (nr0 > 0.0 ? nr0 : 1.0);
  res.rel_residual = nr0 / denom;
  if (res.rel_residual <= config.cg_tol) return res;

  for (int64_t i = 0; i < n; ++i) z[static_cast<size_t>(i)] = minv[static_cast<size_t>(i)] * r[static_cast<size_t>(i)];
  p = z;
  double rz = 0.0;
  for (int64_t i = 0; i < n; ++i) rz += r[static_cast<size_t>(i)] * z[static_cast<size_t>(i)];
  for (int it = 1; it <= config.cg_max_iter; ++it) {
    sys.matvec(p.data(), ap.data());
    double pap = 0.0;
    for (int64_t i = 0; i < n; ++i) pap += p[static_cast<size_t>(i)] * ap[static_cast<size_t>(i)];
    if (pap <= 0.0) throw std::runtime_error("solve_pressure: matrix is not positive definite (p'Ap = " + std::to_string(pap) + ")");
    double alpha = rz / pap;
    for (int64_t i = 0; i < n; ++i) {
      res.x[static_cast<size_t>(i)] += alpha * p[static_cast<size_t>(i)];
      r[static_cast<size_t>(i)] -= alpha * ap[static_cast<size_t>(i)];
    }
    res.iters = it;
    res.rel_residual = norm2(r) / denom;
    if (res.rel_residual <= config.cg_tol) return res;
    for (int64_t i = 0; i < n; ++i) z[static_cast<size_t>(i)] = minv[static_cast<size_t>(i)] * r[static_cast<size_t>(i)];
    double rz_new = 0.0;
    for (int64_t i = 0; i < n; ++i) rz_new += r[static_cast<size_t>(i)] * z[static_cast<size_t>(i)];
    double beta = rz_new / rz;
    rz = rz_new;
    for (int64_t i = 0; i < n; ++i) p[static_cast<size_t>(i)] = z[static_cast<size_t>(i)] + beta * p[static_cast<size_t>(i)];
  }
  throw std::runtime_error("solve_pressure: no convergence after " + std::to_string(config.cg_max_iter) +
                           " iterations (relative residual " + std::to_string(res.rel_residual) + ")");
}

void enforce_closure(double v, double& vw, double& vo) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < 4; ++attempt) {
    vo = v - vw;
    for (int k = 0; k < 8 && vw + vo != v; ++k) vo = std::nextafter(vo, vw + vo < v ? inf : -inf);
    if (vw + vo == v) return;
    // the reachable sums can straddle v on exact rounding ties; shifting vw one
    // ulp moves them off the tie (vw then sits in a lower binade than v)
    vw = std::nextafter(vw, vw < v ? inf : -inf);
  }
}

State explicit_saturation_update(const State& state, const std::vector<double>& pressure, const Grid& grid,
                                 const SimConfig& config, const std::vector<double>& inject, StepReport* report) {
  int64_t n = grid.ncells();
  State next = state;
  StepReport rep;

  double inj_total = 0.0;
  for (int64_t c = 0; c < n; ++c) inj_total += inject[static_cast<size_t>(c)];

  double gamma_w = config.gravity_enabled ? grid.statics.fluid.rho_w * kGravity * kPsiPerPascal : 0.0;
  const std::vector<double>& vwc = grid.statics.connate_water_volume;
  const std::vector<double>& vtot = grid.statics.pore_volume;
  const RelPermTable& krw = grid.statics.fluid.relperm_w;
  double mu_w = grid.statics.fluid.mu_w;

  std::vector<double> rate(static_cast<size_t>(n));
  double remaining = config.dt;
  while (remaining > 0.0) {
    std::fill(rate.begin(), rate.end(), 0.0);
    // upwind water flux across every open face, fixed face order
    for (int64_t c = 0; c < n; ++c) {
      for (int axis = 0; axis < 3; ++axis) {
        double t = trans_of(grid, axis)[static_cast<size_t>(c)];
        if (t <= 0.0) continue;
        int64_t nb = c + axis_stride(grid, axis);
        double drive = pressure[static_cast<size_t>(c)] - pressure[static_cast<size_t>(nb)];
        if (gamma_w != 0.0)
          drive -= gamma_w * (grid.statics.depth[static_cast<size_t>(c)] - grid.statics.depth[static_cast<size_t>(nb)]);
        if (drive == 0.0) continue;
        int64_t up = drive > 0.0 ? c : nb;
        double sw_up = next.water_volume[static_cast<size_t>(up)] / vtot[static_cast<size_t>(up)];
        double flux = t * krw.eval(sw_up) / mu_w * drive;  // barrels/month, c -> nb
        rate[static_cast<size_t>(c)] -= flux;
        rate[static_cast<size_t>(nb)] += flux;
      }
    }
    double produced_rate = 0.0;
    for (const Well& w : grid.wells) {
      if (w.kind != Well::kProducer) continue;
      for (int32_t p : w.perforations) {
        double drawdown = pressure[static_cast<size_t>(p)] - w.bhp;
        if (drawdown <= 0.0) continue;  // producer cannot inject
        double sw = next.water_volume[static_cast<size_t>(p)] / vtot[static_cast<size_t>(p)];
        double out = well_index(grid, p, w.wi_multiplier) * krw.eval(sw) / mu_w * drawdown;
        rate[static_cast<size_t>(p)] -= out;
        produced_rate += out;
      }
    }
    for (int64_t c = 0; c < n; ++c) rate[static_cast<size_t>(c)] += inject[static_cast<size_t>(c)];

    double max_ds = 0.0;
    for (int64_t c = 0; c < n; ++c) {
      if (!grid.is_active(c) || !(vtot[static_cast<size_t>(c)] > 0.0)) continue;
      max_ds = std::max(max_ds, std::abs(rate[static_cast<size_t>(c)]) / vtot[static_cast<size_t>(c)]);
    }
    double dt_sub = max_ds > 0.0 ? std::min(remaining, config.max_sat_change / max_ds) : remaining;
    for (int64_t c = 0; c < n; ++c) {
      if (!grid.is_active(c)) continue;
      size_t i = static_cast<size_t>(c);
      double delta = dt_sub * rate[i];
      double vw = next.water_volume[i] + delta;
      if (vw == next.water_volume[i]) continue;  // untouched cells keep their bits
      if (vw < vwc[i]) {
        vw = vwc[i];
        ++rep.clamp_events;
      } else if (vw > vtot[i]) {
        vw = vtot[i];
        ++rep.clamp_events;
      }
      next.water_volume[i] = vw;
      enforce_closure(vtot[i], next.water_volume[i], next.oil_volume[i]);
    }
    rep.injected_water += dt_sub * inj_total;
    rep.produced_water += dt_sub * produced_rate;
    ++rep.substeps;
    remaining -= dt_sub;
    if (rep.substeps > 1000000)
      throw std::runtime_error("explicit_saturation_update: saturation sub-stepping failed to finish (" +
                               std::to_string(rep.substeps) + " substeps)");
  }
  if (report) *report = rep;
  return next;
}

State sim_step(const State& state, const Grid& grid, const SimConfig& config, StepReport* report, StepControls* controls_out) {
  int64_t n = grid.ncells();
  std::vector<double> lam_w = phase_mobility(state, grid, 0);
  std::vector<double> lam_o = phase_mobility(state, grid, 1);
  std::vector<double> lam_t(static_cast<size_t>(n));
  for (int64_t c = 0; c < n; ++c) lam_t[static_cast<size_t>(c)] = lam_w[static_cast<size_t>(c)] + lam_o[static_cast<size_t>(c)];

  PressureSystem sys = assemble_pressure_system(state, grid, lam_t);
  std::vector<double> x0(static_cast<size_t>(sys.n));
  for (int64_t r = 0; r < sys.n; ++r) x0[static_cast<size_t>(r)] = state.pressure[static_cast<size_t>(sys.cells[static_cast<size_t>(r)])];
  CgResult cg = solve_pressure(sys, config, x0);

  std::vector<double> pres(static_cast<size_t>(n), 0.0);
  for (int64_t r = 0; r < sys.n; ++r) pres[static_cast<size_t>(sys.cells[static_cast<size_t>(r)])] = cg.x[static_cast<size_t>(r)];

  // per-cell injection rates are constant over the step
  std::vector<double> inject(static_cast<size_t>(n), 0.0);
  for (const Well& w : grid.wells) {
    if (w.kind != Well::kInjector) continue;
    double per_perf = w.water_rate / static_cast<double>(w.perforations.size());
    for (int32_t p : w.perforations) inject[static_cast<size_t>(p)] += per_perf;
  }
  if (controls_out) controls_out->water_injection_rate = inject;

  StepReport rep;
  State next = explicit_saturation_update(state, pres, grid, config, inject, &rep);
  next.pressure = pres;
  next.time_index = state.time_index + 1;
  rep.cg_iters = cg.iters;
  rep.cg_residual = cg.rel_residual;
  if (report) *report = rep;
  return next;
}

Trajectory sim_rollout(const State& initial, const Grid& grid, int steps, const SimConfig& config,
                       std::vector<StepReport>* reports) {
  Trajectory traj;
  traj.grid = grid;
  traj.states.push_back(initial);
  for (int s = 0; s < steps; ++s) {
    StepReport rep;
    StepControls ctrl;
    traj.states.push_back(sim_step(traj.states.back(), grid, config, &rep, &ctrl));
    traj.controls.push_back(std::move(ctrl));
    if (reports) reports->push_back(rep);
  }
  return traj;
}

}  // namespace hgns
