#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <random>

#include "hgns/refsim.hpp"

using namespace hgns;

namespace {

Grid make_grid(int64_t nx, int64_t ny, int64_t nz, double perm = 100.0) {
  Grid g;
  g.dims = {nx, ny, nz};
  g.cell_size = {1.0, 1.0, 1.0};
  size_t n = static_cast<size_t>(g.ncells());
  g.active.assign(n, 1);
  g.statics.depth.resize(n);
  for (int64_t c = 0; c < g.ncells(); ++c) g.statics.depth[static_cast<size_t>(c)] = 1000.0 + static_cast<double>(g.cell_xyz(c)[2]);
  g.statics.porosity.assign(n, 0.25);
  g.statics.pore_volume.assign(n, 10.0);
  g.statics.connate_water_volume.assign(n, 1.0);
  g.statics.perm_x.assign(n, perm);
  g.statics.perm_y.assign(n, perm);
  g.statics.perm_z.assign(n, perm);
  // S_wc = 0.1 with zero water mobility at connate; oil fully mobile when S_o = 0.9
  g.statics.fluid.mu_w = 0.5;
  g.statics.fluid.mu_o = 20.0;
  g.statics.fluid.relperm_w = {{0.1, 0.3, 0.5, 0.7, 0.9}, {0.0, 0.05, 0.2, 0.45, 0.8}};
  g.statics.fluid.relperm_o = {{0.1, 0.5, 0.9}, {0.0, 0.35, 0.85}};
  compute_face_transmissibilities(g);
  return g;
}

// constant unit total mobility: k_r = 1 for both phases, mu = 2 each
void unit_mobility(Grid& g) {
  g.statics.fluid.mu_w = 2.0;
  g.statics.fluid.mu_o = 2.0;
  g.statics.fluid.relperm_w = {{0.0, 1.0}, {1.0, 1.0}};
  g.statics.fluid.relperm_o = {{0.0, 1.0}, {1.0, 1.0}};
}

State make_state(const Grid& g, double p, double vw) {
  State s;
  size_t n = static_cast<size_t>(g.ncells());
  s.pressure.assign(n, p);
  s.water_volume.assign(n, vw);
  s.oil_volume.assign(n, 0.0);
  for (size_t c = 0; c < n; ++c)
    enforce_closure(g.statics.pore_volume[c], s.water_volume[c], s.oil_volume[c]);
  return s;
}

// Gaussian elimination with partial pivoting, independent of the CG path.
std::vector<double> dense_solve(const PressureSystem& sys) {
  int64_t n = sys.n;
  std::vector<double> a(static_cast<size_t>(n * n), 0.0);
  for (int64_t i = 0; i < n; ++i) a[static_cast<size_t>(i * n + i)] = sys.diag[static_cast<size_t>(i)];
  for (size_t f = 0; f < sys.face_i.size(); ++f) {
    a[static_cast<size_t>(sys.face_i[f] * n + sys.face_j[f])] -= sys.face_coef[f];
    a[static_cast<size_t>(sys.face_j[f] * n + sys.face_i[f])] -= sys.face_coef[f];
  }
  std::vector<double> b = sys.rhs;
  for (int64_t col = 0; col < n; ++col) {
    int64_t piv = col;
    for (int64_t r = col + 1; r < n; ++r)
      if (std::abs(a[static_cast<size_t>(r * n + col)]) > std::abs(a[static_cast<size_t>(piv * n + col)])) piv = r;
    for (int64_t k = 0; k < n; ++k) std::swap(a[static_cast<size_t>(col * n + k)], a[static_cast<size_t>(piv * n + k)]);
    std::swap(b[static_cast<size_t>(col)], b[static_cast<size_t>(piv)]);
    for (int64_t r = col + 1; r < n; ++r) {
      double f = a[static_cast<size_t>(r * n + col)] / a[static_cast<size_t>(col * n + col)];
      for (int64_t k = col; k < n; ++k) a[static_cast<size_t>(r * n + k)] -= f * a[static_cast<size_t>(col * n + k)];
      b[static_cast<size_t>(r)] -= f * b[static_cast<size_t>(col)];
    }
  }
  std::vector<double> x(static_cast<size_t>(n));
  for (int64_t r = n - 1; r >= 0; --r) {
    double acc = b[static_cast<size_t>(r)];
    for (int64_t k = r + 1; k < n; ++k) acc -= a[static_cast<size_t>(r * n + k)] * x[static_cast<size_t>(k)];
    x[static_cast<size_t>(r)] = acc / a[static_cast<size_t>(r * n + r)];
  }
  return x;
}

double total_water(const State& s, const Grid& g) {
  double sum = 0.0;
  for (int64_t c = 0; c < g.ncells(); ++c)
    if (g.is_active(c)) sum += s.water_volume[static_cast<size_t>(c)];
  return sum;
}

}  // namespace

TEST_SUITE("refsim") {

TEST_CASE("phase mobility is relperm over viscosity") {
  Grid g = make_grid(2, 1, 1);
  State s = make_state(g, 5000.0, 1.0);  // S_w at connate knot, k_rw = 0
  CHECK(phase_mobility(s, g, 0)[0] == 0.0);

  g.statics.fluid.relperm_w = {{0.0, 1.0}, {1.0, 1.0}};
  g.statics.fluid.mu_w = 2.0;
  CHECK(phase_mobility(s, g, 0)[0] == doctest::Approx(0.5));  // k_r = 1, mu = 2

  g.statics.fluid.relperm_w = {{0.0, 1.0}, {0.0, 1.0}};
  g.statics.fluid.mu_w = 0.8;
  s.water_volume[0] = 4.0;  // S_w = 0.4 on V = 10
  CHECK(phase_mobility(s, g, 0)[0] == doctest::Approx(0.5));
}

TEST_CASE("cg solves trivial systems exactly") {
  SimConfig cfg;
  cfg.cg_tol = 1e-12;
  PressureSystem eye;
  eye.n = 3;
  eye.diag = {1.0, 1.0, 1.0};
  eye.rhs = {4.0, -2.0, 7.0};
  CgResult r = solve_pressure(eye, cfg, {0.0, 0.0, 0.0});
  for (int i = 0; i < 3; ++i) CHECK(r.x[static_cast<size_t>(i)] == doctest::Approx(eye.rhs[static_cast<size_t>(i)]));

  PressureSystem d2;
  d2.n = 2;
  d2.diag = {2.0, 4.0};
  d2.rhs = {2.0, 8.0};
  r = solve_pressure(d2, cfg, {0.0, 0.0});
  CHECK(r.x[0] == doctest::Approx(1.0));
  CHECK(r.x[1] == doctest::Approx(2.0));
}

TEST_CASE("cg matches a dense factorization oracle on a random SPD system") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  PressureSystem sys;
  sys.n = 20;
  sys.diag.assign(20, 0.0);
  sys.rhs.resize(20);
  for (double& b : sys.rhs) b = u(rng) * 10.0 - 5.0;
  for (int32_t i = 0; i < 20; ++i)
    for (int32_t j = i + 1; j < 20; ++j) {
      if (rng() % 3) continue;
      double c = u(rng);
      sys.face_i.push_back(i);
      sys.face_j.push_back(j);
      sys.face_coef.push_back(c);
      sys.diag[static_cast<size_t>(i)] += c;
      sys.diag[static_cast<size_t>(j)] += c;
    }
  for (double& d : sys.diag) d += u(rng);  // strictly diagonally dominant

  SimConfig cfg;
  cfg.cg_tol = 1e-12;
  CgResult r = solve_pressure(sys, cfg, std::vector<double>(20, 0.0));
  std::vector<double> ref = dense_solve(sys);
  for (int i = 0; i < 20; ++i) CHECK(r.x[static_cast<size_t>(i)] == doctest::Approx(ref[static_cast<size_t>(i)]).epsilon(1e-8));
  CHECK(r.rel_residual <= 1e-12);

  cfg.cg_max_iter = 1;
  try {
    solve_pressure(sys, cfg, std::vector<double>(20, 0.0));
    FAIL("expected a convergence error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("convergence") != std::string::npos);
    CHECK(std::string(e.what()).find("residual") != std::string::npos);
  }
}

TEST_CASE("single perforated cell equilibrates at bottom-hole pressure") {
  Grid g = make_grid(1, 1, 1);
  unit_mobility(g);
  g.wells.push_back({Well::kProducer, "p", {0}, 0.0, 3000.0, 1.0});
  g.validate();
  State s = make_state(g, 6500.0, 5.0);
  std::vector<double> lam_t(1, 1.0);
  PressureSystem sys = assemble_pressure_system(s, g, lam_t);
  REQUIRE(sys.n == 1);
  SimConfig cfg;
  CgResult r = solve_pressure(sys, cfg, {6500.0});
  CHECK(r.x[0] == doctest::Approx(3000.0));
}

TEST_CASE("well-free system has the constant null space") {
  Grid g = make_grid(2, 1, 1);
  unit_mobility(g);
  State s = make_state(g, 5000.0, 5.0);
  PressureSystem sys = assemble_pressure_system(s, g, std::vector<double>(2, 1.0));
  std::vector<double> ones{1.0, 1.0}, out(2);
  sys.matvec(ones.data(), out.data());
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
  CHECK(sys.diag[0] > 0.0);
}

TEST_CASE("three-cell chain matches the hand-solved tridiagonal system") {
  Grid g = make_grid(3, 1, 1, 1.0);  // unit T along the chain
  unit_mobility(g);
  g.wells.push_back({Well::kInjector, "i", {0}, 3.0, 0.0, 1.0});
  g.wells.push_back({Well::kProducer, "p", {2}, 0.0, 1000.0, 2.0});
  State s = make_state(g, 1000.0, 5.0);
  std::vector<double> lam_t(3, 1.0);
  PressureSystem sys = assemble_pressure_system(s, g, lam_t);
  // A = [[1,-1,0],[-1,2,-1],[0,-1,3]], b = [3,0,2000]
  CHECK(sys.diag[0] == doctest::Approx(1.0));
  CHECK(sys.diag[1] == doctest::Approx(2.0));
  CHECK(sys.diag[2] == doctest::Approx(3.0));
  CHECK(sys.rhs[0] == doctest::Approx(3.0));
  CHECK(sys.rhs[2] == doctest::Approx(2000.0));
  SimConfig cfg;
  cfg.cg_tol = 1e-13;
  CgResult r = solve_pressure(sys, cfg, {1000.0, 1000.0, 1000.0});
  std::vector<double> ref = dense_solve(sys);
  for (int i = 0; i < 3; ++i) CHECK(r.x[static_cast<size_t>(i)] == doctest::Approx(ref[static_cast<size_t>(i)]).epsilon(1e-10));
  // producer cell sits closest to BHP, injector cell highest
  CHECK(r.x[0] > r.x[1]);
  CHECK(r.x[1] > r.x[2]);
  CHECK(r.x[2] > 1000.0);
}

TEST_CASE("assembly rejects an immobile field") {
  Grid g = make_grid(2, 1, 1);
  State s = make_state(g, 5000.0, 1.0);
  try {
    assemble_pressure_system(s, g, std::vector<double>(2, 0.0));
    FAIL("expected a singular system error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("singular") != std::string::npos);
  }
}

TEST_CASE("closure helper makes volumes sum bitwise") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    double v = 1.0 + 15.0 * u(rng);
    double vw = v * u(rng);
    double vo;
    enforce_closure(v, vw, vo);
    CHECK(vw + vo == v);
    CHECK(vo >= 0.0);
  }
}

TEST_CASE("uniform pressure and no wells leave the state untouched") {
  Grid g = make_grid(3, 2, 2);
  std::mt19937_64 rng(4);
  State s = make_state(g, 6500.0, 3.0);
  for (size_t c = 0; c < s.water_volume.size(); ++c) {
    s.water_volume[c] = 1.0 + 8.0 * std::uniform_real_distribution<double>(0, 1)(rng);
    enforce_closure(g.statics.pore_volume[c], s.water_volume[c], s.oil_volume[c]);
  }
  SimConfig cfg;
  StepReport rep;
  State next = sim_step(s, g, cfg, &rep);
  CHECK(std::memcmp(next.pressure.data(), s.pressure.data(), s.pressure.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(next.water_volume.data(), s.water_volume.data(), s.water_volume.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(next.oil_volume.data(), s.oil_volume.data(), s.oil_volume.size() * sizeof(double)) == 0);
  CHECK(rep.cg_iters == 0);
  CHECK(rep.clamp_events == 0);

  // closed box: equilibrium persists over a rollout, bit for bit
  Trajectory traj = sim_rollout(s, g, 5, cfg);
  REQUIRE(traj.states.size() == 6);
  for (const State& st : traj.states) {
    CHECK(std::memcmp(st.pressure.data(), s.pressure.data(), s.pressure.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(st.water_volume.data(), s.water_volume.data(), s.water_volume.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("producer alone rests at its bottom-hole pressure") {
  Grid g = make_grid(2, 1, 1);
  g.wells.push_back({Well::kProducer, "p", {1}, 0.0, 3000.0, 1.0});
  State s = make_state(g, 3000.0, 1.0);  // connate water: nothing to produce
  SimConfig cfg;
  StepReport rep;
  State next = sim_step(s, g, cfg, &rep);
  CHECK(next.pressure[0] == 3000.0);
  CHECK(next.pressure[1] == 3000.0);
  CHECK(next.water_volume == s.water_volume);
  CHECK(rep.produced_water == 0.0);
}

TEST_CASE("water moves from high to low pressure and is conserved") {
  Grid g = make_grid(2, 1, 1);
  State s = make_state(g, 0.0, 5.0);
  std::vector<double> p{2000.0, 1000.0};
  SimConfig cfg;
  StepReport rep;
  State next = explicit_saturation_update(s, p, g, cfg, std::vector<double>(2, 0.0), &rep);
  CHECK(next.water_volume[0] < 5.0);
  CHECK(next.water_volume[1] > 5.0);
  CHECK(total_water(next, g) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(next.water_volume[0] + next.oil_volume[0] == 10.0);
  CHECK(rep.substeps >= 1);
}

TEST_CASE("upwinding picks the upstream mobility") {
  Grid g = make_grid(2, 1, 1);
  // water mobile only above S_w = 0.5; downstream cell rich, upstream at connate
  State s = make_state(g, 0.0, 1.0);
  s.water_volume[1] = 9.0;
  enforce_closure(10.0, s.water_volume[1], s.oil_volume[1]);
  std::vector<double> p{2000.0, 1000.0};  // flow 0 -> 1, upstream k_rw(0.1) = 0
  SimConfig cfg;
  State next = explicit_saturation_update(s, p, g, cfg, std::vector<double>(2, 0.0));
  CHECK(next.water_volume == s.water_volume);  // nothing moves against zero upstream mobility
}

TEST_CASE("waterflood front matches a fine-substep oracle") {
  Grid g = make_grid(5, 1, 1);
  g.wells.push_back({Well::kInjector, "i", {0}, 2.0, 0.0, 1.0});
  g.wells.push_back({Well::kProducer, "p", {4}, 0.0, 3000.0, 1.0});
  State s0 = make_state(g, 6500.0, 1.0);
  SimConfig coarse;
  coarse.max_sat_change = 0.05;
  SimConfig fine;
  fine.max_sat_change = 0.0005;

  State a = s0, b = s0;
  for (int step = 0; step < 10; ++step) {
    a = sim_step(a, g, coarse);
    b = sim_step(b, g, fine);
  }
  auto front = [&](const State& st) {
    int64_t pos = 0;
    for (int64_t c = 0; c < 5; ++c)
      if (st.water_volume[static_cast<size_t>(c)] / 10.0 > 0.5) pos = c;
    return pos;
  };
  CHECK(std::abs(front(a) - front(b)) <= 1);
  for (int64_t c = 0; c < 5; ++c)
    CHECK(a.water_volume[static_cast<size_t>(c)] ==
          doctest::Approx(b.water_volume[static_cast<size_t>(c)]).epsilon(0.08));
}

TEST_CASE("quarter five-spot balances injected and produced water") {
  Grid g = make_grid(8, 8, 1);
  g.wells.push_back({Well::kInjector, "i", {0}, 5.0, 0.0, 1.0});
  g.wells.push_back({Well::kProducer, "p", {63}, 0.0, 3000.0, 5.0});
  g.validate();
  State s = make_state(g, 6500.0, 1.0);
  SimConfig cfg;
  double before = total_water(s, g);
  for (int step = 0; step < 8; ++step) {
    StepReport rep;
    State next = sim_step(s, g, cfg, &rep);
    double after = total_water(next, g);
    CHECK(rep.clamp_events == 0);
    CHECK(after - before ==
          doctest::Approx(rep.injected_water - rep.produced_water).epsilon(1e-8).scale(std::abs(rep.injected_water) + 1.0));
    CHECK(rep.cg_residual <= cfg.cg_tol);
    // bounds and closure on every active cell
    for (int64_t c = 0; c < g.ncells(); ++c) {
      size_t i = static_cast<size_t>(c);
      CHECK(next.water_volume[i] >= g.statics.connate_water_volume[i]);
      CHECK(next.water_volume[i] <= g.statics.pore_volume[i]);
      CHECK(next.water_volume[i] + next.oil_volume[i] == g.statics.pore_volume[i]);
    }
    s = next;
    before = after;
  }
  CHECK(s.pressure[0] > s.pressure[63]);  // injector side holds the higher pressure
}

TEST_CASE("saturation cap forces substeps under a strong injector") {
  Grid g = make_grid(3, 1, 1);
  g.wells.push_back({Well::kInjector, "i", {0}, 4.0, 0.0, 1.0});  // 0.4 pore volumes/month
  g.wells.push_back({Well::kProducer, "p", {2}, 0.0, 3000.0, 5.0});
  State s = make_state(g, 6500.0, 1.0);
  SimConfig cfg;
  StepReport rep;
  sim_step(s, g, cfg, &rep);
  CHECK(rep.substeps >= 4);
  CHECK(rep.clamp_events == 0);
}

TEST_CASE("gravity drains water downward when enabled") {
  Grid g = make_grid(1, 1, 2);
  State s = make_state(g, 0.0, 5.0);
  SimConfig cfg;
  cfg.gravity_enabled = true;
  std::vector<double> p(2, 4000.0);
  State next = explicit_saturation_update(s, p, g, cfg, std::vector<double>(2, 0.0));
  CHECK(next.water_volume[1] > 5.0);  // deeper cell gains water
  CHECK(next.water_volume[0] < 5.0);
  CHECK(total_water(next, g) == doctest::Approx(10.0).epsilon(1e-12));

  cfg.gravity_enabled = false;
  State still = explicit_saturation_update(s, p, g, cfg, std::vector<double>(2, 0.0));
  CHECK(still.water_volume == s.water_volume);
}

TEST_CASE("rollout records states, controls and reports") {
  Grid g = make_grid(4, 1, 1);
  g.wells.push_back({Well::kInjector, "i", {0, 1}, 3.0, 0.0, 1.0});
  g.wells.push_back({Well::kProducer, "p", {3}, 0.0, 3000.0, 2.0});
  State s = make_state(g, 6500.0, 1.0);
  SimConfig cfg;

  Trajectory empty = sim_rollout(s, g, 0, cfg);
  CHECK(empty.states.size() == 1);
  CHECK(empty.controls.empty());

  std::vector<StepReport> reps;
  Trajectory traj = sim_rollout(s, g, 3, cfg, &reps);
  REQUIRE(traj.states.size() == 4);
  REQUIRE(traj.controls.size() == 3);
  REQUIRE(reps.size() == 3);
  CHECK(traj.states[2].time_index == s.time_index + 2);
  // injector rate split equally across its two perforations
  CHECK(traj.controls[0].water_injection_rate[0] == doctest::Approx(1.5));
  CHECK(traj.controls[0].water_injection_rate[1] == doctest::Approx(1.5));
  CHECK(traj.controls[0].water_injection_rate[2] == 0.0);
  for (const StepReport& r : reps) CHECK(r.injected_water == doctest::Approx(3.0));
}

}  // TEST_SUITE
