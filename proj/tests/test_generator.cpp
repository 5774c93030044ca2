#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <set>
#include <vector>

#include "hgns/generator.hpp"

using namespace hgns;

namespace {

bool bytes_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool same_trajectory(const Trajectory& a, const Trajectory& b) {
  if (a.states.size() != b.states.size() || a.controls.size() != b.controls.size()) return false;
  for (size_t t = 0; t < a.states.size(); ++t) {
    if (!bytes_equal(a.states[t].pressure, b.states[t].pressure)) return false;
    if (!bytes_equal(a.states[t].water_volume, b.states[t].water_volume)) return false;
    if (!bytes_equal(a.states[t].oil_volume, b.states[t].oil_volume)) return false;
  }
  for (size_t t = 0; t < a.controls.size(); ++t)
    if (!bytes_equal(a.controls[t].water_injection_rate, b.controls[t].water_injection_rate)) return false;
  return bytes_equal(a.grid.statics.perm_x, b.grid.statics.perm_x) &&
         bytes_equal(a.grid.statics.porosity, b.grid.statics.porosity) &&
         a.grid.wells.size() == b.grid.wells.size();
}

GenConfig small_config() {
  GenConfig cfg;
  cfg.dims = {8, 8, 4};
  cfg.trajectories = 2;
  cfg.steps = 4;
  cfg.min_wells = 3;
  cfg.max_wells = 5;
  return cfg;
}

}  // namespace

TEST_SUITE("generator") {

TEST_CASE("same seed reproduces the dataset bit for bit") {
  GenConfig cfg = small_config();
  auto a = generate_dataset(cfg, 123);
  auto b = generate_dataset(cfg, 123);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(same_trajectory(a[i], b[i]));
  auto c = generate_dataset(cfg, 124);
  CHECK_FALSE(same_trajectory(a[0], c[0]));
}

TEST_CASE("one trajectory, one step") {
  GenConfig cfg = small_config();
  cfg.trajectories = 1;
  cfg.steps = 1;
  auto data = generate_dataset(cfg, 5);
  REQUIRE(data.size() == 1);
  CHECK(data[0].states.size() == 2);
  CHECK(data[0].controls.size() == 1);
  CHECK(data[0].states[0].time_index == 0);
  CHECK(data[0].states[1].time_index == 1);
}

TEST_CASE("trajectories differ from each other") {
  GenConfig cfg = small_config();
  auto data = generate_dataset(cfg, 9);
  REQUIRE(data.size() == 2);
  CHECK_FALSE(bytes_equal(data[0].grid.statics.perm_x, data[1].grid.statics.perm_x));
  CHECK_FALSE(bytes_equal(data[0].states[0].pressure, data[1].states[0].pressure));
}

TEST_CASE("wells sit on distinct columns with both kinds present") {
  GenConfig cfg = small_config();
  for (uint64_t seed : {1, 2, 3}) {
    auto data = generate_dataset(cfg, seed);
    for (const Trajectory& tr : data) {
      const Grid& g = tr.grid;
      CHECK(g.wells.size() >= static_cast<size_t>(cfg.min_wells));
      CHECK(g.wells.size() <= static_cast<size_t>(cfg.max_wells));
      int ninj = 0, nprod = 0;
      std::set<std::pair<int64_t, int64_t>> columns;
      for (const Well& w : g.wells) {
        (w.kind == Well::kInjector ? ninj : nprod)++;
        REQUIRE(w.perforations.size() == static_cast<size_t>(g.dims[2]));
        auto base = g.cell_xyz(w.perforations[0]);
        columns.insert({base[0], base[1]});
        for (int32_t p : w.perforations) {
          auto xyz = g.cell_xyz(p);
          CHECK(xyz[0] == base[0]);
          CHECK(xyz[1] == base[1]);
        }
      }
      CHECK(ninj >= 1);
      CHECK(nprod >= 1);
      CHECK(columns.size() == g.wells.size());
    }
  }
}

TEST_CASE("static fields are heterogeneous and mutually consistent") {
  GenConfig cfg = small_config();
  auto data = generate_dataset(cfg, 11);
  const Grid& g = data[0].grid;
  double kmin = 1e300, kmax = 0.0;
  for (size_t c = 0; c < g.statics.perm_x.size(); ++c) {
    double k = g.statics.perm_x[c];
    CHECK(k > 0.0);
    kmin = std::min(kmin, k);
    kmax = std::max(kmax, k);
    CHECK(g.statics.perm_y[c] == k);
    CHECK(g.statics.perm_z[c] == 0.1 * k);
    CHECK(g.statics.porosity[c] >= 0.05);
    CHECK(g.statics.porosity[c] <= 0.40);
    CHECK(g.statics.pore_volume[c] > 0.0);
    CHECK(g.statics.connate_water_volume[c] == 0.1 * g.statics.pore_volume[c]);
  }
  CHECK(kmax / kmin > 4.0);  // the field is a field, not a constant
}

TEST_CASE("porosity tracks log permeability") {
  GenConfig cfg = small_config();
  auto data = generate_dataset(cfg, 17);
  const auto& s = data[0].grid.statics;
  size_t n = s.porosity.size();
  double mx = 0, my = 0;
  for (size_t c = 0; c < n; ++c) {
    mx += std::log(s.perm_x[c]);
    my += s.porosity[c];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t c = 0; c < n; ++c) {
    double dx = std::log(s.perm_x[c]) - mx, dy = s.porosity[c] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  CHECK(sxy / std::sqrt(sxx * syy) > 0.8);
}

TEST_CASE("injection schedule varies and stays on injector columns") {
  GenConfig cfg = small_config();
  cfg.steps = 6;
  auto data = generate_dataset(cfg, 21);
  const Trajectory& tr = data[0];
  const Grid& g = tr.grid;
  std::set<int64_t> inj_cells;
  for (const Well& w : g.wells)
    if (w.kind == Well::kInjector)
      for (int32_t p : w.perforations) inj_cells.insert(p);
  bool varies = false;
  for (const StepControls& ctl : tr.controls) {
    double total = 0.0;
    for (size_t c = 0; c < ctl.water_injection_rate.size(); ++c) {
      double q = ctl.water_injection_rate[c];
      CHECK(q >= 0.0);
      if (q > 0.0) CHECK(inj_cells.count(static_cast<int64_t>(c)) == 1);
      total += q;
    }
    CHECK(total > 0.0);
    if (!bytes_equal(ctl.water_injection_rate, tr.controls[0].water_injection_rate)) varies = true;
  }
  CHECK(varies);
}

TEST_CASE("trajectories start from a flowing field") {
  GenConfig cfg = small_config();
  auto data = generate_dataset(cfg, 31);
  for (const Trajectory& tr : data) {
    const std::vector<double>& p = tr.states[0].pressure;
    double lo = p[0], hi = p[0];
    for (double v : p) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(hi - lo > 1.0);  // burn-in already shaped the pressure field
  }
}

TEST_CASE("desk default passes the mass-balance audit") {
  GenConfig cfg;  // 16x16x8, 10 trajectories, 24 steps
  std::vector<std::vector<StepReport>> reports;
  auto data = generate_dataset(cfg, 42, &reports);
  REQUIRE(data.size() == 10);
  REQUIRE(reports.size() == 10);
  for (size_t i = 0; i < data.size(); ++i) {
    const Trajectory& tr = data[i];
    const Grid& g = tr.grid;
    REQUIRE(tr.states.size() == 25);
    for (size_t t = 0; t + 1 < tr.states.size(); ++t) {
      const StepReport& rep = reports[i][t];
      CHECK(rep.clamp_events == 0);
      CHECK(rep.cg_residual <= cfg.sim.cg_tol);
      double dsum = 0.0;
      for (size_t c = 0; c < tr.states[t].water_volume.size(); ++c)
        dsum += tr.states[t + 1].water_volume[c] - tr.states[t].water_volume[c];
      CHECK(dsum == doctest::Approx(rep.injected_water - rep.produced_water)
                        .epsilon(1e-8)
                        .scale(std::abs(rep.injected_water) + 1.0));
    }
    for (const State& st : tr.states) {
      for (size_t c = 0; c < st.water_volume.size(); ++c) {
        CHECK(st.water_volume[c] >= g.statics.connate_water_volume[c]);
        CHECK(st.water_volume[c] <= g.statics.pore_volume[c]);
        CHECK(st.water_volume[c] + st.oil_volume[c] == g.statics.pore_volume[c]);
      }
    }
  }
}

TEST_CASE("infeasible configs are rejected") {
  GenConfig cfg = small_config();
  cfg.dims = {2, 2, 1};
  CHECK_THROWS_AS(generate_dataset(cfg, 1), std::invalid_argument);  // 5 wells, 4 columns

  cfg = small_config();
  cfg.trajectories = -1;
  CHECK_THROWS_AS(generate_dataset(cfg, 1), std::invalid_argument);

  cfg = small_config();
  cfg.steps = -1;
  CHECK_THROWS_AS(generate_dataset(cfg, 1), std::invalid_argument);

  cfg = small_config();
  cfg.min_wells = 0;
  CHECK_THROWS_AS(generate_dataset(cfg, 1), std::invalid_argument);

  cfg = small_config();
  cfg.min_wells = 4;
  cfg.max_wells = 3;
  CHECK_THROWS_AS(generate_dataset(cfg, 1), std::invalid_argument);
}

}  // TEST_SUITE
