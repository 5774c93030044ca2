#include "hgns/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace hgns {
namespace {

// In-place box blur along `axis`, edges replicated.
void blur_axis(std::vector<double>& f, const std::array<int64_t, 3>& dims, int axis, int radius) {
  if (radius <= 0) return;
  const int64_t nx = dims[0], ny = dims[1], nz = dims[2];
  std::vector<double> out(f.size());
  const double inv = 1.0 / static_cast<double>(2 * radius + 1);
  for (int64_t z = 0; z < nz; ++z)
    for (int64_t y = 0; y < ny; ++y)
      for (int64_t x = 0; x < nx; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          int64_t q[3] = {x, y, z};
          q[axis] = std::clamp<int64_t>(q[axis] + k, 0, dims[axis] - 1);
          acc += f[static_cast<size_t>(q[0] + nx * (q[1] + ny * q[2]))];
        }
        out[static_cast<size_t>(x + nx * (y + ny * z))] = acc * inv;
      }
  f = std::move(out);
}

// Smoothed white noise, standardized to zero mean / unit spread over the box.
std::vector<double> correlated_field(std::mt19937_64& rng, const std::array<int64_t, 3>& dims, int radius) {
  const size_t n = static_cast<size_t>(dims[0] * dims[1] * dims[2]);
  std::vector<double> f(n);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (double& v : f) v = unit(rng);
  for (int pass = 0; pass < 2; ++pass)
    for (int axis = 0; axis < 3; ++axis) blur_axis(f, dims, axis, radius);
  double mean = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : f) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  if (sd <= 0.0) {
    std::fill(f.begin(), f.end(), 0.0);
    return f;
  }
  for (double& v : f) v = (v - mean) / sd;
  return f;
}

constexpr double kBblPerCubicMeter = 6.2898;

Grid random_grid(const GenConfig& cfg, std::mt19937_64& rng) {
  Grid g;
  g.dims = cfg.dims;
  g.cell_size = cfg.cell_size;
  const int64_t n = g.ncells();
  g.active.assign(static_cast<size_t>(n), 1);
  auto& s = g.statics;
  s.depth.resize(static_cast<size_t>(n));
  for (int64_t c = 0; c < n; ++c)
    s.depth[static_cast<size_t>(c)] = 2000.0 + cfg.cell_size[2] * static_cast<double>(g.cell_xyz(c)[2]);
  const std::vector<double> field = correlated_field(rng, cfg.dims, cfg.smooth_radius);
  s.porosity.resize(static_cast<size_t>(n));
  s.pore_volume.resize(static_cast<size_t>(n));
  s.connate_water_volume.resize(static_cast<size_t>(n));
  s.perm_x.resize(static_cast<size_t>(n));
  s.perm_z.resize(static_cast<size_t>(n));
  const double bulk = cfg.cell_size[0] * cfg.cell_size[1] * cfg.cell_size[2];
  for (size_t c = 0; c < static_cast<size_t>(n); ++c) {
    s.perm_x[c] = std::exp(cfg.mean_log_perm + cfg.log_perm_std * field[c]);
    s.perm_z[c] = 0.1 * s.perm_x[c];
    // porosity rides the same field, so high-perm streaks also hold more fluid
    s.porosity[c] = std::clamp(0.25 + 0.06 * field[c], 0.05, 0.40);
    s.pore_volume[c] = bulk * s.porosity[c] * kBblPerCubicMeter;
    s.connate_water_volume[c] = 0.1 * s.pore_volume[c];
  }
  s.perm_y = s.perm_x;
  s.fluid.mu_w = 0.5;
  s.fluid.mu_o = 3.0;
  // water is immobile below S_w = 0.16; the dead zone is wider than the
  // per-substep saturation cap, so transport can never overshoot connate
  s.fluid.relperm_w = {{0.1, 0.16, 0.3, 0.5, 0.7, 0.9}, {0.0, 0.0, 0.05, 0.2, 0.45, 0.8}};
  s.fluid.relperm_o = {{0.1, 0.5, 0.9}, {0.0, 0.35, 0.85}};
  return g;
}

void place_wells(Grid& g, const GenConfig& cfg, std::mt19937_64& rng) {
  const int64_t nx = g.dims[0], nz = g.dims[2];
  const int64_t ncols = nx * g.dims[1];
  std::uniform_int_distribution<int> count(cfg.min_wells, cfg.max_wells);
  const int nwells = count(rng);
  std::vector<int64_t> cols(static_cast<size_t>(ncols));
  std::iota(cols.begin(), cols.end(), int64_t{0});
  // partial Fisher-Yates: the first nwells entries become a uniform draw
  // without replacement
  for (int i = 0; i < nwells; ++i) {
    std::uniform_int_distribution<int64_t> pick(i, ncols - 1);
    std::swap(cols[static_cast<size_t>(i)], cols[static_cast<size_t>(pick(rng))]);
  }
  std::uniform_real_distribution<double> rate(cfg.min_inject_rate, cfg.max_inject_rate);
  std::uniform_real_distribution<double> bhp(cfg.min_producer_bhp, cfg.max_producer_bhp);
  int ninj = 0, nprod = 0;
  for (int i = 0; i < nwells; ++i) {
    const int64_t x = cols[static_cast<size_t>(i)] % nx;
    const int64_t y = cols[static_cast<size_t>(i)] / nx;
    Well w;
    for (int64_t z = 0; z < nz; ++z) w.perforations.push_back(static_cast<int32_t>(g.cell_id(x, y, z)));
    if (i % 2 == 0) {
      w.kind = Well::kInjector;
      w.name = "I" + std::to_string(++ninj);
      w.water_rate = rate(rng);
    } else {
      w.kind = Well::kProducer;
      w.name = "P" + std::to_string(++nprod);
      w.bhp = bhp(rng);
      w.wi_multiplier = 1.0;
    }
    g.wells.push_back(std::move(w));
  }
}

}  // namespace

std::vector<Trajectory> generate_dataset(const GenConfig& config, uint64_t seed,
                                         std::vector<std::vector<StepReport>>* reports) {
  if (config.trajectories < 0) throw std::invalid_argument("generate_dataset: trajectories must be >= 0");
  if (config.steps < 0) throw std::invalid_argument("generate_dataset: steps must be >= 0");
  if (config.min_wells < 1 || config.max_wells < config.min_wells)
    throw std::invalid_argument("generate_dataset: bad well count range");
  const int64_t ncols = config.dims[0] * config.dims[1];
  if (config.max_wells > ncols)
    throw std::invalid_argument("generate_dataset: up to " + std::to_string(config.max_wells) +
                                " wells but only " + std::to_string(ncols) + " well columns");
  std::mt19937_64 master(seed);
  std::vector<uint64_t> sub(static_cast<size_t>(config.trajectories));
  for (uint64_t& s : sub) s = master();
  if (reports) reports->assign(static_cast<size_t>(config.trajectories), {});
  std::vector<Trajectory> out;
  out.reserve(static_cast<size_t>(config.trajectories));
  for (int i = 0; i < config.trajectories; ++i) {
    std::mt19937_64 rng(sub[static_cast<size_t>(i)]);
    Grid g = random_grid(config, rng);
    place_wells(g, config, rng);
    compute_face_transmissibilities(g);
    g.validate();
    std::uniform_real_distribution<double> jitter(-250.0, 250.0);
    State rest;
    const size_t n = static_cast<size_t>(g.ncells());
    rest.pressure.assign(n, config.initial_pressure + jitter(rng));
    rest.water_volume = g.statics.connate_water_volume;
    rest.oil_volume.resize(n);
    for (size_t c = 0; c < n; ++c) {
      rest.oil_volume[c] = g.statics.pore_volume[c] - rest.water_volume[c];
      enforce_closure(g.statics.pore_volume[c], rest.water_volume[c], rest.oil_volume[c]);
    }
    // burn-in: one step at base rates absorbs the start-up pressure jump
    State start = sim_step(rest, g, config.sim);
    start.time_index = 0;

    std::vector<double> base_rate;
    for (const Well& w : g.wells)
      if (w.kind == Well::kInjector) base_rate.push_back(w.water_rate);
    std::uniform_real_distribution<double> factor(config.min_rate_factor, config.max_rate_factor);

    Trajectory traj;
    traj.grid = g;
    traj.states.push_back(std::move(start));
    if (reports) (*reports)[static_cast<size_t>(i)].resize(static_cast<size_t>(config.steps));
    Grid work = g;
    for (int t = 0; t < config.steps; ++t) {
      size_t inj = 0;
      for (Well& w : work.wells)
        if (w.kind == Well::kInjector) w.water_rate = base_rate[inj++] * factor(rng);
      StepControls controls;
      StepReport rep;
      State next = sim_step(traj.states.back(), work, config.sim, &rep, &controls);
      traj.controls.push_back(std::move(controls));
      traj.states.push_back(std::move(next));
      if (reports) (*reports)[static_cast<size_t>(i)][static_cast<size_t>(t)] = rep;
    }
    out.push_back(std::move(traj));
  }
  return out;
}

}  // namespace hgns
