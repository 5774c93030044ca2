#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <random>

#include "hgns/features.hpp"
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
  g.statics.fluid.mu_w = 0.5;
  g.statics.fluid.mu_o = 20.0;
  g.statics.fluid.relperm_w = {{0.1, 0.3, 0.5, 0.7, 0.9}, {0.0, 0.05, 0.2, 0.45, 0.8}};
  g.statics.fluid.relperm_o = {{0.1, 0.5, 0.9}, {0.0, 0.35, 0.85}};
  compute_face_transmissibilities(g);
  return g;
}

State random_state(const Grid& g, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  State s;
  size_t n = static_cast<size_t>(g.ncells());
  s.pressure.resize(n);
  s.water_volume.resize(n);
  s.oil_volume.resize(n);
  for (size_t c = 0; c < n; ++c) {
    s.pressure[c] = 3000.0 + 3000.0 * u(rng);
    s.water_volume[c] = 1.0 + 8.0 * u(rng);
    enforce_closure(g.statics.pore_volume[c], s.water_volume[c], s.oil_volume[c]);
  }
  return s;
}

StepControls zero_controls(const Grid& g) {
  StepControls c;
  c.water_injection_rate.assign(static_cast<size_t>(g.ncells()), 0.0);
  return c;
}

// brute-force difference stencil, written against the definition
double grad_oracle(const std::vector<double>& f, const Grid& g, int64_t c, int axis) {
  if (!g.is_active(c)) return 0.0;
  auto xyz = g.cell_xyz(c);
  int64_t s = axis == 0 ? 1 : axis == 1 ? g.dims[0] : g.dims[0] * g.dims[1];
  double d = g.cell_size[static_cast<size_t>(axis)];
  bool lo = xyz[static_cast<size_t>(axis)] > 0 && g.is_active(c - s);
  bool hi = xyz[static_cast<size_t>(axis)] < g.dims[static_cast<size_t>(axis)] - 1 && g.is_active(c + s);
  size_t i = static_cast<size_t>(c);
  if (lo && hi) return (f[i + static_cast<size_t>(s)] - f[i - static_cast<size_t>(s)]) / (2.0 * d);
  if (hi) return (f[i + static_cast<size_t>(s)] - f[i]) / d;
  if (lo) return (f[i] - f[i - static_cast<size_t>(s)]) / d;
  return 0.0;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("default schema layout") {
  FeatureSchema s = FeatureSchema::node_default();
  CHECK(s.total_width() == 32);
  CHECK(s.offset_of("pressure") == 0);
  CHECK(s.offset_of("depth") == 3);
  CHECK(s.offset_of("node_type") == 13);
  CHECK(s.offset_of("boundary") == 16);
  CHECK(s.offset_of("relperm_w") == 19);
  CHECK(s.offset_of("grad_pressure") == 21);
  CHECK(s.offset_of("injection_rate") == 30);
  CHECK(s.offset_of("injector_pressure") == 31);
  CHECK(s.offset_of("nope") == -1);

  uint64_t h = s.hash();
  CHECK(h == FeatureSchema::node_default().hash());
  FeatureSchema t = s;
  t.fields[0].name = "pressure2";
  CHECK(t.hash() != h);
  FeatureSchema u = s;
  u.fields[5].width = 2;
  CHECK(u.hash() != h);
}

TEST_CASE("relperm interpolation through the shared table evaluator") {
  ad::PwlTable t{{0.2, 0.8}, {0.0, 0.9}};
  CHECK(ad::pwl_eval(t, 0.2).first == 0.0);
  CHECK(ad::pwl_eval(t, 0.8).first == 0.9);
  CHECK(ad::pwl_eval(t, 0.5).first == doctest::Approx(0.45));
  CHECK(ad::pwl_eval(t, 0.0).first == 0.0);   // clamped below
  CHECK(ad::pwl_eval(t, 1.0).first == 0.9);   // clamped above
  ad::PwlTable lin{{0.0, 1.0}, {0.0, 1.0}};
  CHECK(ad::pwl_eval(lin, 0.5).first == 0.5);

  // monotone table stays monotone over a sweep
  ad::PwlTable mono{{0.1, 0.3, 0.5, 0.7, 0.9}, {0.0, 0.05, 0.2, 0.45, 0.8}};
  double prev = -1.0;
  for (int i = 0; i <= 200; ++i) {
    double v = ad::pwl_eval(mono, i / 200.0).first;
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("spatial gradient of constant and affine fields") {
  Grid g = make_grid(4, 3, 2);
  std::vector<double> constant(static_cast<size_t>(g.ncells()), 7.5);
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<double> gr = spatial_gradient(constant, g, axis);
    for (double v : gr) CHECK(v == 0.0);
  }
  std::vector<double> affine(static_cast<size_t>(g.ncells()));
  for (int64_t c = 0; c < g.ncells(); ++c) affine[static_cast<size_t>(c)] = 4.0 * static_cast<double>(g.cell_xyz(c)[0]);
  std::vector<double> gx = spatial_gradient(affine, g, 0);
  for (double v : gx) CHECK(v == doctest::Approx(4.0));  // dx = 1, also exact one-sided at edges
  std::vector<double> gy = spatial_gradient(affine, g, 1);
  for (double v : gy) CHECK(v == 0.0);
}

TEST_CASE("spatial gradient matches a brute-force oracle") {
  Grid g = make_grid(4, 4, 2);
  g.active[5] = 0;  // knock one cell out; neighbors fall back to one-sided
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  std::vector<double> f(static_cast<size_t>(g.ncells()));
  for (double& v : f) v = u(rng);
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<double> gr = spatial_gradient(f, g, axis);
    for (int64_t c = 0; c < g.ncells(); ++c)
      CHECK(gr[static_cast<size_t>(c)] == grad_oracle(f, g, c, axis));  // unit cells: both forms exact
  }
  std::vector<double> g5 = spatial_gradient(f, g, 0);
  CHECK(g5[5] == 0.0);  // inactive cell itself
}

TEST_CASE("all-zero inputs produce only the structural columns") {
  Grid g;
  g.dims = {3, 3, 3};
  g.cell_size = {1.0, 1.0, 1.0};
  size_t n = 27;
  g.active.assign(n, 1);
  g.statics.depth.assign(n, 0.0);
  g.statics.porosity.assign(n, 0.0);
  g.statics.pore_volume.assign(n, 0.0);
  g.statics.connate_water_volume.assign(n, 0.0);
  g.statics.perm_x.assign(n, 0.0);
  g.statics.perm_y.assign(n, 0.0);
  g.statics.perm_z.assign(n, 0.0);
  g.statics.fluid.relperm_w = {{0.0, 1.0}, {0.0, 1.0}};
  g.statics.fluid.relperm_o = {{0.0, 1.0}, {0.0, 1.0}};
  compute_face_transmissibilities(g);
  State s;
  s.pressure.assign(n, 0.0);
  s.water_volume.assign(n, 0.0);
  s.oil_volume.assign(n, 0.0);
  FeatureSchema schema = FeatureSchema::node_default();
  std::vector<double> x = assemble_node_features(s, g, zero_controls(g), schema, nullptr);
  std::vector<double> bnd = boundary_encoding(g);
  int d = schema.total_width();
  int nt = schema.offset_of("node_type"), bo = schema.offset_of("boundary");
  for (size_t c = 0; c < n; ++c)
    for (int j = 0; j < d; ++j) {
      double v = x[c * static_cast<size_t>(d) + static_cast<size_t>(j)];
      if (j == nt) CHECK(v == 1.0);  // every cell is a normal node
      else if (j >= bo && j < bo + 3) CHECK(v == bnd[c * 3 + static_cast<size_t>(j - bo)]);
      else CHECK(v == 0.0);
    }
}

TEST_CASE("well cells carry their type and controls") {
  Grid g = make_grid(4, 4, 1);
  g.wells.push_back({Well::kInjector, "i", {0, 1}, 6.0, 0.0, 1.0});
  g.wells.push_back({Well::kProducer, "p", {15}, 0.0, 3000.0, 1.0});
  State s = random_state(g, 5);
  StepControls ctl = zero_controls(g);
  ctl.water_injection_rate[0] = 3.0;
  ctl.water_injection_rate[1] = 3.0;
  FeatureSchema schema = FeatureSchema::node_default();
  std::vector<double> x = assemble_node_features(s, g, ctl, schema, nullptr);
  int d = schema.total_width();
  int nt = schema.offset_of("node_type");
  int qi = schema.offset_of("injection_rate");
  int ip = schema.offset_of("injector_pressure");
  auto at = [&](int64_t c, int j) { return x[static_cast<size_t>(c * d + j)]; };
  for (int64_t c : {0, 1}) {
    CHECK(at(c, nt) == 0.0);
    CHECK(at(c, nt + 1) == 1.0);
    CHECK(at(c, nt + 2) == 0.0);
    CHECK(at(c, qi) == 3.0);
    CHECK(at(c, ip) == s.pressure[static_cast<size_t>(c)]);
  }
  CHECK(at(15, nt + 2) == 1.0);
  CHECK(at(15, qi) == 0.0);
  CHECK(at(15, ip) == 0.0);
  CHECK(at(7, nt) == 1.0);
  CHECK(at(7, ip) == 0.0);
}

TEST_CASE("full assembly matches per-column recomputation") {
  Grid g = make_grid(4, 4, 2, 250.0);
  for (size_t c = 0; c < g.statics.perm_x.size(); ++c) g.statics.perm_z[c] = 25.0;
  compute_face_transmissibilities(g);
  g.wells.push_back({Well::kInjector, "i", {0}, 2.0, 0.0, 1.0});
  g.wells.push_back({Well::kProducer, "p", {31}, 0.0, 3000.0, 1.0});
  State s = random_state(g, 11);
  StepControls ctl = zero_controls(g);
  ctl.water_injection_rate[0] = 2.0;
  FeatureSchema schema = FeatureSchema::node_default();
  std::vector<double> x = assemble_node_features(s, g, ctl, schema, nullptr);
  int d = schema.total_width();
  auto at = [&](int64_t c, int j) { return x[static_cast<size_t>(c * d + j)]; };

  std::vector<double> bnd = boundary_encoding(g);
  for (int64_t c = 0; c < g.ncells(); ++c) {
    size_t i = static_cast<size_t>(c);
    CHECK(at(c, 0) == s.pressure[i]);
    CHECK(at(c, 1) == s.water_volume[i]);
    CHECK(at(c, 2) == s.oil_volume[i]);
    CHECK(at(c, 3) == g.statics.depth[i]);
    CHECK(at(c, 4) == g.statics.porosity[i]);
    CHECK(at(c, 5) == g.statics.pore_volume[i]);
    CHECK(at(c, 6) == g.statics.connate_water_volume[i]);
    CHECK(at(c, 7) == g.statics.perm_x[i]);
    CHECK(at(c, 9) == g.statics.perm_z[i]);
    // cell T = mean of the two x faces
    auto xyz = g.cell_xyz(c);
    double lo = xyz[0] > 0 ? g.statics.trans_x[i - 1] : 0.0;
    CHECK(at(c, 10) == doctest::Approx(0.5 * (lo + g.statics.trans_x[i])).epsilon(1e-15));
    double lo_z = xyz[2] > 0 ? g.statics.trans_z[i - 16] : 0.0;
    CHECK(at(c, 12) == doctest::Approx(0.5 * (lo_z + g.statics.trans_z[i])).epsilon(1e-15));
    for (int k = 0; k < 3; ++k) CHECK(at(c, 16 + k) == bnd[i * 3 + static_cast<size_t>(k)]);
    // relperm columns against direct interpolation
    double sw = s.water_volume[i] / 10.0;
    double so = s.oil_volume[i] / 10.0;
    CHECK(at(c, 19) == doctest::Approx(g.statics.fluid.relperm_w.eval(sw)).epsilon(1e-14));
    CHECK(at(c, 20) == doctest::Approx(g.statics.fluid.relperm_o.eval(so)).epsilon(1e-14));
    for (int axis = 0; axis < 3; ++axis) {
      CHECK(at(c, 21 + axis) == grad_oracle(s.pressure, g, c, axis));
      CHECK(at(c, 24 + axis) == grad_oracle(s.water_volume, g, c, axis));
      CHECK(at(c, 27 + axis) == grad_oracle(s.oil_volume, g, c, axis));
    }
  }

  // identical inputs give byte-identical output
  std::vector<double> y = assemble_node_features(s, g, ctl, schema, nullptr);
  CHECK(std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0);

  CHECK_THROWS_AS(assemble_node_features(s, g, StepControls{}, schema, nullptr), std::invalid_argument);
  FeatureSchema bad = schema;
  bad.fields.push_back({"mystery", 1, FeatureGroup::kStatic, true});
  CHECK_THROWS_AS(assemble_node_features(s, g, ctl, bad, nullptr), std::invalid_argument);
}

TEST_CASE("edge features encode direction one-hots") {
  Grid flat = make_grid(2, 2, 1);
  GraphTopology topo = build_cell_graph(flat);
  std::vector<double> e = assemble_edge_features(topo, nullptr);
  REQUIRE(static_cast<int64_t>(e.size()) == topo.nedges() * 4);
  for (int64_t k = 0; k < topo.nedges(); ++k) {
    CHECK(e[static_cast<size_t>(k * 4)] == topo.trans[static_cast<size_t>(k)]);
    CHECK(e[static_cast<size_t>(k * 4 + 1)] == 0.0);
    CHECK(e[static_cast<size_t>(k * 4 + 2)] == 0.0);
    CHECK(e[static_cast<size_t>(k * 4 + 3)] == 1.0);  // flat layer: all horizontal
  }
  // reciprocal edges carry identical features
  for (int64_t a = 0; a < topo.nedges(); ++a)
    for (int64_t b = 0; b < topo.nedges(); ++b)
      if (topo.src[static_cast<size_t>(a)] == topo.dst[static_cast<size_t>(b)] &&
          topo.dst[static_cast<size_t>(a)] == topo.src[static_cast<size_t>(b)])
        for (int j = 0; j < 4; ++j)
          CHECK(e[static_cast<size_t>(a * 4 + j)] == e[static_cast<size_t>(b * 4 + j)]);

  Grid column = make_grid(1, 1, 2);
  GraphTopology vt = build_cell_graph(column);
  std::vector<double> ev = assemble_edge_features(vt, nullptr);
  REQUIRE(vt.nedges() == 2);
  for (int64_t k = 0; k < 2; ++k) {
    bool to_deeper = column.statics.depth[static_cast<size_t>(vt.dst[static_cast<size_t>(k)])] >
                     column.statics.depth[static_cast<size_t>(vt.src[static_cast<size_t>(k)])];
    CHECK(ev[static_cast<size_t>(k * 4 + 1)] == (to_deeper ? 0.0 : 1.0));  // up
    CHECK(ev[static_cast<size_t>(k * 4 + 2)] == (to_deeper ? 1.0 : 0.0));  // down
  }

  Normalizer nz;
  nz.edge_t_mean = 50.0;
  nz.edge_t_std = 25.0;
  std::vector<double> en = assemble_edge_features(topo, &nz);
  for (int64_t k = 0; k < topo.nedges(); ++k)
    CHECK(en[static_cast<size_t>(k * 4)] ==
          doctest::Approx((topo.trans[static_cast<size_t>(k)] - 50.0) / 25.0).epsilon(1e-15));
}

TEST_CASE("differentiable assembly equals the plain one bit for bit") {
  Grid g = make_grid(4, 4, 2, 120.0);
  g.wells.push_back({Well::kInjector, "i", {5}, 4.0, 0.0, 1.0});
  g.wells.push_back({Well::kProducer, "p", {26}, 0.0, 2500.0, 1.0});
  State s = random_state(g, 23);
  StepControls ctl = zero_controls(g);
  ctl.water_injection_rate[5] = 4.0;
  FeatureSchema schema = FeatureSchema::node_default();

  std::vector<Trajectory> ds(1);
  ds[0].grid = g;
  ds[0].states = {s, random_state(g, 24)};
  ds[0].controls = {ctl};
  Normalizer nz = fit_normalizer(ds, schema);

  const Normalizer* variants[2] = {nullptr, &nz};
  for (const Normalizer* np : variants) {
    std::vector<double> plain = assemble_node_features(s, g, ctl, schema, np);
    ad::Tape tape;
    int64_t n = g.ncells();
    ad::Tensor p({n, 1}), vw({n, 1}), vo({n, 1});
    std::copy(s.pressure.begin(), s.pressure.end(), p.ptr());
    std::copy(s.water_volume.begin(), s.water_volume.end(), vw.ptr());
    std::copy(s.oil_volume.begin(), s.oil_volume.end(), vo.ptr());
    ad::NodeId feats = build_node_features(tape, tape.input(std::move(p)), tape.input(std::move(vw)),
                                           tape.input(std::move(vo)), g, ctl, schema, np);
    const ad::Tensor& v = tape.value(feats);
    REQUIRE(v.dim(0) == n);
    REQUIRE(v.dim(1) == schema.total_width());
    CHECK(std::memcmp(v.data.data(), plain.data(), plain.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("gradients flow through computed features") {
  Grid g = make_grid(3, 3, 1);
  g.wells.push_back({Well::kInjector, "i", {0}, 1.0, 0.0, 1.0});
  State s = random_state(g, 31);
  StepControls ctl = zero_controls(g);
  ctl.water_injection_rate[0] = 1.0;
  FeatureSchema schema = FeatureSchema::node_default();
  int64_t n = g.ncells();
  int d = schema.total_width();

  // normalize so the loss is O(1); raw pressures would drown the finite
  // differences in cancellation noise
  std::vector<Trajectory> ds(1);
  ds[0].grid = g;
  ds[0].states = {s, random_state(g, 32)};
  ds[0].controls = {ctl};
  Normalizer nz = fit_normalizer(ds, schema);

  ad::Tensor p({n, 1}), vw({n, 1}), vo({n, 1});
  std::copy(s.pressure.begin(), s.pressure.end(), p.ptr());
  std::copy(s.water_volume.begin(), s.water_volume.end(), vw.ptr());
  std::copy(s.oil_volume.begin(), s.oil_volume.end(), vo.ptr());

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ad::Tensor target({n, d}), weight({n, d}), mask({n, d});
  for (auto& v : target.data) v = u(rng);
  for (auto& v : weight.data) v = 1.0;
  for (auto& v : mask.data) v = 1.0;

  auto build = [&](ad::Tape& t, const std::vector<ad::NodeId>& params) {
    ad::NodeId feats = build_node_features(t, params[0], params[1], params[2], g, ctl, schema, &nz);
    return t.mse(feats, target, weight, mask);
  };
  ad::GradCheckReport rep = ad::grad_check(build, {p, vw, vo}, 1e-6, 0, 7);
  CHECK(rep.max_rel_err < 1e-5);
  CHECK(rep.coords_checked == 3 * n);
}

TEST_CASE("normalizer statistics and round trip") {
  // depth takes values 0 and 2 -> mean 1, std 1, normalized {-1, +1}
  Grid g = make_grid(2, 1, 1);
  g.statics.depth = {0.0, 2.0};
  State a = random_state(g, 41);
  a.pressure = {1000.0, 1000.0};
  State b = a;
  b.pressure = {1002.0, 1002.0};
  b.time_index = 1;
  std::vector<Trajectory> ds(1);
  ds[0].grid = g;
  ds[0].states = {a, b};
  ds[0].controls = {zero_controls(g)};

  FeatureSchema schema = FeatureSchema::node_default();
  Normalizer nz = fit_normalizer(ds, schema);
  int dd = schema.offset_of("depth");
  CHECK(nz.mean[static_cast<size_t>(dd)] == doctest::Approx(1.0));
  CHECK(nz.stdev[static_cast<size_t>(dd)] == doctest::Approx(1.0));
  // constant column: std floored, normalized value 0
  int dv = schema.offset_of("pore_volume");
  CHECK(nz.stdev[static_cast<size_t>(dv)] == 1e-6);
  // one-hot and boundary columns excluded
  int nt = schema.offset_of("node_type");
  CHECK(nz.mean[static_cast<size_t>(nt)] == 0.0);
  CHECK(nz.stdev[static_cast<size_t>(nt)] == 1.0);
  // deltas scale about zero: dP = 2 everywhere -> rms 2; volumes unchanged -> floor
  CHECK(nz.delta_std[0] == doctest::Approx(2.0));
  CHECK(nz.delta_std[1] == 1e-6);

  std::vector<double> x = assemble_node_features(a, g, ds[0].controls[0], schema, &nz);
  CHECK(x[static_cast<size_t>(dd)] == doctest::Approx(-1.0));
  CHECK(x[static_cast<size_t>(g.ncells() - 1) * 32 + static_cast<size_t>(dd)] == doctest::Approx(1.0));
  CHECK(x[static_cast<size_t>(dv)] == 0.0);

  // apply then invert is identity
  std::vector<double> raw = assemble_node_features(a, g, ds[0].controls[0], schema, nullptr);
  std::vector<double> rt = raw;
  normalize_features(nz, rt);
  denormalize_features(nz, rt);
  for (size_t i = 0; i < raw.size(); ++i)
    CHECK(rt[i] == doctest::Approx(raw[i]).epsilon(1e-9));

  // JSON round trip is exact
  Normalizer back = normalizer_from_json(normalizer_to_json(nz));
  CHECK(back.mean == nz.mean);
  CHECK(back.stdev == nz.stdev);
  CHECK(back.edge_t_mean == nz.edge_t_mean);
  CHECK(back.edge_t_std == nz.edge_t_std);
  CHECK(back.delta_std == nz.delta_std);

  CHECK_THROWS_AS(fit_normalizer({}, schema), std::invalid_argument);
  CHECK_THROWS_AS(normalizer_from_json("{oops"), std::runtime_error);
  CHECK_THROWS_AS(normalizer_from_json("{\"format\":\"other\"}"), std::runtime_error);
}

TEST_CASE("normalized training features have zero mean and unit variance") {
  Grid g = make_grid(8, 8, 1);
  g.wells.push_back({Well::kInjector, "i", {0}, 5.0, 0.0, 1.0});
  g.wells.push_back({Well::kProducer, "p", {63}, 0.0, 3000.0, 5.0});
  State s0;
  size_t n = 64;
  s0.pressure.assign(n, 6500.0);
  s0.water_volume = g.statics.connate_water_volume;
  s0.oil_volume.assign(n, 0.0);
  for (size_t c = 0; c < n; ++c) enforce_closure(g.statics.pore_volume[c], s0.water_volume[c], s0.oil_volume[c]);
  SimConfig cfg;
  Trajectory traj = sim_rollout(s0, g, 6, cfg);
  traj.grid = g;

  FeatureSchema schema = FeatureSchema::node_default();
  Normalizer nz = fit_normalizer({traj}, schema);

  int d = schema.total_width();
  std::vector<double> sum(static_cast<size_t>(d), 0.0), sumsq(static_cast<size_t>(d), 0.0);
  int64_t rows = 0;
  for (size_t t = 0; t < traj.controls.size(); ++t) {
    std::vector<double> x = assemble_node_features(traj.states[t], g, traj.controls[t], schema, &nz);
    for (size_t c = 0; c < n; ++c)
      for (int j = 0; j < d; ++j) {
        double v = x[c * static_cast<size_t>(d) + static_cast<size_t>(j)];
        sum[static_cast<size_t>(j)] += v;
        sumsq[static_cast<size_t>(j)] += v * v;
      }
    rows += static_cast<int64_t>(n);
  }
  int off = 0;
  for (const FeatureField& f : schema.fields) {
    for (int k = 0; k < f.width; ++k) {
      size_t j = static_cast<size_t>(off + k);
      if (f.normalize && nz.stdev[j] > 1e-6) {  // skip floored (constant) columns
        double mean = sum[j] / static_cast<double>(rows);
        double var = sumsq[j] / static_cast<double>(rows) - mean * mean;
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(std::sqrt(std::max(0.0, var)) - 1.0) < 1e-6);
      }
    }
    off += f.width;
  }
}

}  // TEST_SUITE
