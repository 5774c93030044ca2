#include "hgns/grid.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace hgns {

double RelPermTable::eval(double sat) const {
  if (sat <= s.front()) return kr.front();
  if (sat >= s.back()) return kr.back();
  size_t hi = static_cast<size_t>(std::upper_bound(s.begin(), s.end(), sat) - s.begin());
  size_t lo = hi - 1;
  double t = (sat - s[lo]) / (s[hi] - s[lo]);
  return kr[lo] + t * (kr[hi] - kr[lo]);
}

void RelPermTable::validate(const char* what) const {
  if (s.size() < 2 || s.size() != kr.size()) throw std::invalid_argument(std::string(what) + ": needs >= 2 knots");
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] < 0.0 || s[i] > 1.0 || kr[i] < 0.0 || kr[i] > 1.0)
      throw std::invalid_argument(std::string(what) + ": knots must lie in [0,1]");
    if (i > 0 && !(s[i] > s[i - 1])) throw std::invalid_argument(std::string(what) + ": saturations must be strictly increasing");
    if (i > 0 && kr[i] < kr[i - 1]) throw std::invalid_argument(std::string(what) + ": k_r must be non-decreasing");
  }
}

std::vector<int32_t> Grid::active_cells() const {
  std::vector<int32_t> out;
  for (int64_t c = 0; c < ncells(); ++c)
    if (active[static_cast<size_t>(c)]) out.push_back(static_cast<int32_t>(c));
  return out;
}

bool Grid::face_sealed(int64_t lower_cell, int axis) const {
  for (const FaultPlane& f : faults) {
    if (f.axis != axis) continue;
    for (int32_t c : f.faces)
      if (c == lower_cell) return true;
  }
  return false;
}

void Grid::validate() const {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) throw std::invalid_argument("grid: dims must be >= 1");
  if (cell_size[0] <= 0 || cell_size[1] <= 0 || cell_size[2] <= 0) throw std::invalid_argument("grid: cell_size must be > 0");
  size_t n = static_cast<size_t>(ncells());
  if (active.size() != n) throw std::invalid_argument("grid: active mask size mismatch");
  auto check_field = [n](const std::vector<double>& f, const char* name) {
    if (f.size() != n) throw std::invalid_argument(std::string("grid: static field ") + name + " size mismatch");
  };
  check_field(statics.depth, "depth");
  check_field(statics.porosity, "porosity");
  check_field(statics.pore_volume, "pore_volume");
  check_field(statics.connate_water_volume, "connate_water_volume");
  check_field(statics.perm_x, "perm_x");
  check_field(statics.perm_y, "perm_y");
  check_field(statics.perm_z, "perm_z");
  check_field(statics.trans_x, "trans_x");
  check_field(statics.trans_y, "trans_y");
  check_field(statics.trans_z, "trans_z");
  for (size_t c = 0; c < n; ++c) {
    if (!active[c]) continue;
    if (!(statics.porosity[c] > 0.0 && statics.porosity[c] <= 1.0))
      throw std::invalid_argument("grid: porosity out of (0,1] on active cell " + std::to_string(c));
    if (!(statics.connate_water_volume[c] >= 0.0 && statics.connate_water_volume[c] < statics.pore_volume[c]))
      throw std::invalid_argument("grid: connate water must satisfy 0 <= V_wc < V on active cell " + std::to_string(c));
    if (statics.perm_x[c] < 0 || statics.perm_y[c] < 0 || statics.perm_z[c] < 0)
      throw std::invalid_argument("grid: negative permeability on cell " + std::to_string(c));
  }
  if (!(statics.fluid.mu_w > 0) || !(statics.fluid.mu_o > 0)) throw std::invalid_argument("grid: viscosities must be > 0");
  if (!(statics.fluid.rho_w > 0) || !(statics.fluid.rho_o > 0)) throw std::invalid_argument("grid: densities must be > 0");
  statics.fluid.relperm_w.validate("grid: relperm_w");
  statics.fluid.relperm_o.validate("grid: relperm_o");
  for (const Well& w : wells) {
    if (w.perforations.empty()) throw std::invalid_argument("grid: well " + w.name + " has no perforations");
    for (int32_t p : w.perforations) {
      if (p < 0 || p >= ncells()) throw std::invalid_argument("grid: well " + w.name + " perforation out of range");
      if (!active[static_cast<size_t>(p)])
        throw std::invalid_argument("grid: well " + w.name + " perforates inactive cell " + std::to_string(p));
    }
    if (w.kind == Well::kInjector && w.water_rate < 0) throw std::invalid_argument("grid: injector rate must be >= 0");
    if (w.kind == Well::kProducer && !(w.bhp > 0)) throw std::invalid_argument("grid: producer BHP must be > 0");
  }
  for (const FaultPlane& f : faults) {
    if (f.axis < 0 || f.axis > 2) throw std::invalid_argument("grid: fault axis must be 0, 1 or 2");
    for (int32_t c : f.faces) {
      if (c < 0 || c >= ncells()) throw std::invalid_argument("grid: fault face outside grid bounds");
      auto xyz = cell_xyz(c);
      if (xyz[static_cast<size_t>(f.axis)] + 1 >= dims[static_cast<size_t>(f.axis)])
        throw std::invalid_argument("grid: fault face outside grid bounds (no +axis neighbor at cell " + std::to_string(c) + ")");
    }
  }
}

double face_transmissibility(const Grid& grid, int64_t cell, int axis) {
  auto xyz = grid.cell_xyz(cell);
  if (xyz[static_cast<size_t>(axis)] + 1 >= grid.dims[static_cast<size_t>(axis)]) return 0.0;
  int64_t stride = axis == 0 ? 1 : (axis == 1 ? grid.dims[0] : grid.dims[0] * grid.dims[1]);
  int64_t nb = cell + stride;
  if (!grid.is_active(cell) || !grid.is_active(nb)) return 0.0;
  const std::vector<double>& k = axis == 0 ? grid.statics.perm_x : (axis == 1 ? grid.statics.perm_y : grid.statics.perm_z);
  double ki = k[static_cast<size_t>(cell)], kj = k[static_cast<size_t>(nb)];
  if (ki <= 0.0 || kj <= 0.0) return 0.0;
  double d = grid.cell_size[static_cast<size_t>(axis)];
  double a = grid.cell_size[0] * grid.cell_size[1] * grid.cell_size[2] / d;  // face area
  return (a / d) * (2.0 * ki * kj / (ki + kj));
}

void compute_face_transmissibilities(Grid& grid) {
  size_t n = static_cast<size_t>(grid.ncells());
  grid.statics.trans_x.assign(n, 0.0);
  grid.statics.trans_y.assign(n, 0.0);
  grid.statics.trans_z.assign(n, 0.0);
  for (int64_t c = 0; c < grid.ncells(); ++c)
    for (int axis = 0; axis < 3; ++axis) {
      double t = grid.face_sealed(c, axis) ? 0.0 : face_transmissibility(grid, c, axis);
      (axis == 0 ? grid.statics.trans_x : axis == 1 ? grid.statics.trans_y : grid.statics.trans_z)[static_cast<size_t>(c)] = t;
    }
}

namespace {

uint8_t edge_direction(const Grid& grid, int64_t src, int64_t dst) {
  double ds = grid.statics.depth[static_cast<size_t>(src)], dd = grid.statics.depth[static_cast<size_t>(dst)];
  if (dd < ds) return kEdgeUp;
  if (dd > ds) return kEdgeDown;
  return kEdgeHorizontal;
}

}  // namespace

GraphTopology build_cell_graph(const Grid& grid) {
  GraphTopology topo;
  const std::vector<double>* trans[3] = {&grid.statics.trans_x, &grid.statics.trans_y, &grid.statics.trans_z};
  for (int64_t c = 0; c < grid.ncells(); ++c) {
    if (!grid.is_active(c)) continue;
    auto xyz = grid.cell_xyz(c);
    for (int axis = 0; axis < 3; ++axis) {
      if (xyz[static_cast<size_t>(axis)] + 1 >= grid.dims[static_cast<size_t>(axis)]) continue;
      int64_t stride = axis == 0 ? 1 : (axis == 1 ? grid.dims[0] : grid.dims[0] * grid.dims[1]);
      int64_t nb = c + stride;
      if (!grid.is_active(nb)) continue;
      if (grid.face_sealed(c, axis)) continue;
      double t = (*trans[axis])[static_cast<size_t>(c)];
      topo.src.push_back(static_cast<int32_t>(c));
      topo.dst.push_back(static_cast<int32_t>(nb));
      topo.dir.push_back(edge_direction(grid, c, nb));
      topo.trans.push_back(t);
      topo.src.push_back(static_cast<int32_t>(nb));
      topo.dst.push_back(static_cast<int32_t>(c));
      topo.dir.push_back(edge_direction(grid, nb, c));
      topo.trans.push_back(t);
    }
  }
  return topo;
}

GraphTopology cut_fault_edges(const GraphTopology& topo, const Grid& grid) {
  for (const FaultPlane& f : grid.faults)
    if (f.axis < 0 || f.axis > 2) throw std::invalid_argument("cut_fault_edges: fault axis must be 0, 1 or 2");
  std::set<std::pair<int64_t, int64_t>> sealed;
  for (const FaultPlane& f : grid.faults) {
    int64_t stride = f.axis == 0 ? 1 : (f.axis == 1 ? grid.dims[0] : grid.dims[0] * grid.dims[1]);
    for (int32_t c : f.faces) {
      auto xyz = grid.cell_xyz(c);
      if (c < 0 || c >= grid.ncells() || xyz[static_cast<size_t>(f.axis)] + 1 >= grid.dims[static_cast<size_t>(f.axis)])
        throw std::invalid_argument("cut_fault_edges: fault face outside grid bounds");
      sealed.emplace(c, c + stride);
      sealed.emplace(c + stride, c);
    }
  }
  GraphTopology out;
  for (size_t e = 0; e < topo.src.size(); ++e) {
    if (sealed.count({topo.src[e], topo.dst[e]})) continue;
    out.src.push_back(topo.src[e]);
    out.dst.push_back(topo.dst[e]);
    out.dir.push_back(topo.dir[e]);
    out.trans.push_back(topo.trans[e]);
  }
  return out;
}

std::vector<double> boundary_encoding(const Grid& grid) {
  std::vector<double> enc(static_cast<size_t>(grid.ncells() * 3), 0.0);
  for (int64_t c = 0; c < grid.ncells(); ++c) {
    auto xyz = grid.cell_xyz(c);
    for (int axis = 0; axis < 3; ++axis) {
      int64_t d = std::min(xyz[static_cast<size_t>(axis)], grid.dims[static_cast<size_t>(axis)] - 1 - xyz[static_cast<size_t>(axis)]);
      enc[static_cast<size_t>(c * 3 + axis)] = std::clamp((6.0 - static_cast<double>(d)) / 5.0, 0.0, 1.0);
    }
  }
  return enc;
}

}  // namespace hgns
