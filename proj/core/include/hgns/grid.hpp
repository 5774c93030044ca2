#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace hgns {

// Water/oil relative permeability vs water (resp. oil) saturation.
// Knots are strictly ascending in s; k_r is non-decreasing.
struct RelPermTable {
  std::vector<double> s, kr;

  double eval(double sat) const;  // linear between knots, flat outside
  void validate(const char* what) const;
};

struct FluidProps {
  double mu_w = 1.0, mu_o = 1.0;      // centipoise
  double rho_w = 1000.0, rho_o = 800.0;  // kg/m^3
  RelPermTable relperm_w, relperm_o;
};

// Per-cell static fields, all sized nx*ny*nz. Face transmissibilities are
// stored at the lower cell of each face (trans_x[c] couples c and c+1 along
// x); entries on the high boundary are 0.
struct StaticProps {
  std::vector<double> depth;                  // meters, increasing downward
  std::vector<double> porosity;               // fraction
  std::vector<double> pore_volume;            // barrels
  std::vector<double> connate_water_volume;   // barrels
  std::vector<double> perm_x, perm_y, perm_z;  // millidarcy
  std::vector<double> trans_x, trans_y, trans_z;
  FluidProps fluid;
};

struct Well {
  enum Kind : uint8_t { kInjector, kProducer };
  Kind kind = kInjector;
  std::string name;
  std::vector<int32_t> perforations;  // cell ids
  double water_rate = 0.0;            // injector: barrels/month
  double bhp = 0.0;                   // producer: psi
  double wi_multiplier = 1.0;         // producer: well index as multiple of cell transmissibility
};

// Sealed cell faces: each entry in `faces` is the lower cell id of a face
// along `axis`; the face couples that cell with its +axis neighbor.
struct FaultPlane {
  int axis = 0;
  std::vector<int32_t> faces;
};

struct Grid {
  std::array<int64_t, 3> dims{0, 0, 0};        // nx, ny, nz
  std::array<double, 3> cell_size{1.0, 1.0, 1.0};  // meters
  std::vector<uint8_t> active;
  StaticProps statics;
  std::vector<Well> wells;
  std::vector<FaultPlane> faults;

  int64_t ncells() const { return dims[0] * dims[1] * dims[2]; }
  int64_t cell_id(int64_t x, int64_t y, int64_t z) const { return x + dims[0] * (y + dims[1] * z); }
  std::array<int64_t, 3> cell_xyz(int64_t id) const {
    return {id % dims[0], (id / dims[0]) % dims[1], id / (dims[0] * dims[1])};
  }
  bool is_active(int64_t id) const { return active[static_cast<size_t>(id)] != 0; }
  std::vector<int32_t> active_cells() const;  // ascending cell id

  bool face_sealed(int64_t lower_cell, int axis) const;
  void validate() const;  // throws std::invalid_argument
};

enum EdgeDir : uint8_t { kEdgeUp = 0, kEdgeDown = 1, kEdgeHorizontal = 2 };

// Directed 6-neighbor adjacency over active cells. src/dst hold cell ids;
// parallel arrays, fixed construction order (ascending lower cell, axis
// x,y,z, lower->upper then upper->lower) so downstream reductions are
// reproducible.
struct GraphTopology {
  std::vector<int32_t> src, dst;
  std::vector<uint8_t> dir;     // EdgeDir
  std::vector<double> trans;    // face transmissibility of the crossed face
  int64_t nedges() const { return static_cast<int64_t>(src.size()); }
};

// T = (A/d) * harmonic_mean(k_lower, k_upper) for the face between `cell`
// and its +axis neighbor; 0 if either side is inactive, either perm is 0, or
// the face is on the outer boundary.
double face_transmissibility(const Grid& grid, int64_t cell, int axis);

// Fills statics.trans_x/y/z from permeability and geometry; sealed faces get 0.
void compute_face_transmissibilities(Grid& grid);

GraphTopology build_cell_graph(const Grid& grid);
GraphTopology cut_fault_edges(const GraphTopology& topo, const Grid& grid);

// Per-axis nearness to the grid boundary: clamp((6 - d)/5, 0, 1) where d is
// the cell distance to the closest face of the full box along that axis.
// Returned row-major as ncells x 3.
std::vector<double> boundary_encoding(const Grid& grid);

}  // namespace hgns
