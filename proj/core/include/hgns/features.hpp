#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hgns/grid.hpp"
#include "hgns/tape.hpp"
#include "hgns/trajectory.hpp"

namespace hgns {

enum class FeatureGroup : uint8_t { kDynamic, kStatic, kComputed, kControl };

struct FeatureField {
  std::string name;
  int width = 1;
  FeatureGroup group = FeatureGroup::kStatic;
  bool normalize = true;  // one-hot and boundary columns keep raw values
};

// Ordered column layout of the node feature matrix. The order is part of the
// model contract: checkpoints store hash() and refuse to load into a
// different layout.
struct FeatureSchema {
  std::vector<FeatureField> fields;

  int total_width() const;
  int offset_of(const std::string& name) const;  // -1 when absent
  uint64_t hash() const;

  // [P, V_w, V_o | depth, phi, V, V_wc, k_x, k_y, k_z, T_x, T_y, T_z,
  //  node type(3), boundary(3) | k_rw, k_ro, grad P(3), grad V_w(3),
  //  grad V_o(3) | q_w_inj, injector pressure] -- 32 columns.
  static FeatureSchema node_default();
};

// Per-column affine normalization fitted on training data, x -> x*scale+shift
// with scale = 1/std, shift = -mean*scale. Columns with normalize=false keep
// mean 0 / std 1. Step deltas (dP, dV_w, dV_o) are scaled but never centered,
// so a zero model output always decodes to exactly "no change". Edge
// transmissibility carries its own statistics.
struct Normalizer {
  std::vector<double> mean, stdev;
  double edge_t_mean = 0.0;
  double edge_t_std = 1.0;
  std::array<double, 3> delta_std{1.0, 1.0, 1.0};  // dP, dV_w, dV_o
};

std::string normalizer_to_json(const Normalizer& n);
Normalizer normalizer_from_json(const std::string& text);

std::string schema_to_json(const FeatureSchema& s);
FeatureSchema schema_from_json(const std::string& text);

// In-place per-column transforms on an N x width(n.mean) row-major matrix.
void normalize_features(const Normalizer& n, std::vector<double>& features);
void denormalize_features(const Normalizer& n, std::vector<double>& features);

// d(field)/d(axis): central difference where both axis neighbors are active,
// one-sided where exactly one is, zero otherwise. Inactive cells get zero.
std::vector<double> spatial_gradient(const std::vector<double>& field, const Grid& grid, int axis);

// The same difference stencil as a sparse map, shared by the plain and the
// differentiable assembly so their outputs agree bit for bit.
std::shared_ptr<const ad::LinearMap> gradient_stencil(const Grid& grid, int axis);

// N x d row-major in schema order. Pass normalizer = nullptr for raw values.
// A cell perforated by an injector reads as node type injector, by a producer
// as producer (producer wins if both); q_w_inj comes from controls and the
// injector-pressure column is the cell's own pressure on injector cells.
std::vector<double> assemble_node_features(const State& state, const Grid& grid, const StepControls& controls,
                                           const FeatureSchema& schema, const Normalizer* normalizer);

// E x 4 row-major: [T, up, down, horizontal]; T is z-scored by the edge
// statistics when a normalizer is given, raw otherwise.
std::vector<double> assemble_edge_features(const GraphTopology& topo, const Normalizer* normalizer);

// Differentiable twin of assemble_node_features. pressure/water/oil are
// (N x 1) tape nodes; everything else enters as constants. Gradients flow
// into the dynamic columns, the computed columns (relperm, spatial
// gradients) and the injector-pressure control column, which is what lets a
// rollout loss reach back through recomputed features.
ad::NodeId build_node_features(ad::Tape& tape, ad::NodeId pressure, ad::NodeId water, ad::NodeId oil,
                               const Grid& grid, const StepControls& controls, const FeatureSchema& schema,
                               const Normalizer* normalizer);

// Fits per-column mean/std (population), edge-T stats and delta scales over
// every (state, control) pair of the dataset, active cells only. std is
// floored at 1e-6.
Normalizer fit_normalizer(const std::vector<Trajectory>& dataset, const FeatureSchema& schema);

}  // namespace hgns
