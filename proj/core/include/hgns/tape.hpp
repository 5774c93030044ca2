#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "hgns/tensor.hpp"

namespace hgns::ad {

using NodeId = int32_t;
inline constexpr NodeId kNoNode = -1;

enum class UpsampleMode { kTrilinear, kNearest };

// Sparse row map with at most two terms per output row. Used for finite
// difference stencils (spatial gradients) where each output is a signed
// combination of one or two input rows.
struct LinearMap {
  struct Term {
    int32_t src = -1;
    double coef = 0.0;
  };
  std::vector<std::array<Term, 2>> rows;
  int64_t input_rows = 0;
};

// Piecewise-linear table over strictly ascending x knots; flat outside the
// knot range.
struct PwlTable {
  std::vector<double> x, y;
};

// (value, slope) at x. Exposed so non-tape code can evaluate a table with
// bit-identical arithmetic to the kPwl op.
std::pair<double, double> pwl_eval(const PwlTable& table, double x);

enum class Op : uint8_t {
  kInput,
  kLinear,
  kRelu,
  kElu,
  kGroupNorm,
  kConv3d,
  kMaxPool3d,
  kUpsample2x,
  kConcat,
  kGatherRows,
  kScatterSum,
  kSelectCols,
  kAffineCols,
  kMulConst,
  kAddConst,
  kAdd,
  kSub,
  kLinearMap,
  kPwl,
  kRowsToVolume,
  kVolumeToRows,
  kPad3d,
  kCrop3d,
  kMse,
  kWeightedSum,
};

const char* op_name(Op op);

namespace attr {
struct None {};
struct GroupNorm {
  int groups;
  double eps;
};
struct Upsample {
  UpsampleMode mode;
};
struct Concat {
  int axis;
};
struct Indices {  // gather_rows idx / scatter_sum dst
  std::shared_ptr<const std::vector<int32_t>> idx;
  int64_t out_rows;  // scatter only
};
struct Cols {
  std::vector<int32_t> cols;
};
struct AffineCols {
  std::vector<double> scale, shift;
};
struct Const {
  Tensor c;
};
struct Map {
  std::shared_ptr<const LinearMap> map;
};
struct Pwl {
  std::shared_ptr<const PwlTable> table;
};
struct Volume {  // rows<->volume; dims = (nx, ny, nz), cell id = x + nx*(y + ny*z)
  std::shared_ptr<const std::vector<int32_t>> cell_ids;
  std::array<int64_t, 3> dims;
};
struct Pad {
  std::array<int64_t, 3> lo, hi;  // (z, y, x) pads
};
struct Crop {
  std::array<int64_t, 3> lo, size;  // (z, y, x)
};
struct Mse {
  Tensor target, wm;  // wm = weight*mask, same shape as prediction
  double denom;       // sum of wm
};
struct WeightedSum {
  std::vector<double> coefs;
};
}  // namespace attr

using Attr = std::variant<attr::None, attr::GroupNorm, attr::Upsample, attr::Concat, attr::Indices, attr::Cols,
                          attr::AffineCols, attr::Const, attr::Map, attr::Pwl, attr::Volume, attr::Pad, attr::Crop,
                          attr::Mse, attr::WeightedSum>;

struct Node {
  Op op = Op::kInput;
  std::vector<NodeId> src;
  Attr attr;
  Tensor value;
  std::vector<int32_t> aux;  // op scratch saved at forward (e.g. pool argmax)
  std::vector<double> auxd;  // op scratch (e.g. group norm statistics)
  bool requires_grad = false;
};

// Forward-building reverse-mode tape. Nodes are appended in topological order;
// backward() walks them in reverse. All kernels are sequential with fixed
// accumulation order, so identical inputs give bit-identical values and
// gradients.
class Tape {
 public:
  NodeId input(Tensor v, bool requires_grad = false);

  // y[N,O] = x[N,I] * W[I,O] + b[O]
  NodeId linear(NodeId w, NodeId b, NodeId x);
  NodeId relu(NodeId x);
  NodeId elu(NodeId x);  // alpha = 1
  // x: (N, C, spatial...); normalizes per (n, group) over channel-subset x spatial.
  NodeId group_norm(NodeId x, int groups, NodeId gamma, NodeId beta, double eps = 1e-5);
  // x[C,D,H,W], w[OC,C,k,k,k] with k in {1,3}, b[OC]; stride 1, same zero padding.
  NodeId conv3d(NodeId x, NodeId w, NodeId b);
  NodeId max_pool3d(NodeId x);  // 2x2x2 window, stride 2
  NodeId upsample2x(NodeId x, UpsampleMode mode = UpsampleMode::kTrilinear);
  NodeId concat(const std::vector<NodeId>& xs, int axis);
  NodeId gather_rows(NodeId x, std::shared_ptr<const std::vector<int32_t>> idx);
  // y[out_rows, C]; y[dst[e]] += x[e] accumulated in ascending edge index order.
  NodeId scatter_sum(NodeId x, std::shared_ptr<const std::vector<int32_t>> dst, int64_t out_rows);
  NodeId select_cols(NodeId x, std::vector<int32_t> cols);
  NodeId affine_cols(NodeId x, std::vector<double> scale, std::vector<double> shift);
  NodeId mul_const(NodeId x, Tensor c);
  NodeId add_const(NodeId x, Tensor c);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId linear_map(NodeId x, std::shared_ptr<const LinearMap> map);
  NodeId pwl(NodeId x, std::shared_ptr<const PwlTable> table);
  NodeId rows_to_volume(NodeId x, std::shared_ptr<const std::vector<int32_t>> cell_ids, std::array<int64_t, 3> dims);
  NodeId volume_to_rows(NodeId x, std::shared_ptr<const std::vector<int32_t>> cell_ids, std::array<int64_t, 3> dims);
  NodeId pad3d(NodeId x, std::array<int64_t, 3> lo, std::array<int64_t, 3> hi);
  NodeId crop3d(NodeId x, std::array<int64_t, 3> lo, std::array<int64_t, 3> size);
  // Weighted masked mean squared error; scalar output.
  NodeId mse(NodeId pred, Tensor target, Tensor weight, Tensor mask);
  NodeId weighted_sum(const std::vector<NodeId>& scalars, std::vector<double> coefs);

  const Tensor& value(NodeId id) const;
  size_t size() const { return nodes_.size(); }

  // Reverse pass from a scalar loss node. Gradients of inputs that do not
  // influence the loss are zero.
  void backward(NodeId loss);
  const Tensor& grad(NodeId id) const;

 private:
  NodeId push(Node n);
  const Node& at(NodeId id, const char* who) const;
  Node& at(NodeId id, const char* who);

  // deque keeps value()/grad() references stable while the tape grows
  std::deque<Node> nodes_;
  std::vector<Tensor> grads_;
  bool has_grads_ = false;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t coords_checked = 0;
  double worst_analytic = 0.0, worst_numeric = 0.0;
  std::string worst_coord;
};

// Central-difference check of Tape::backward. `build` must deterministically
// construct a scalar loss from the given parameter nodes. When
// max_coords_per_tensor > 0, a seeded random subset of coordinates is checked
// per tensor, otherwise all of them. Relative error uses floor 1e-3 so that
// near-zero gradient pairs compare absolutely.
GradCheckReport grad_check(const std::function<NodeId(Tape&, const std::vector<NodeId>&)>& build,
                           const std::vector<Tensor>& params, double eps = 1e-6, int64_t max_coords_per_tensor = 0,
                           uint64_t seed = 12345);

}  // namespace hgns::ad
