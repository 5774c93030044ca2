#include "hgns/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace hgns::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kLinear: return "linear";
    case Op::kRelu: return "relu";
    case Op::kElu: return "elu";
    case Op::kGroupNorm: return "group_norm";
    case Op::kConv3d: return "conv3d";
    case Op::kMaxPool3d: return "max_pool3d";
    case Op::kUpsample2x: return "upsample2x";
    case Op::kConcat: return "concat";
    case Op::kGatherRows: return "gather_rows";
    case Op::kScatterSum: return "scatter_sum";
    case Op::kSelectCols: return "select_cols";
    case Op::kAffineCols: return "affine_cols";
    case Op::kMulConst: return "mul_const";
    case Op::kAddConst: return "add_const";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kLinearMap: return "linear_map";
    case Op::kPwl: return "pwl";
    case Op::kRowsToVolume: return "rows_to_volume";
    case Op::kVolumeToRows: return "volume_to_rows";
    case Op::kPad3d: return "pad3d";
    case Op::kCrop3d: return "crop3d";
    case Op::kMse: return "mse";
    case Op::kWeightedSum: return "weighted_sum";
  }
  return "?";
}

std::pair<double, double> pwl_eval(const PwlTable& tab, double s) {
  const auto& X = tab.x;
  const auto& Y = tab.y;
  if (s <= X.front()) return {Y.front(), 0.0};
  if (s >= X.back()) return {Y.back(), 0.0};
  size_t hi = static_cast<size_t>(std::upper_bound(X.begin(), X.end(), s) - X.begin());
  size_t lo = hi - 1;
  double slope = (Y[hi] - Y[lo]) / (X[hi] - X[lo]);
  return {Y[lo] + slope * (s - X[lo]), slope};
}

namespace {

[[noreturn]] void fail(Op op, const std::string& msg) {
  throw std::invalid_argument(std::string(op_name(op)) + ": " + msg);
}

void check_rank(Op op, const Tensor& t, int rank, const char* what) {
  if (t.rank() != rank) fail(op, std::string(what) + " must have rank " + std::to_string(rank) + ", got shape " + t.shape_str());
}

struct UpAxis {
  std::vector<int64_t> i0, i1;
  std::vector<double> w1;  // weight of i1; weight of i0 is 1-w1
};

// align_corners=false mapping for scale factor 2: s = (o + 0.5)/2 - 0.5.
UpAxis upsample_axis(int64_t n_in, UpsampleMode mode) {
  UpAxis a;
  int64_t n_out = 2 * n_in;
  a.i0.resize(n_out);
  a.i1.resize(n_out);
  a.w1.resize(n_out);
  for (int64_t o = 0; o < n_out; ++o) {
    if (mode == UpsampleMode::kNearest) {
      a.i0[o] = o / 2;
      a.i1[o] = o / 2;
      a.w1[o] = 0.0;
      continue;
    }
    double s = 0.5 * (static_cast<double>(o) + 0.5) - 0.5;
    if (s <= 0.0) {
      a.i0[o] = 0;
      a.i1[o] = 0;
      a.w1[o] = 0.0;
    } else if (s >= static_cast<double>(n_in - 1)) {
      a.i0[o] = n_in - 1;
      a.i1[o] = n_in - 1;
      a.w1[o] = 0.0;
    } else {
      int64_t i0 = static_cast<int64_t>(std::floor(s));
      a.i0[o] = i0;
      a.i1[o] = i0 + 1;
      a.w1[o] = s - static_cast<double>(i0);
    }
  }
  return a;
}

}  // namespace

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  has_grads_ = false;
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Node& Tape::at(NodeId id, const char* who) const {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
    throw std::invalid_argument(std::string(who) + ": node id " + std::to_string(id) + " is not on this tape");
  return nodes_[static_cast<size_t>(id)];
}

Node& Tape::at(NodeId id, const char* who) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->at(id, who));
}

NodeId Tape::input(Tensor v, bool requires_grad) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(v);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

const Tensor& Tape::value(NodeId id) const { return at(id, "value").value; }

NodeId Tape::linear(NodeId w, NodeId b, NodeId x) {
  const Node& wn = at(w, "linear");
  const Node& bn = at(b, "linear");
  const Node& xn = at(x, "linear");
  check_rank(Op::kLinear, xn.value, 2, "x");
  check_rank(Op::kLinear, wn.value, 2, "W");
  check_rank(Op::kLinear, bn.value, 1, "b");
  int64_t N = xn.value.dim(0), I = xn.value.dim(1), O = wn.value.dim(1);
  if (wn.value.dim(0) != I)
    fail(Op::kLinear, "W shape " + wn.value.shape_str() + " does not match x shape " + xn.value.shape_str());
  if (bn.value.dim(0) != O) fail(Op::kLinear, "b shape " + bn.value.shape_str() + " does not match W " + wn.value.shape_str());

  Node n;
  n.op = Op::kLinear;
  n.src = {w, b, x};
  n.requires_grad = wn.requires_grad || bn.requires_grad || xn.requires_grad;
  n.value = Tensor({N, O});
  const double* xp = xn.value.ptr();
  const double* wp = wn.value.ptr();
  const double* bp = bn.value.ptr();
  double* yp = n.value.ptr();
  for (int64_t r = 0; r < N; ++r) {
    const double* xr = xp + r * I;
    double* yr = yp + r * O;
    std::memcpy(yr, bp, sizeof(double) * static_cast<size_t>(O));
    for (int64_t i = 0; i < I; ++i) {
      double xv = xr[i];
      const double* wr = wp + i * O;
      for (int64_t o = 0; o < O; ++o) yr[o] += xv * wr[o];
    }
  }
  return push(std::move(n));
}

NodeId Tape::relu(NodeId x) {
  const Node& xn = at(x, "relu");
  Node n;
  n.op = Op::kRelu;
  n.src = {x};
  n.requires_grad = xn.requires_grad;
  n.value = xn.value;
  for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

NodeId Tape::elu(NodeId x) {
  const Node& xn = at(x, "elu");
  Node n;
  n.op = Op::kElu;
  n.src = {x};
  n.requires_grad = xn.requires_grad;
  n.value = xn.value;
  for (double& v : n.value.data) v = v > 0.0 ? v : std::expm1(v);
  return push(std::move(n));
}

NodeId Tape::group_norm(NodeId x, int groups, NodeId gamma, NodeId beta, double eps) {
  const Node& xn = at(x, "group_norm");
  const Node& gn = at(gamma, "group_norm");
  const Node& bn = at(beta, "group_norm");
  if (xn.value.rank() < 2) fail(Op::kGroupNorm, "x must have rank >= 2, got " + xn.value.shape_str());
  int64_t N = xn.value.dim(0), C = xn.value.dim(1);
  if (groups <= 0 || C % groups != 0)
    fail(Op::kGroupNorm, "channels " + std::to_string(C) + " not divisible by groups " + std::to_string(groups));
  check_rank(Op::kGroupNorm, gn.value, 1, "gamma");
  check_rank(Op::kGroupNorm, bn.value, 1, "beta");
  if (gn.value.dim(0) != C || bn.value.dim(0) != C) fail(Op::kGroupNorm, "gamma/beta must have length C=" + std::to_string(C));
  int64_t S = xn.value.numel() / (N * C);  // spatial extent
  int64_t cg = C / groups;
  int64_t m = cg * S;

  Node n;
  n.op = Op::kGroupNorm;
  n.src = {x, gamma, beta};
  n.attr = attr::GroupNorm{groups, eps};
  n.requires_grad = xn.requires_grad || gn.requires_grad || bn.requires_grad;
  n.value = Tensor(xn.value.shape);
  n.auxd.resize(static_cast<size_t>(2 * N * groups));
  const double* xp = xn.value.ptr();
  const double* gp = gn.value.ptr();
  const double* bp = bn.value.ptr();
  double* yp = n.value.ptr();
  for (int64_t r = 0; r < N; ++r) {
    for (int64_t g = 0; g < groups; ++g) {
      const double* base = xp + (r * C + g * cg) * S;
      double mean = 0.0;
      for (int64_t i = 0; i < m; ++i) mean += base[i];
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (int64_t i = 0; i < m; ++i) {
        double d = base[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(m);
      double inv = 1.0 / std::sqrt(var + eps);
      n.auxd[static_cast<size_t>(2 * (r * groups + g))] = mean;
      n.auxd[static_cast<size_t>(2 * (r * groups + g) + 1)] = inv;
      for (int64_t c = 0; c < cg; ++c) {
        double ga = gp[g * cg + c], be = bp[g * cg + c];
        const double* xi = base + c * S;
        double* yi = yp + (r * C + g * cg + c) * S;
        for (int64_t s = 0; s < S; ++s) yi[s] = ga * (xi[s] - mean) * inv + be;
      }
    }
  }
  return push(std::move(n));
}

NodeId Tape::conv3d(NodeId x, NodeId w, NodeId b) {
  const Node& xn = at(x, "conv3d");
  const Node& wn = at(w, "conv3d");
  const Node& bn = at(b, "conv3d");
  check_rank(Op::kConv3d, xn.value, 4, "x");
  if (wn.value.rank() != 5) fail(Op::kConv3d, "kernel must have rank 5, got " + wn.value.shape_str());
  check_rank(Op::kConv3d, bn.value, 1, "bias");
  int64_t C = xn.value.dim(0), D = xn.value.dim(1), H = xn.value.dim(2), W = xn.value.dim(3);
  int64_t OC = wn.value.dim(0), K = wn.value.dim(2);
  if (wn.value.dim(1) != C) fail(Op::kConv3d, "kernel " + wn.value.shape_str() + " does not match input " + xn.value.shape_str());
  if (wn.value.dim(3) != K || wn.value.dim(4) != K || (K != 1 && K != 3))
    fail(Op::kConv3d, "kernel must be cubic with size 1 or 3, got " + wn.value.shape_str());
  if (bn.value.dim(0) != OC) fail(Op::kConv3d, "bias length must equal output channels " + std::to_string(OC));

  Node n;
  n.op = Op::kConv3d;
  n.src = {x, w, b};
  n.requires_grad = xn.requires_grad || wn.requires_grad || bn.requires_grad;
  n.value = Tensor({OC, D, H, W});
  int64_t vox = D * H * W;
  const double* xp = xn.value.ptr();
  const double* wp = wn.value.ptr();
  const double* bp = bn.value.ptr();
  double* yp = n.value.ptr();
  for (int64_t oc = 0; oc < OC; ++oc) {
    double bias = bp[oc];
    double* yc = yp + oc * vox;
    for (int64_t i = 0; i < vox; ++i) yc[i] = bias;
  }
  if (K == 1) {
    for (int64_t oc = 0; oc < OC; ++oc) {
      double* yc = yp + oc * vox;
      for (int64_t c = 0; c < C; ++c) {
        double kv = wp[(oc * C + c)];
        const double* xc = xp + c * vox;
        for (int64_t i = 0; i < vox; ++i) yc[i] += kv * xc[i];
      }
    }
  } else {
    for (int64_t oc = 0; oc < OC; ++oc) {
      double* yc = yp + oc * vox;
      for (int64_t c = 0; c < C; ++c) {
        const double* xc = xp + c * vox;
        const double* kr = wp + (oc * C + c) * 27;
        for (int dz = -1; dz <= 1; ++dz)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              double kv = kr[((dz + 1) * 3 + dy + 1) * 3 + dx + 1];
              int64_t z0 = std::max<int64_t>(0, -dz), z1 = std::min<int64_t>(D, D - dz);
              int64_t y0 = std::max<int64_t>(0, -dy), y1 = std::min<int64_t>(H, H - dy);
              int64_t x0 = std::max<int64_t>(0, -dx), x1 = std::min<int64_t>(W, W - dx);
              for (int64_t z = z0; z < z1; ++z)
                for (int64_t yy = y0; yy < y1; ++yy) {
                  double* yr = yc + (z * H + yy) * W;
                  const double* xr = xc + ((z + dz) * H + (yy + dy)) * W + dx;
                  for (int64_t xx = x0; xx < x1; ++xx) yr[xx] += kv * xr[xx];
                }
            }
      }
    }
  }
  return push(std::move(n));
}

NodeId Tape::max_pool3d(NodeId x) {
  const Node& xn = at(x, "max_pool3d");
  check_rank(Op::kMaxPool3d, xn.value, 4, "x");
  int64_t C = xn.value.dim(0), D = xn.value.dim(1), H = xn.value.dim(2), W = xn.value.dim(3);
  if (D % 2 || H % 2 || W % 2) fail(Op::kMaxPool3d, "spatial dims must be even, got " + xn.value.shape_str());

  Node n;
  n.op = Op::kMaxPool3d;
  n.src = {x};
  n.requires_grad = xn.requires_grad;
  n.value = Tensor({C, D / 2, H / 2, W / 2});
  n.aux.resize(static_cast<size_t>(n.value.numel()));
  const double* xp = xn.value.ptr();
  double* yp = n.value.ptr();
  int64_t oi = 0;
  for (int64_t c = 0; c < C; ++c)
    for (int64_t z = 0; z < D; z += 2)
      for (int64_t yy = 0; yy < H; yy += 2)
        for (int64_t xx = 0; xx < W; xx += 2) {
          double best = -1e300;
          int64_t besti = -1;
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                int64_t idx = ((c * D + z + dz) * H + yy + dy) * W + xx + dx;
                if (xp[idx] > best) {
                  best = xp[idx];
                  besti = idx;
                }
              }
          yp[oi] = best;
          n.aux[static_cast<size_t>(oi)] = static_cast<int32_t>(besti);
          ++oi;
        }
  return push(std::move(n));
}

NodeId Tape::upsample2x(NodeId x, UpsampleMode mode) {
  const Node& xn = at(x, "upsample2x");
  check_rank(Op::kUpsample2x, xn.value, 4, "x");
  int64_t C = xn.value.dim(0), D = xn.value.dim(1), H = xn.value.dim(2), W = xn.value.dim(3);

  Node n;
  n.op = Op::kUpsample2x;
  n.src = {x};
  n.attr = attr::Upsample{mode};
  n.requires_grad = xn.requires_grad;
  n.value = Tensor({C, 2 * D, 2 * H, 2 * W});
  UpAxis az = upsample_axis(D, mode), ay = upsample_axis(H, mode), ax = upsample_axis(W, mode);
  const double* xp = xn.value.ptr();
  double* yp = n.value.ptr();
  for (int64_t c = 0; c < C; ++c) {
    const double* xc = xp + c * D * H * W;
    double* yc = yp + c * (2 * D) * (2 * H) * (2 * W);
    for (int64_t z = 0; z < 2 * D; ++z)
      for (int64_t yy = 0; yy < 2 * H; ++yy)
        for (int64_t xx = 0; xx < 2 * W; ++xx) {
          double v = 0.0;
          double wz1 = az.w1[z], wy1 = ay.w1[yy], wx1 = ax.w1[xx];
          for (int bz = 0; bz < 2; ++bz) {
            double wz = bz ? wz1 : 1.0 - wz1;
            if (wz == 0.0) continue;
            int64_t sz = bz ? az.i1[z] : az.i0[z];
            for (int by = 0; by < 2; ++by) {
              double wy = by ? wy1 : 1.0 - wy1;
              if (wy == 0.0) continue;
              int64_t sy = by ? ay.i1[yy] : ay.i0[yy];
              for (int bx = 0; bx < 2; ++bx) {
                double wx = bx ? wx1 : 1.0 - wx1;
                if (wx == 0.0) continue;
                int64_t sx = bx ? ax.i1[xx] : ax.i0[xx];
                v += wz * wy * wx * xc[(sz * H + sy) * W + sx];
              }
            }
          }
          yc[(z * 2 * H + yy) * 2 * W + xx] = v;
        }
  }
  return push(std::move(n));
}

NodeId Tape::concat(const std::vector<NodeId>& xs, int axis) {
  if (xs.empty()) fail(Op::kConcat, "no inputs");
  if (axis != 0 && axis != 1) fail(Op::kConcat, "axis must be 0 or 1");
  Node n;
  n.op = Op::kConcat;
  n.src = xs;
  n.attr = attr::Concat{axis};
  const Tensor& first = at(xs[0], "concat").value;
  if (axis == 0) {
    int64_t total0 = 0;
    for (NodeId id : xs) {
      const Node& xn = at(id, "concat");
      if (xn.value.rank() != first.rank()) fail(Op::kConcat, "rank mismatch between inputs");
      for (int d = 1; d < first.rank(); ++d)
        if (xn.value.dim(d) != first.dim(d))
          fail(Op::kConcat, "trailing dims mismatch: " + xn.value.shape_str() + " vs " + first.shape_str());
      total0 += xn.value.dim(0);
      n.requires_grad = n.requires_grad || xn.requires_grad;
    }
    std::vector<int64_t> shape = first.shape;
    shape[0] = total0;
    n.value = Tensor(shape);
    double* yp = n.value.ptr();
    for (NodeId id : xs) {
      const Tensor& v = at(id, "concat").value;
      std::memcpy(yp, v.ptr(), sizeof(double) * v.data.size());
      yp += v.numel();
    }
  } else {
    int64_t N = first.dim(0);
    int64_t total1 = 0;
    for (NodeId id : xs) {
      const Node& xn = at(id, "concat");
      check_rank(Op::kConcat, xn.value, 2, "x (axis=1)");
      if (xn.value.dim(0) != N) fail(Op::kConcat, "row count mismatch: " + xn.value.shape_str() + " vs " + first.shape_str());
      total1 += xn.value.dim(1);
      n.requires_grad = n.requires_grad || xn.requires_grad;
    }
    n.value = Tensor({N, total1});
    int64_t off = 0;
    for (NodeId id : xs) {
      const Tensor& v = at(id, "concat").value;
      int64_t k = v.dim(1);
      for (int64_t r = 0; r < N; ++r)
        std::memcpy(n.value.ptr() + r * total1 + off, v.ptr() + r * k, sizeof(double) * static_cast<size_t>(k));
      off += k;
    }
  }
  return push(std::move(n));
}

NodeId Tape::gather_rows(NodeId x, std::shared_ptr<const std::vector<int32_t>> idx) {
  const Node& xn = at(x, "gather_rows");
  check_rank(Op::kGatherRows, xn.value, 2, "x");
  int64_t N = xn.value.dim(0), C = xn.value.dim(1);
  for (int32_t i : *idx)
    if (i < 0 || i >= N) fail(Op::kGatherRows, "index " + std::to_string(i) + " out of range [0," + std::to_string(N) + ")");
  Node n;
  n.op = Op::kGatherRows;
  n.src = {x};
  n.attr = attr::Indices{idx, 0};
  n.requires_grad = xn.requires_grad;
  int64_t E = static_cast<int64_t>(idx->size());
  n.value = Tensor({E, C});
  for (int64_t e = 0; e < E; ++e)
    std::memcpy(n.value.ptr() + e * C, xn.value.ptr() + static_cast<int64_t>((*idx)[static_cast<size_t>(e)]) * C,
                sizeof(double) * static_cast<size_t>(C));
  return push(std::move(n));
}

NodeId Tape::scatter_sum(NodeId x, std::shared_ptr<const std::vector<int32_t>> dst, int64_t out_rows) {
  const Node& xn = at(x, "scatter_sum");
  check_rank(Op::kScatterSum, xn.value, 2, "x");
  int64_t E = xn.value.dim(0), C = xn.value.dim(1);
  if (static_cast<int64_t>(dst->size()) != E)
    fail(Op::kScatterSum, "dst length " + std::to_string(dst->size()) + " does not match rows " + std::to_string(E));
  for (int32_t i : *dst)
    if (i < 0 || i >= out_rows) fail(Op::kScatterSum, "dst index " + std::to_string(i) + " out of range");
  Node n;
  n.op = Op::kScatterSum;
  n.src = {x};
  n.attr = attr::Indices{dst, out_rows};
  n.requires_grad = xn.requires_grad;
  n.value = Tensor({out_rows, C});
  // accumulate strictly in ascending edge order so results are reproducible
  for (int64_t e = 0; e < E; ++e) {
    double* yr = n.value.ptr() + static_cast<int64_t>((*dst)[static_cast<size_t>(e)]) * C;
    const double* xr = xn.value.ptr() + e * C;
    for (int64_t c = 0; c < C; ++c) yr[c] += xr[c];
  }
  return push(std::move(n));
}

NodeId Tape::select_cols(NodeId x, std::vector<int32_t> cols) {
  const Node& xn = at(x, "select_cols");
  check_rank(Op::kSelectCols, xn.value, 2, "x");
  int64_t N = xn.value.dim(0), C = xn.value.dim(1);
  for (int32_t c : cols)
    if (c < 0 || c >= C) fail(Op::kSelectCols, "column " + std::to_string(c) + " out of range");
  Node n;
  n.op = Op::kSelectCols;
  n.src = {x};
  n.requires_grad = xn.requires_grad;
  int64_t k = static_cast<int64_t>(cols.size());
  n.value = Tensor({N, k});
  for (int64_t r = 0; r < N; ++r)
    for (int64_t j = 0; j < k; ++j) n.value.ptr()[r * k + j] = xn.value.ptr()[r * C + cols[static_cast<size_t>(j)]];
  n.attr = attr::Cols{std::move(cols)};
  return push(std::move(n));
}

NodeId Tape::affine_cols(NodeId x, std::vector<double> scale, std::vector<double> shift) {
  const Node& xn = at(x, "affine_cols");
  check_rank(Op::kAffineCols, xn.value, 2, "x");
  int64_t N = xn.value.dim(0), C = xn.value.dim(1);
  if (static_cast<int64_t>(scale.size()) != C || static_cast<int64_t>(shift.size()) != C)
    fail(Op::kAffineCols, "scale/shift length must equal columns " + std::to_string(C));
  Node n;
  n.op = Op::kAffineCols;
  n.src = {x};
  n.requires_grad = xn.requires_grad;
  n.value = Tensor({N, C});
  for (int64_t r = 0; r < N; ++r)
    for (int64_t c = 0; c < C; ++c)
      n.value.ptr()[r * C + c] = xn.value.ptr()[r * C + c] * scale[static_cast<size_t>(c)] + shift[static_cast<size_t>(c)];
  n.attr = attr::AffineCols{std::move(scale), std::move(shift)};
  return push(std::move(n));
}

NodeId Tape::mul_const(NodeId x, Tensor c) {
  const Node& xn = at(x, "mul_const");
  if (!xn.value.same_shape(c)) fail(Op::kMulConst, "shape mismatch " + xn.value.shape_str() + " vs " + c.shape_str());
  Node n;
  n.op = Op::kMulConst;
  n.src = {x};
  n.requires_grad = xn.requires_grad;
  n.value = Tensor(xn.value.shape);
  for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] = xn.value.data[i] * c.data[i];
  n.attr = attr::Const{std::move(c)};
  return push(std::move(n));
}

NodeId Tape::add_const(NodeId x, Tensor c) {
  const Node& xn = at(x, "add_const");
  if (!xn.value.same_shape(c)) fail(Op::kAddConst, "shape mismatch " + xn.value.shape_str() + " vs " + c.shape_str());
  Node n;
  n.op = Op::kAddConst;
  n.src = {x};
  n.requires_grad = xn.requires_grad;
  n.value = Tensor(xn.value.shape);
  for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] = xn.value.data[i] + c.data[i];
  n.attr = attr::Const{std::move(c)};
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Node& an = at(a, "add");
  const Node& bn = at(b, "add");
  if (!an.value.same_shape(bn.value)) fail(Op::kAdd, "shape mismatch " + an.value.shape_str() + " vs " + bn.value.shape_str());
  Node n;
  n.op = Op::kAdd;
  n.src = {a, b};
  n.requires_grad = an.requires_grad || bn.requires_grad;
  n.value = Tensor(an.value.shape);
  for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] = an.value.data[i] + bn.value.data[i];
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Node& an = at(a, "sub");
  const Node& bn = at(b, "sub");
  if (!an.value.same_shape(bn.value)) fail(Op::kSub, "shape mismatch " + an.value.shape_str() + " vs " + bn.value.shape_str());
  Node n;
  n.op = Op::kSub;
  n.src = {a, b};
  n.requires_grad = an.requires_grad || bn.requires_grad;
  n.value = Tensor(an.value.shape);
  for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] = an.value.data[i] - bn.value.data[i];
  return push(std::move(n));
}

NodeId Tape::linear_map(NodeId x, std::shared_ptr<const LinearMap> map) {
  const Node& xn = at(x, "linear_map");
  check_rank(Op::kLinearMap, xn.value, 2, "x");
  if (xn.value.dim(1) != 1) fail(Op::kLinearMap, "x must be a column, got " + xn.value.shape_str());
  if (xn.value.dim(0) != map->input_rows)
    fail(Op::kLinearMap, "x rows " + std::to_string(xn.value.dim(0)) + " do not match map input " + std::to_string(map->input_rows));
  Node n;
  n.op = Op::kLinearMap;
  n.src = {x};
  n.requires_grad = xn.requires_grad;
  int64_t M = static_cast<int64_t>(map->rows.size());
  n.value = Tensor({M, 1});
  for (int64_t i = 0; i < M; ++i) {
    double v = 0.0;
    for (const auto& t : map->rows[static_cast<size_t>(i)])
      if (t.src >= 0) v += t.coef * xn.value.data[static_cast<size_t>(t.src)];
    n.value.data[static_cast<size_t>(i)] = v;
  }
  n.attr = attr::Map{std::move(map)};
  return push(std::move(n));
}

NodeId Tape::pwl(NodeId x, std::shared_ptr<const PwlTable> table) {
  const Node& xn = at(x, "pwl");
  if (table->x.size() < 2 || table->x.size() != table->y.size()) fail(Op::kPwl, "table needs >= 2 knots");
  for (size_t i = 1; i < table->x.size(); ++i)
    if (!(table->x[i] > table->x[i - 1])) fail(Op::kPwl, "knots must be strictly ascending");
  Node n;
  n.op = Op::kPwl;
  n.src = {x};
  n.requires_grad = xn.requires_grad;
  n.value = Tensor(xn.value.shape);
  for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] = pwl_eval(*table, xn.value.data[i]).first;
  n.attr = attr::Pwl{std::move(table)};
  return push(std::move(n));
}

NodeId Tape::rows_to_volume(NodeId x, std::shared_ptr<const std::vector<int32_t>> cell_ids, std::array<int64_t, 3> dims) {
  const Node& xn = at(x, "rows_to_volume");
  check_rank(Op::kRowsToVolume, xn.value, 2, "x");
  int64_t N = xn.value.dim(0), C = xn.value.dim(1);
  if (static_cast<int64_t>(cell_ids->size()) != N) fail(Op::kRowsToVolume, "cell id count does not match rows");
  int64_t S = dims[0] * dims[1] * dims[2];
  for (int32_t i : *cell_ids)
    if (i < 0 || i >= S) fail(Op::kRowsToVolume, "cell id " + std::to_string(i) + " out of range");
  Node n;
  n.op = Op::kRowsToVolume;
  n.src = {x};
  n.requires_grad = xn.requires_grad;
  n.value = Tensor({C, dims[2], dims[1], dims[0]});  // (C, nz, ny, nx); x fastest
  for (int64_t r = 0; r < N; ++r) {
    int64_t id = (*cell_ids)[static_cast<size_t>(r)];
    for (int64_t c = 0; c < C; ++c) n.value.data[static_cast<size_t>(c * S + id)] = xn.value.data[static_cast<size_t>(r * C + c)];
  }
  n.attr = attr::Volume{std::move(cell_ids), dims};
  return push(std::move(n));
}

NodeId Tape::volume_to_rows(NodeId x, std::shared_ptr<const std::vector<int32_t>> cell_ids, std::array<int64_t, 3> dims) {
  const Node& xn = at(x, "volume_to_rows");
  check_rank(Op::kVolumeToRows, xn.value, 4, "x");
  int64_t S = dims[0] * dims[1] * dims[2];
  if (xn.value.dim(1) != dims[2] || xn.value.dim(2) != dims[1] || xn.value.dim(3) != dims[0])
    fail(Op::kVolumeToRows, "volume " + xn.value.shape_str() + " does not match dims");
  for (int32_t i : *cell_ids)
    if (i < 0 || i >= S) fail(Op::kVolumeToRows, "cell id " + std::to_string(i) + " out of range");
  int64_t C = xn.value.dim(0);
  Node n;
  n.op = Op::kVolumeToRows;
  n.src = {x};
  n.requires_grad = xn.requires_grad;
  int64_t N = static_cast<int64_t>(cell_ids->size());
  n.value = Tensor({N, C});
  for (int64_t r = 0; r < N; ++r) {
    int64_t id = (*cell_ids)[static_cast<size_t>(r)];
    for (int64_t c = 0; c < C; ++c) n.value.data[static_cast<size_t>(r * C + c)] = xn.value.data[static_cast<size_t>(c * S + id)];
  }
  n.attr = attr::Volume{std::move(cell_ids), dims};
  return push(std::move(n));
}

NodeId Tape::pad3d(NodeId x, std::array<int64_t, 3> lo, std::array<int64_t, 3> hi) {
  const Node& xn = at(x, "pad3d");
  check_rank(Op::kPad3d, xn.value, 4, "x");
  for (int i = 0; i < 3; ++i)
    if (lo[static_cast<size_t>(i)] < 0 || hi[static_cast<size_t>(i)] < 0) fail(Op::kPad3d, "negative pad");
  int64_t C = xn.value.dim(0), D = xn.value.dim(1), H = xn.value.dim(2), W = xn.value.dim(3);
  int64_t D2 = D + lo[0] + hi[0], H2 = H + lo[1] + hi[1], W2 = W + lo[2] + hi[2];
  Node n;
  n.op = Op::kPad3d;
  n.src = {x};
  n.attr = attr::Pad{lo, hi};
  n.requires_grad = xn.requires_grad;
  n.value = Tensor({C, D2, H2, W2});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t z = 0; z < D; ++z)
      for (int64_t yy = 0; yy < H; ++yy)
        std::memcpy(n.value.ptr() + ((c * D2 + z + lo[0]) * H2 + yy + lo[1]) * W2 + lo[2],
                    xn.value.ptr() + ((c * D + z) * H + yy) * W, sizeof(double) * static_cast<size_t>(W));
  return push(std::move(n));
}

NodeId Tape::crop3d(NodeId x, std::array<int64_t, 3> lo, std::array<int64_t, 3> size) {
  const Node& xn = at(x, "crop3d");
  check_rank(Op::kCrop3d, xn.value, 4, "x");
  int64_t C = xn.value.dim(0), D = xn.value.dim(1), H = xn.value.dim(2), W = xn.value.dim(3);
  for (int i = 0; i < 3; ++i)
    if (lo[static_cast<size_t>(i)] < 0 || size[static_cast<size_t>(i)] <= 0) fail(Op::kCrop3d, "bad crop box");
  if (lo[0] + size[0] > D || lo[1] + size[1] > H || lo[2] + size[2] > W)
    fail(Op::kCrop3d, "crop box exceeds input " + xn.value.shape_str());
  Node n;
  n.op = Op::kCrop3d;
  n.src = {x};
  n.attr = attr::Crop{lo, size};
  n.requires_grad = xn.requires_grad;
  n.value = Tensor({C, size[0], size[1], size[2]});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t z = 0; z < size[0]; ++z)
      for (int64_t yy = 0; yy < size[1]; ++yy)
        std::memcpy(n.value.ptr() + ((c * size[0] + z) * size[1] + yy) * size[2],
                    xn.value.ptr() + ((c * D + z + lo[0]) * H + yy + lo[1]) * W + lo[2],
                    sizeof(double) * static_cast<size_t>(size[2]));
  return push(std::move(n));
}

NodeId Tape::mse(NodeId pred, Tensor target, Tensor weight, Tensor mask) {
  const Node& pn = at(pred, "mse");
  if (!pn.value.same_shape(target)) fail(Op::kMse, "target shape " + target.shape_str() + " != prediction " + pn.value.shape_str());
  if (!pn.value.same_shape(weight) || !pn.value.same_shape(mask)) fail(Op::kMse, "weight/mask shape mismatch");
  attr::Mse a;
  a.target = std::move(target);
  a.wm = Tensor(pn.value.shape);
  a.denom = 0.0;
  for (size_t i = 0; i < a.wm.data.size(); ++i) {
    a.wm.data[i] = weight.data[i] * mask.data[i];
    a.denom += a.wm.data[i];
  }
  if (!(a.denom > 0.0)) fail(Op::kMse, "total weight is zero");
  Node n;
  n.op = Op::kMse;
  n.src = {pred};
  n.requires_grad = pn.requires_grad;
  double acc = 0.0;
  for (size_t i = 0; i < a.wm.data.size(); ++i) {
    double d = pn.value.data[i] - a.target.data[i];
    acc += a.wm.data[i] * d * d;
  }
  n.value = Tensor::scalar(acc / a.denom);
  n.attr = std::move(a);
  return push(std::move(n));
}

NodeId Tape::weighted_sum(const std::vector<NodeId>& scalars, std::vector<double> coefs) {
  if (scalars.empty() || scalars.size() != coefs.size()) fail(Op::kWeightedSum, "inputs and coefficients must match");
  Node n;
  n.op = Op::kWeightedSum;
  n.src = scalars;
  double acc = 0.0;
  for (size_t i = 0; i < scalars.size(); ++i) {
    const Node& sn = at(scalars[i], "weighted_sum");
    if (sn.value.numel() != 1) fail(Op::kWeightedSum, "inputs must be scalars");
    acc += coefs[i] * sn.value.data[0];
    n.requires_grad = n.requires_grad || sn.requires_grad;
  }
  n.value = Tensor::scalar(acc);
  n.attr = attr::WeightedSum{std::move(coefs)};
  return push(std::move(n));
}

const Tensor& Tape::grad(NodeId id) const {
  const Node& n = at(id, "grad");
  if (!has_grads_) throw std::logic_error("grad: backward has not been run on this tape");
  if (!n.requires_grad) throw std::logic_error("grad: node does not require gradients");
  return grads_[static_cast<size_t>(id)];
}

void Tape::backward(NodeId loss) {
  const Node& ln = at(loss, "backward");
  if (ln.value.numel() != 1) throw std::logic_error("backward: loss must be a scalar, got shape " + ln.value.shape_str());
  if (!ln.requires_grad) throw std::logic_error("backward: loss does not depend on any differentiable input");

  grads_.assign(nodes_.size(), Tensor{});
  for (size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].requires_grad) grads_[i] = Tensor(nodes_[i].value.shape);
  grads_[static_cast<size_t>(loss)].data[0] = 1.0;
  has_grads_ = true;

  for (int64_t ni = loss; ni >= 0; --ni) {
    const Node& n = nodes_[static_cast<size_t>(ni)];
    if (!n.requires_grad) continue;
    const Tensor& gy = grads_[static_cast<size_t>(ni)];
    auto src_grad = [&](int k) -> Tensor* {
      NodeId s = n.src[static_cast<size_t>(k)];
      return nodes_[static_cast<size_t>(s)].requires_grad ? &grads_[static_cast<size_t>(s)] : nullptr;
    };
    auto src_val = [&](int k) -> const Tensor& { return nodes_[static_cast<size_t>(n.src[static_cast<size_t>(k)])].value; };

    switch (n.op) {
      case Op::kInput:
        break;
      case Op::kLinear: {
        const Tensor& w = src_val(0);
        const Tensor& x = src_val(2);
        int64_t N = x.dim(0), I = x.dim(1), O = w.dim(1);
        if (Tensor* gw = src_grad(0)) {
          for (int64_t r = 0; r < N; ++r) {
            const double* xr = x.ptr() + r * I;
            const double* gr = gy.ptr() + r * O;
            for (int64_t i = 0; i < I; ++i) {
              double xv = xr[i];
              double* gwr = gw->ptr() + i * O;
              for (int64_t o = 0; o < O; ++o) gwr[o] += xv * gr[o];
            }
          }
        }
        if (Tensor* gb = src_grad(1)) {
          for (int64_t r = 0; r < N; ++r) {
            const double* gr = gy.ptr() + r * O;
            for (int64_t o = 0; o < O; ++o) gb->data[static_cast<size_t>(o)] += gr[o];
          }
        }
        if (Tensor* gx = src_grad(2)) {
          for (int64_t r = 0; r < N; ++r) {
            const double* gr = gy.ptr() + r * O;
            double* gxr = gx->ptr() + r * I;
            for (int64_t i = 0; i < I; ++i) {
              const double* wr = w.ptr() + i * O;
              double acc = 0.0;
              for (int64_t o = 0; o < O; ++o) acc += wr[o] * gr[o];
              gxr[i] += acc;
            }
          }
        }
        break;
      }
      case Op::kRelu: {
        if (Tensor* gx = src_grad(0))
          for (size_t i = 0; i < gy.data.size(); ++i)
            if (n.value.data[i] > 0.0) gx->data[i] += gy.data[i];
        break;
      }
      case Op::kElu: {
        if (Tensor* gx = src_grad(0))
          for (size_t i = 0; i < gy.data.size(); ++i)
            gx->data[i] += gy.data[i] * (n.value.data[i] > 0.0 ? 1.0 : n.value.data[i] + 1.0);
        break;
      }
      case Op::kGroupNorm: {
        const auto& a = std::get<attr::GroupNorm>(n.attr);
        const Tensor& x = src_val(0);
        const Tensor& gamma = src_val(1);
        int64_t N = x.dim(0), C = x.dim(1);
        int64_t S = x.numel() / (N * C);
        int64_t G = a.groups, cg = C / G, m = cg * S;
        Tensor* gx = src_grad(0);
        Tensor* gg = src_grad(1);
        Tensor* gb = src_grad(2);
        for (int64_t r = 0; r < N; ++r)
          for (int64_t g = 0; g < G; ++g) {
            double mean = n.auxd[static_cast<size_t>(2 * (r * G + g))];
            double inv = n.auxd[static_cast<size_t>(2 * (r * G + g) + 1)];
            const double* xb = x.ptr() + (r * C + g * cg) * S;
            const double* gyb = gy.ptr() + (r * C + g * cg) * S;
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (int64_t c = 0; c < cg; ++c) {
              double ga = gamma.data[static_cast<size_t>(g * cg + c)];
              for (int64_t s = 0; s < S; ++s) {
                double xh = (xb[c * S + s] - mean) * inv;
                double dxh = gyb[c * S + s] * ga;
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xh;
              }
            }
            if (gx) {
              double* gxb = gx->ptr() + (r * C + g * cg) * S;
              double im = 1.0 / static_cast<double>(m);
              for (int64_t c = 0; c < cg; ++c) {
                double ga = gamma.data[static_cast<size_t>(g * cg + c)];
                for (int64_t s = 0; s < S; ++s) {
                  double xh = (xb[c * S + s] - mean) * inv;
                  double dxh = gyb[c * S + s] * ga;
                  gxb[c * S + s] += inv * (dxh - im * sum_dxh - xh * im * sum_dxh_xh);
                }
              }
            }
            if (gg || gb) {
              for (int64_t c = 0; c < cg; ++c) {
                double acc_g = 0.0, acc_b = 0.0;
                for (int64_t s = 0; s < S; ++s) {
                  double xh = (xb[c * S + s] - mean) * inv;
                  acc_g += gyb[c * S + s] * xh;
                  acc_b += gyb[c * S + s];
                }
                if (gg) gg->data[static_cast<size_t>(g * cg + c)] += acc_g;
                if (gb) gb->data[static_cast<size_t>(g * cg + c)] += acc_b;
              }
            }
          }
        break;
      }
      case Op::kConv3d: {
        const Tensor& x = src_val(0);
        const Tensor& w = src_val(1);
        int64_t C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
        int64_t OC = w.dim(0), K = w.dim(2);
        int64_t vox = D * H * W;
        Tensor* gx = src_grad(0);
        Tensor* gw = src_grad(1);
        Tensor* gb = src_grad(2);
        if (gb) {
          for (int64_t oc = 0; oc < OC; ++oc) {
            const double* gc = gy.ptr() + oc * vox;
            double acc = 0.0;
            for (int64_t i = 0; i < vox; ++i) acc += gc[i];
            gb->data[static_cast<size_t>(oc)] += acc;
          }
        }
        if (K == 1) {
          if (gx) {
            for (int64_t c = 0; c < C; ++c) {
              double* gxc = gx->ptr() + c * vox;
              for (int64_t oc = 0; oc < OC; ++oc) {
                double kv = w.ptr()[oc * C + c];
                const double* gc = gy.ptr() + oc * vox;
                for (int64_t i = 0; i < vox; ++i) gxc[i] += kv * gc[i];
              }
            }
          }
          if (gw) {
            for (int64_t oc = 0; oc < OC; ++oc)
              for (int64_t c = 0; c < C; ++c) {
                const double* gc = gy.ptr() + oc * vox;
                const double* xc = x.ptr() + c * vox;
                double acc = 0.0;
                for (int64_t i = 0; i < vox; ++i) acc += gc[i] * xc[i];
                gw->data[static_cast<size_t>(oc * C + c)] += acc;
              }
          }
        } else {
          // dx[c, p] += sum_{oc, t} w[oc, c, t] * gy[oc, p + t]; same loop
          // structure as forward with source and destination swapped.
          if (gx) {
            for (int64_t c = 0; c < C; ++c) {
              double* gxc = gx->ptr() + c * vox;
              for (int64_t oc = 0; oc < OC; ++oc) {
                const double* gc = gy.ptr() + oc * vox;
                const double* kr = w.ptr() + (oc * C + c) * 27;
                for (int dz = -1; dz <= 1; ++dz)
                  for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                      double kv = kr[((dz + 1) * 3 + dy + 1) * 3 + dx + 1];
                      // output voxel p reads input p+t, so input q feeds outputs q-t
                      int64_t z0 = std::max<int64_t>(0, dz), z1 = std::min<int64_t>(D, D + dz);
                      int64_t y0 = std::max<int64_t>(0, dy), y1 = std::min<int64_t>(H, H + dy);
                      int64_t x0 = std::max<int64_t>(0, dx), x1 = std::min<int64_t>(W, W + dx);
                      for (int64_t z = z0; z < z1; ++z)
                        for (int64_t yy = y0; yy < y1; ++yy) {
                          double* gr = gxc + (z * H + yy) * W;
                          const double* sr = gc + ((z - dz) * H + (yy - dy)) * W - dx;
                          for (int64_t xx = x0; xx < x1; ++xx) gr[xx] += kv * sr[xx];
                        }
                    }
              }
            }
          }
          if (gw) {
            for (int64_t oc = 0; oc < OC; ++oc)
              for (int64_t c = 0; c < C; ++c) {
                const double* gc = gy.ptr() + oc * vox;
                const double* xc = x.ptr() + c * vox;
                double* kr = gw->ptr() + (oc * C + c) * 27;
                for (int dz = -1; dz <= 1; ++dz)
                  for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                      int64_t z0 = std::max<int64_t>(0, -dz), z1 = std::min<int64_t>(D, D - dz);
                      int64_t y0 = std::max<int64_t>(0, -dy), y1 = std::min<int64_t>(H, H - dy);
                      int64_t x0 = std::max<int64_t>(0, -dx), x1 = std::min<int64_t>(W, W - dx);
                      double acc = 0.0;
                      for (int64_t z = z0; z < z1; ++z)
                        for (int64_t yy = y0; yy < y1; ++yy) {
                          const double* gr = gc + (z * H + yy) * W;
                          const double* xr = xc + ((z + dz) * H + (yy + dy)) * W + dx;
                          for (int64_t xx = x0; xx < x1; ++xx) acc += gr[xx] * xr[xx];
                        }
                      kr[((dz + 1) * 3 + dy + 1) * 3 + dx + 1] += acc;
                    }
              }
          }
        }
        break;
      }
      case Op::kMaxPool3d: {
        if (Tensor* gx = src_grad(0))
          for (size_t i = 0; i < gy.data.size(); ++i) gx->data[static_cast<size_t>(n.aux[i])] += gy.data[i];
        break;
      }
      case Op::kUpsample2x: {
        Tensor* gx = src_grad(0);
        if (!gx) break;
        const auto& a = std::get<attr::Upsample>(n.attr);
        const Tensor& x = src_val(0);
        int64_t C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
        UpAxis az = upsample_axis(D, a.mode), ay = upsample_axis(H, a.mode), ax = upsample_axis(W, a.mode);
        for (int64_t c = 0; c < C; ++c) {
          double* gc = gx->ptr() + c * D * H * W;
          const double* gyc = gy.ptr() + c * 8 * D * H * W;
          for (int64_t z = 0; z < 2 * D; ++z)
            for (int64_t yy = 0; yy < 2 * H; ++yy)
              for (int64_t xx = 0; xx < 2 * W; ++xx) {
                double g = gyc[(z * 2 * H + yy) * 2 * W + xx];
                if (g == 0.0) continue;
                double wz1 = az.w1[z], wy1 = ay.w1[yy], wx1 = ax.w1[xx];
                for (int bz = 0; bz < 2; ++bz) {
                  double wz = bz ? wz1 : 1.0 - wz1;
                  if (wz == 0.0) continue;
                  int64_t sz = bz ? az.i1[z] : az.i0[z];
                  for (int by = 0; by < 2; ++by) {
                    double wy = by ? wy1 : 1.0 - wy1;
                    if (wy == 0.0) continue;
                    int64_t sy = by ? ay.i1[yy] : ay.i0[yy];
                    for (int bx = 0; bx < 2; ++bx) {
                      double wx = bx ? wx1 : 1.0 - wx1;
                      if (wx == 0.0) continue;
                      int64_t sx = bx ? ax.i1[xx] : ax.i0[xx];
                      gc[(sz * H + sy) * W + sx] += wz * wy * wx * g;
                    }
                  }
                }
              }
        }
        break;
      }
      case Op::kConcat: {
        const auto& a = std::get<attr::Concat>(n.attr);
        if (a.axis == 0) {
          int64_t off = 0;
          for (size_t k = 0; k < n.src.size(); ++k) {
            const Tensor& v = nodes_[static_cast<size_t>(n.src[k])].value;
            if (Tensor* g = nodes_[static_cast<size_t>(n.src[k])].requires_grad ? &grads_[static_cast<size_t>(n.src[k])] : nullptr)
              for (int64_t i = 0; i < v.numel(); ++i) g->data[static_cast<size_t>(i)] += gy.data[static_cast<size_t>(off + i)];
            off += v.numel();
          }
        } else {
          int64_t total1 = n.value.dim(1);
          int64_t N = n.value.dim(0);
          int64_t off = 0;
          for (size_t k = 0; k < n.src.size(); ++k) {
            const Tensor& v = nodes_[static_cast<size_t>(n.src[k])].value;
            int64_t w = v.dim(1);
            if (Tensor* g = nodes_[static_cast<size_t>(n.src[k])].requires_grad ? &grads_[static_cast<size_t>(n.src[k])] : nullptr)
              for (int64_t r = 0; r < N; ++r)
                for (int64_t j = 0; j < w; ++j) g->ptr()[r * w + j] += gy.ptr()[r * total1 + off + j];
            off += w;
          }
        }
        break;
      }
      case Op::kGatherRows: {
        Tensor* gx = src_grad(0);
        if (!gx) break;
        const auto& a = std::get<attr::Indices>(n.attr);
        int64_t C = n.value.dim(1);
        for (size_t e = 0; e < a.idx->size(); ++e) {
          double* gr = gx->ptr() + static_cast<int64_t>((*a.idx)[e]) * C;
          const double* gyr = gy.ptr() + static_cast<int64_t>(e) * C;
          for (int64_t c = 0; c < C; ++c) gr[c] += gyr[c];
        }
        break;
      }
      case Op::kScatterSum: {
        Tensor* gx = src_grad(0);
        if (!gx) break;
        const auto& a = std::get<attr::Indices>(n.attr);
        int64_t C = n.value.dim(1);
        for (size_t e = 0; e < a.idx->size(); ++e) {
          const double* gyr = gy.ptr() + static_cast<int64_t>((*a.idx)[e]) * C;
          double* gr = gx->ptr() + static_cast<int64_t>(e) * C;
          for (int64_t c = 0; c < C; ++c) gr[c] += gyr[c];
        }
        break;
      }
      case Op::kSelectCols: {
        Tensor* gx = src_grad(0);
        if (!gx) break;
        const auto& a = std::get<attr::Cols>(n.attr);
        int64_t N = n.value.dim(0), k = n.value.dim(1), C = gx->dim(1);
        for (int64_t r = 0; r < N; ++r)
          for (int64_t j = 0; j < k; ++j) gx->ptr()[r * C + a.cols[static_cast<size_t>(j)]] += gy.ptr()[r * k + j];
        break;
      }
      case Op::kAffineCols: {
        Tensor* gx = src_grad(0);
        if (!gx) break;
        const auto& a = std::get<attr::AffineCols>(n.attr);
        int64_t N = n.value.dim(0), C = n.value.dim(1);
        for (int64_t r = 0; r < N; ++r)
          for (int64_t c = 0; c < C; ++c) gx->ptr()[r * C + c] += gy.ptr()[r * C + c] * a.scale[static_cast<size_t>(c)];
        break;
      }
      case Op::kMulConst: {
        if (Tensor* gx = src_grad(0)) {
          const auto& a = std::get<attr::Const>(n.attr);
          for (size_t i = 0; i < gy.data.size(); ++i) gx->data[i] += gy.data[i] * a.c.data[i];
        }
        break;
      }
      case Op::kAddConst: {
        if (Tensor* gx = src_grad(0))
          for (size_t i = 0; i < gy.data.size(); ++i) gx->data[i] += gy.data[i];
        break;
      }
      case Op::kAdd: {
        if (Tensor* ga = src_grad(0))
          for (size_t i = 0; i < gy.data.size(); ++i) ga->data[i] += gy.data[i];
        if (Tensor* gb = src_grad(1))
          for (size_t i = 0; i < gy.data.size(); ++i) gb->data[i] += gy.data[i];
        break;
      }
      case Op::kSub: {
        if (Tensor* ga = src_grad(0))
          for (size_t i = 0; i < gy.data.size(); ++i) ga->data[i] += gy.data[i];
        if (Tensor* gb = src_grad(1))
          for (size_t i = 0; i < gy.data.size(); ++i) gb->data[i] -= gy.data[i];
        break;
      }
      case Op::kLinearMap: {
        Tensor* gx = src_grad(0);
        if (!gx) break;
        const auto& a = std::get<attr::Map>(n.attr);
        for (size_t i = 0; i < a.map->rows.size(); ++i) {
          double g = gy.data[i];
          if (g == 0.0) continue;
          for (const auto& t : a.map->rows[i])
            if (t.src >= 0) gx->data[static_cast<size_t>(t.src)] += t.coef * g;
        }
        break;
      }
      case Op::kPwl: {
        Tensor* gx = src_grad(0);
        if (!gx) break;
        const auto& a = std::get<attr::Pwl>(n.attr);
        const Tensor& x = src_val(0);
        for (size_t i = 0; i < gy.data.size(); ++i) gx->data[i] += gy.data[i] * pwl_eval(*a.table, x.data[i]).second;
        break;
      }
      case Op::kRowsToVolume: {
        Tensor* gx = src_grad(0);
        if (!gx) break;
        const auto& a = std::get<attr::Volume>(n.attr);
        int64_t S = a.dims[0] * a.dims[1] * a.dims[2];
        int64_t C = gx->dim(1);
        for (size_t r = 0; r < a.cell_ids->size(); ++r) {
          int64_t id = (*a.cell_ids)[r];
          for (int64_t c = 0; c < C; ++c) gx->data[r * static_cast<size_t>(C) + static_cast<size_t>(c)] += gy.data[static_cast<size_t>(c * S + id)];
        }
        break;
      }
      case Op::kVolumeToRows: {
        Tensor* gx = src_grad(0);
        if (!gx) break;
        const auto& a = std::get<attr::Volume>(n.attr);
        int64_t S = a.dims[0] * a.dims[1] * a.dims[2];
        int64_t C = n.value.dim(1);
        for (size_t r = 0; r < a.cell_ids->size(); ++r) {
          int64_t id = (*a.cell_ids)[r];
          for (int64_t c = 0; c < C; ++c) gx->data[static_cast<size_t>(c * S + id)] += gy.data[r * static_cast<size_t>(C) + static_cast<size_t>(c)];
        }
        break;
      }
      case Op::kPad3d: {
        Tensor* gx = src_grad(0);
        if (!gx) break;
        const auto& a = std::get<attr::Pad>(n.attr);
        int64_t C = gx->dim(0), D = gx->dim(1), H = gx->dim(2), W = gx->dim(3);
        int64_t D2 = n.value.dim(1), H2 = n.value.dim(2), W2 = n.value.dim(3);
        for (int64_t c = 0; c < C; ++c)
          for (int64_t z = 0; z < D; ++z)
            for (int64_t yy = 0; yy < H; ++yy) {
              double* gr = gx->ptr() + ((c * D + z) * H + yy) * W;
              const double* sr = gy.ptr() + ((c * D2 + z + a.lo[0]) * H2 + yy + a.lo[1]) * W2 + a.lo[2];
              for (int64_t xx = 0; xx < W; ++xx) gr[xx] += sr[xx];
            }
        break;
      }
      case Op::kCrop3d: {
        Tensor* gx = src_grad(0);
        if (!gx) break;
        const auto& a = std::get<attr::Crop>(n.attr);
        int64_t D = gx->dim(1), H = gx->dim(2), W = gx->dim(3);
        int64_t C = gx->dim(0);
        for (int64_t c = 0; c < C; ++c)
          for (int64_t z = 0; z < a.size[0]; ++z)
            for (int64_t yy = 0; yy < a.size[1]; ++yy) {
              double* gr = gx->ptr() + ((c * D + z + a.lo[0]) * H + yy + a.lo[1]) * W + a.lo[2];
              const double* sr = gy.ptr() + ((c * a.size[0] + z) * a.size[1] + yy) * a.size[2];
              for (int64_t xx = 0; xx < a.size[2]; ++xx) gr[xx] += sr[xx];
            }
        break;
      }
      case Op::kMse: {
        Tensor* gp = src_grad(0);
        if (!gp) break;
        const auto& a = std::get<attr::Mse>(n.attr);
        const Tensor& p = src_val(0);
        double g = gy.data[0] * 2.0 / a.denom;
        for (size_t i = 0; i < p.data.size(); ++i) gp->data[i] += g * a.wm.data[i] * (p.data[i] - a.target.data[i]);
        break;
      }
      case Op::kWeightedSum: {
        const auto& a = std::get<attr::WeightedSum>(n.attr);
        for (size_t k = 0; k < n.src.size(); ++k)
          if (nodes_[static_cast<size_t>(n.src[k])].requires_grad)
            grads_[static_cast<size_t>(n.src[k])].data[0] += gy.data[0] * a.coefs[k];
        break;
      }
    }
  }
}

}  // namespace hgns::ad
