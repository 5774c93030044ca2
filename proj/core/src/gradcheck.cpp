#include "hgns/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace hgns::ad {

GradCheckReport grad_check(const std::function<NodeId(Tape&, const std::vector<NodeId>&)>& build,
                           const std::vector<Tensor>& params, double eps, int64_t max_coords_per_tensor,
                           uint64_t seed) {
  // Analytic gradients from one backward pass.
  Tape tape;
  std::vector<NodeId> ids;
  ids.reserve(params.size());
  for (const Tensor& p : params) ids.push_back(tape.input(p, true));
  NodeId loss = build(tape, ids);
  tape.backward(loss);

  auto eval = [&](const std::vector<Tensor>& ps) {
    Tape t;
    std::vector<NodeId> in;
    in.reserve(ps.size());
    for (const Tensor& p : ps) in.push_back(t.input(p, false));
    // gradients are disabled, but the loss may still be built on frozen inputs
    NodeId l = build(t, in);
    return t.value(l).data[0];
  };

  GradCheckReport rep;
  std::vector<Tensor> work = params;
  std::mt19937_64 rng(seed);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    const Tensor& an = tape.grad(ids[pi]);
    int64_t n = params[pi].numel();
    std::vector<int64_t> coords(static_cast<size_t>(n));
    std::iota(coords.begin(), coords.end(), int64_t{0});
    if (max_coords_per_tensor > 0 && n > max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<size_t>(max_coords_per_tensor));
      std::sort(coords.begin(), coords.end());
    }
    for (int64_t ci : coords) {
      double orig = work[pi].data[static_cast<size_t>(ci)];
      work[pi].data[static_cast<size_t>(ci)] = orig + eps;
      double fp = eval(work);
      work[pi].data[static_cast<size_t>(ci)] = orig - eps;
      double fm = eval(work);
      work[pi].data[static_cast<size_t>(ci)] = orig;
      double fd = (fp - fm) / (2.0 * eps);
      double av = an.data[static_cast<size_t>(ci)];
      double rel = std::abs(av - fd) / std::max({std::abs(av), std::abs(fd), 1e-3});
      ++rep.coords_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_analytic = av;
        rep.worst_numeric = fd;
        rep.worst_coord = "param " + std::to_string(pi) + " @ " + std::to_string(ci);
      }
    }
  }
  return rep;
}

}  // namespace hgns::ad
