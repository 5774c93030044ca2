#include "hgns/sgnn.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace hgns {
namespace {

constexpr int64_t kLatent = 16;
constexpr int64_t kHidden = 128;
constexpr int64_t kEdgeFeat = 4;
constexpr int64_t kEdgeIn = 2 * kLatent + kEdgeFeat;   // [v_i, v_i - v_j, e0]
constexpr int64_t kNodeIn = kLatent + kHidden;         // [v_j, aggregated]
constexpr int kGroups = 2;

ad::Tensor uniform_init(int64_t rows, int64_t cols, std::mt19937_64& rng) {
  ad::Tensor t({rows, cols});
  double a = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-a, a);
  for (double& v : t.data) v = dist(rng);
  return t;
}

void init_layer(SgnnParams::GnLayer& l, std::mt19937_64& rng) {
  l.edge_w0 = uniform_init(kEdgeIn, kHidden, rng);
  l.edge_b0 = ad::Tensor({kHidden});
  l.edge_w1 = uniform_init(kHidden, kHidden, rng);
  l.edge_b1 = ad::Tensor({kHidden});
  l.node_w0 = uniform_init(kNodeIn, kHidden, rng);
  l.node_b0 = ad::Tensor({kHidden});
  l.node_w1 = uniform_init(kHidden, kLatent, rng);
  l.node_b1 = ad::Tensor({kLatent});
}

ad::NodeId mlp2(ad::Tape& tape, ad::NodeId w0, ad::NodeId b0, ad::NodeId w1, ad::NodeId b1, ad::NodeId x) {
  return tape.linear(w1, b1, tape.elu(tape.linear(w0, b0, x)));
}

template <typename Params, typename Fn>
void visit_impl(Params& p, const Fn& f) {
  f("enc.w0", p.enc_w0);
  f("enc.b0", p.enc_b0);
  f("enc.w1", p.enc_w1);
  f("enc.b1", p.enc_b1);
  auto layer = [&](const std::string& pre, auto& l) {
    f(pre + ".edge.w0", l.edge_w0);
    f(pre + ".edge.b0", l.edge_b0);
    f(pre + ".edge.w1", l.edge_w1);
    f(pre + ".edge.b1", l.edge_b1);
    f(pre + ".node.w0", l.node_w0);
    f(pre + ".node.b0", l.node_b0);
    f(pre + ".node.w1", l.node_w1);
    f(pre + ".node.b1", l.node_b1);
  };
  layer("gn0", p.layer0);
  layer("gn1", p.layer1);
  f("norm.gamma", p.gn_gamma);
  f("norm.beta", p.gn_beta);
  f("dec.w0", p.dec_w0);
  f("dec.b0", p.dec_b0);
  f("dec.w1", p.dec_w1);
  f("dec.b1", p.dec_b1);
}

}  // namespace

void SgnnParams::visit(const std::function<void(const std::string&, ad::Tensor&)>& f) { visit_impl(*this, f); }

void SgnnParams::visit(const std::function<void(const std::string&, const ad::Tensor&)>& f) const {
  visit_impl(*this, f);
}

SgnnParams init_sgnn_params(int input_width, uint64_t seed, bool zero_final, int out_width) {
  if (input_width <= 0) throw std::invalid_argument("init_sgnn_params: input width must be positive");
  if (out_width <= 0) throw std::invalid_argument("init_sgnn_params: output width must be positive");
  std::mt19937_64 rng(seed);
  SgnnParams p;
  p.enc_w0 = uniform_init(input_width, kHidden, rng);
  p.enc_b0 = ad::Tensor({kHidden});
  p.enc_w1 = uniform_init(kHidden, kLatent, rng);
  p.enc_b1 = ad::Tensor({kLatent});
  init_layer(p.layer0, rng);
  init_layer(p.layer1, rng);
  p.gn_gamma = ad::Tensor({kLatent});
  for (double& v : p.gn_gamma.data) v = 1.0;
  p.gn_beta = ad::Tensor({kLatent});
  p.dec_w0 = uniform_init(kLatent, kHidden, rng);
  p.dec_b0 = ad::Tensor({kHidden});
  p.dec_w1 = zero_final ? ad::Tensor({kHidden, out_width}) : uniform_init(kHidden, out_width, rng);
  p.dec_b1 = ad::Tensor({out_width});
  return p;
}

SgnnTapeParams stage_sgnn(ad::Tape& tape, const SgnnParams& p, bool requires_grad) {
  SgnnTapeParams out;
  ad::NodeId* slots[] = {&out.enc_w0,          &out.enc_b0,          &out.enc_w1,          &out.enc_b1,
                         &out.layer0.edge_w0,  &out.layer0.edge_b0,  &out.layer0.edge_w1,  &out.layer0.edge_b1,
                         &out.layer0.node_w0,  &out.layer0.node_b0,  &out.layer0.node_w1,  &out.layer0.node_b1,
                         &out.layer1.edge_w0,  &out.layer1.edge_b0,  &out.layer1.edge_w1,  &out.layer1.edge_b1,
                         &out.layer1.node_w0,  &out.layer1.node_b0,  &out.layer1.node_w1,  &out.layer1.node_b1,
                         &out.gn_gamma,        &out.gn_beta,         &out.dec_w0,          &out.dec_b0,
                         &out.dec_w1,          &out.dec_b1};
  size_t i = 0;
  p.visit([&](const std::string&, const ad::Tensor& t) { *slots[i++] = tape.input(t, requires_grad); });
  return out;
}

ad::NodeId sgnn_encode(ad::Tape& tape, const SgnnTapeParams& p, ad::NodeId node_features) {
  return mlp2(tape, p.enc_w0, p.enc_b0, p.enc_w1, p.enc_b1, node_features);
}

ad::NodeId sgnn_gn_layer(ad::Tape& tape, const SgnnTapeParams::GnLayer& p, ad::NodeId v, ad::NodeId e0,
                         const GraphTopology& topo) {
  int64_t n = tape.value(v).shape[0];
  if (tape.value(e0).shape[0] != topo.nedges())
    throw std::invalid_argument("sgnn_gn_layer: edge feature rows " + std::to_string(tape.value(e0).shape[0]) +
                                " != topology edges " + std::to_string(topo.nedges()));
  for (int32_t c : topo.src)
    if (c < 0 || c >= n) throw std::invalid_argument("sgnn_gn_layer: edge endpoint " + std::to_string(c) + " out of range");
  for (int32_t c : topo.dst)
    if (c < 0 || c >= n) throw std::invalid_argument("sgnn_gn_layer: edge endpoint " + std::to_string(c) + " out of range");
  auto src = std::make_shared<const std::vector<int32_t>>(topo.src);
  auto dst = std::make_shared<const std::vector<int32_t>>(topo.dst);
  ad::NodeId vi = tape.gather_rows(v, src);
  ad::NodeId vj = tape.gather_rows(v, dst);
  ad::NodeId msg_in = tape.concat({vi, tape.sub(vi, vj), e0}, 1);
  ad::NodeId msg = mlp2(tape, p.edge_w0, p.edge_b0, p.edge_w1, p.edge_b1, msg_in);
  ad::NodeId agg = tape.scatter_sum(msg, dst, n);
  return mlp2(tape, p.node_w0, p.node_b0, p.node_w1, p.node_b1, tape.concat({v, agg}, 1));
}

ad::NodeId sgnn_forward(ad::Tape& tape, const SgnnTapeParams& p, ad::NodeId node_features, ad::NodeId edge_features,
                        const GraphTopology& topo) {
  ad::NodeId v = tape.elu(sgnn_encode(tape, p, node_features));
  v = sgnn_gn_layer(tape, p.layer0, v, edge_features, topo);
  v = tape.group_norm(v, kGroups, p.gn_gamma, p.gn_beta);
  v = sgnn_gn_layer(tape, p.layer1, v, edge_features, topo);
  return mlp2(tape, p.dec_w0, p.dec_b0, p.dec_w1, p.dec_b1, v);
}

}  // namespace hgns
