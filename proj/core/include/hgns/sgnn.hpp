#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "hgns/grid.hpp"
#include "hgns/tape.hpp"

namespace hgns {

// Graph network head predicting per-cell (dV_w, dV_o) in normalized units.
// Fixed sizes: latent 16, hidden 128, edge feature 4, output 2, two
// message-passing layers with a GroupNorm(2, 16) between them and no
// residual connections.
struct SgnnParams {
  struct GnLayer {
    ad::Tensor edge_w0, edge_b0, edge_w1, edge_b1;  // 36->128->128
    ad::Tensor node_w0, node_b0, node_w1, node_b1;  // 144->128->16
  };
  ad::Tensor enc_w0, enc_b0, enc_w1, enc_b1;  // d->128->16
  GnLayer layer0, layer1;
  ad::Tensor gn_gamma, gn_beta;               // affine of the mid GroupNorm
  ad::Tensor dec_w0, dec_b0, dec_w1, dec_b1;  // 16->128->2

  // Fixed enumeration order; names are stable checkpoint keys.
  void visit(const std::function<void(const std::string&, ad::Tensor&)>& f);
  void visit(const std::function<void(const std::string&, const ad::Tensor&)>& f) const;
};

// Uniform(-1/sqrt(fan_in), +) weights, zero biases, unit GroupNorm affine.
// The decoder's last layer starts at zero so an untrained model predicts
// exactly no change. out_width is 2 (dV_w, dV_o) for the hybrid model and 3
// (dP, dV_w, dV_o) for the graph-only variant.
SgnnParams init_sgnn_params(int input_width, uint64_t seed, bool zero_final = true, int out_width = 2);

// Mirror of SgnnParams staged onto a tape (inputs in visit order).
struct SgnnTapeParams {
  struct GnLayer {
    ad::NodeId edge_w0, edge_b0, edge_w1, edge_b1;
    ad::NodeId node_w0, node_b0, node_w1, node_b1;
  };
  ad::NodeId enc_w0, enc_b0, enc_w1, enc_b1;
  GnLayer layer0, layer1;
  ad::NodeId gn_gamma, gn_beta;
  ad::NodeId dec_w0, dec_b0, dec_w1, dec_b1;
};

SgnnTapeParams stage_sgnn(ad::Tape& tape, const SgnnParams& p, bool requires_grad);

// Row-wise encoder MLP: N x d -> N x 16.
ad::NodeId sgnn_encode(ad::Tape& tape, const SgnnTapeParams& p, ad::NodeId node_features);

// One message-passing layer: e_ij = MLP([v_i, v_i - v_j, e0_ij]), messages
// summed onto their destination, v'_j = MLP([v_j, sum]). Nodes with no
// incoming edge aggregate a zero vector.
ad::NodeId sgnn_gn_layer(ad::Tape& tape, const SgnnTapeParams::GnLayer& p, ad::NodeId v, ad::NodeId e0,
                         const GraphTopology& topo);

// encode -> ELU -> layer0 -> GroupNorm(2,16) -> layer1 -> decoder. N x 2 out.
ad::NodeId sgnn_forward(ad::Tape& tape, const SgnnTapeParams& p, ad::NodeId node_features, ad::NodeId edge_features,
                        const GraphTopology& topo);

}  // namespace hgns
