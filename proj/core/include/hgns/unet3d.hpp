#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "hgns/tape.hpp"

namespace hgns {

// Volumetric encoder-decoder predicting the per-cell pressure change in
// normalized units. Three encoder levels (channels in->32->32, 32->32->64,
// 64->64->128) with 2x max pooling between them, two decoder levels with
// trilinear 2x upsampling and skip concatenation (192->64->64, 96->32->32),
// and a final 1x1x1 conv to one channel.
struct UnetParams {
  struct ConvBlock {
    ad::Tensor w, b, gamma, beta;
  };
  ConvBlock enc0a, enc0b, enc1a, enc1b, enc2a, enc2b;
  ConvBlock dec0a, dec0b, dec1a, dec1b;
  ad::Tensor final_w, final_b;

  void visit(const std::function<void(const std::string&, ad::Tensor&)>& f);
  void visit(const std::function<void(const std::string&, const ad::Tensor&)>& f) const;
};

// Uniform(-1/sqrt(fan_in), +) kernels, zero biases, unit group-norm affine.
// The final conv starts at zero so an untrained model predicts no change.
// out_channels is 1 (dP) for the hybrid model and 3 (dP, dV_w, dV_o) for the
// conv-only variant.
UnetParams init_unet_params(int in_channels, uint64_t seed, bool zero_final = true, int out_channels = 1);

struct UnetTapeParams {
  struct ConvBlock {
    ad::NodeId w, b, gamma, beta;
  };
  ConvBlock enc0a, enc0b, enc1a, enc1b, enc2a, enc2b;
  ConvBlock dec0a, dec0b, dec1a, dec1b;
  ad::NodeId final_w, final_b;
};

UnetTapeParams stage_unet(ad::Tape& tape, const UnetParams& p, bool requires_grad);

// conv3d (same padding) -> ReLU -> GroupNorm(2, out_channels). The norm is
// per voxel over the channel groups, with no spatial statistics, so a block
// never widens the receptive field beyond the conv kernel and the network
// keeps a hard locality radius.
ad::NodeId unet_conv_block(ad::Tape& tape, const UnetTapeParams::ConvBlock& p, ad::NodeId x);

// x: C x D x H x W with D, H, W each divisible by 4 -> 1 x D x H x W.
ad::NodeId unet_forward(ad::Tape& tape, const UnetTapeParams& p, ad::NodeId x);

// Upper bound on the Chebyshev input->output influence radius, in voxels,
// computed from the layer plan. Perturbing an input voxel farther than this
// from an output voxel leaves that output bit-identical.
int unet_receptive_radius();

}  // namespace hgns
