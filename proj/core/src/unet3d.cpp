#include "hgns/unet3d.hpp"

#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgns {
namespace {

constexpr int kGroups = 2;

ad::Tensor conv_init(int64_t oc, int64_t ic, int64_t k, std::mt19937_64& rng) {
  ad::Tensor t({oc, ic, k, k, k});
  double a = 1.0 / std::sqrt(static_cast<double>(ic * k * k * k));
  std::uniform_real_distribution<double> dist(-a, a);
  for (double& v : t.data) v = dist(rng);
  return t;
}

UnetParams::ConvBlock block_init(int64_t oc, int64_t ic, std::mt19937_64& rng) {
  UnetParams::ConvBlock b;
  b.w = conv_init(oc, ic, 3, rng);
  b.b = ad::Tensor({oc});
  b.gamma = ad::Tensor::full({oc}, 1.0);
  b.beta = ad::Tensor({oc});
  return b;
}

template <typename Params, typename Fn>
void visit_impl(Params& p, const Fn& f) {
  auto block = [&](const std::string& pre, auto& b) {
    f(pre + ".w", b.w);
    f(pre + ".b", b.b);
    f(pre + ".gamma", b.gamma);
    f(pre + ".beta", b.beta);
  };
  block("enc0a", p.enc0a);
  block("enc0b", p.enc0b);
  block("enc1a", p.enc1a);
  block("enc1b", p.enc1b);
  block("enc2a", p.enc2a);
  block("enc2b", p.enc2b);
  block("dec0a", p.dec0a);
  block("dec0b", p.dec0b);
  block("dec1a", p.dec1a);
  block("dec1b", p.dec1b);
  f("final.w", p.final_w);
  f("final.b", p.final_b);
}

ad::NodeId stage_block(ad::Tape& tape, const UnetParams::ConvBlock& b, bool rg, UnetTapeParams::ConvBlock& out) {
  out.w = tape.input(b.w, rg);
  out.b = tape.input(b.b, rg);
  out.gamma = tape.input(b.gamma, rg);
  out.beta = tape.input(b.beta, rg);
  return out.w;
}

std::shared_ptr<const std::vector<int32_t>> identity_ids(int64_t n) {
  auto ids = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) (*ids)[static_cast<size_t>(i)] = static_cast<int32_t>(i);
  return ids;
}

}  // namespace

void UnetParams::visit(const std::function<void(const std::string&, ad::Tensor&)>& f) { visit_impl(*this, f); }

void UnetParams::visit(const std::function<void(const std::string&, const ad::Tensor&)>& f) const {
  visit_impl(*this, f);
}

UnetParams init_unet_params(int in_channels, uint64_t seed, bool zero_final, int out_channels) {
  if (in_channels <= 0) throw std::invalid_argument("init_unet_params: input channels must be positive");
  if (out_channels <= 0) throw std::invalid_argument("init_unet_params: output channels must be positive");
  std::mt19937_64 rng(seed);
  UnetParams p;
  p.enc0a = block_init(32, in_channels, rng);
  p.enc0b = block_init(32, 32, rng);
  p.enc1a = block_init(32, 32, rng);
  p.enc1b = block_init(64, 32, rng);
  p.enc2a = block_init(64, 64, rng);
  p.enc2b = block_init(128, 64, rng);
  p.dec0a = block_init(64, 128 + 64, rng);
  p.dec0b = block_init(64, 64, rng);
  p.dec1a = block_init(32, 64 + 32, rng);
  p.dec1b = block_init(32, 32, rng);
  p.final_w = zero_final ? ad::Tensor({out_channels, 32, 1, 1, 1}) : conv_init(out_channels, 32, 1, rng);
  p.final_b = ad::Tensor({out_channels});
  return p;
}

UnetTapeParams stage_unet(ad::Tape& tape, const UnetParams& p, bool requires_grad) {
  UnetTapeParams out;
  stage_block(tape, p.enc0a, requires_grad, out.enc0a);
  stage_block(tape, p.enc0b, requires_grad, out.enc0b);
  stage_block(tape, p.enc1a, requires_grad, out.enc1a);
  stage_block(tape, p.enc1b, requires_grad, out.enc1b);
  stage_block(tape, p.enc2a, requires_grad, out.enc2a);
  stage_block(tape, p.enc2b, requires_grad, out.enc2b);
  stage_block(tape, p.dec0a, requires_grad, out.dec0a);
  stage_block(tape, p.dec0b, requires_grad, out.dec0b);
  stage_block(tape, p.dec1a, requires_grad, out.dec1a);
  stage_block(tape, p.dec1b, requires_grad, out.dec1b);
  out.final_w = tape.input(p.final_w, requires_grad);
  out.final_b = tape.input(p.final_b, requires_grad);
  return out;
}

ad::NodeId unet_conv_block(ad::Tape& tape, const UnetTapeParams::ConvBlock& p, ad::NodeId x) {
  ad::NodeId y = tape.relu(tape.conv3d(x, p.w, p.b));
  const ad::Tensor& v = tape.value(y);
  std::array<int64_t, 3> dims{v.dim(3), v.dim(2), v.dim(1)};  // (nx, ny, nz)
  auto ids = identity_ids(v.dim(1) * v.dim(2) * v.dim(3));
  ad::NodeId rows = tape.volume_to_rows(y, ids, dims);
  return tape.rows_to_volume(tape.group_norm(rows, kGroups, p.gamma, p.beta), ids, dims);
}

ad::NodeId unet_forward(ad::Tape& tape, const UnetTapeParams& p, ad::NodeId x) {
  const ad::Tensor& v = tape.value(x);
  if (v.rank() != 4) throw std::invalid_argument("unet_forward: input must be C x D x H x W, got " + v.shape_str());
  for (int i = 1; i < 4; ++i)
    if (v.dim(i) % 4 != 0)
      throw std::invalid_argument("unet_forward: spatial dims must be divisible by 4, got " + v.shape_str() +
                                  "; pad the volume first (pad3d) and crop the result");

  ad::NodeId e0 = unet_conv_block(tape, p.enc0b, unet_conv_block(tape, p.enc0a, x));
  ad::NodeId e1 = unet_conv_block(tape, p.enc1b, unet_conv_block(tape, p.enc1a, tape.max_pool3d(e0)));
  ad::NodeId e2 = unet_conv_block(tape, p.enc2b, unet_conv_block(tape, p.enc2a, tape.max_pool3d(e1)));
  ad::NodeId d0 = tape.concat({tape.upsample2x(e2), e1}, 0);
  d0 = unet_conv_block(tape, p.dec0b, unet_conv_block(tape, p.dec0a, d0));
  ad::NodeId d1 = tape.concat({tape.upsample2x(d0), e0}, 0);
  d1 = unet_conv_block(tape, p.dec1b, unet_conv_block(tape, p.dec1a, d1));
  return tape.conv3d(d1, p.final_w, p.final_b);
}

int unet_receptive_radius() {
  // Worst-case one-sided reach in input voxels, tracked per layer as
  // (stride s, reach r) with feature centers s voxels apart:
  //   3^3 conv:   r += s
  //   2x maxpool: r += s, s *= 2   (output covers two input positions)
  //   2x up:      r += s, s /= 2   (trilinear taps both flanking sources)
  // Skip concatenations never exceed the deeper branch.
  int64_t s = 1, r = 0;
  auto convs = [&](int n) { r += n * s; };
  convs(2);          // encoder 0
  r += s; s *= 2;    // pool
  convs(2);          // encoder 1
  r += s; s *= 2;    // pool
  convs(2);          // encoder 2
  r += s; s /= 2;    // upsample
  convs(2);          // decoder 0
  r += s; s /= 2;    // upsample
  convs(2);          // decoder 1
  return static_cast<int>(r);
}

}  // namespace hgns
