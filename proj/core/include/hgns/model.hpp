#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hgns/features.hpp"
#include "hgns/grid.hpp"
#include "hgns/sgnn.hpp"
#include "hgns/tape.hpp"
#include "hgns/trajectory.hpp"
#include "hgns/unet3d.hpp"

namespace hgns {

// kHybrid: graph net predicts (dV_w, dV_o), conv net predicts dP.
// kSgnnOnly: graph net predicts all three. kUnetOnly: conv net predicts all
// three. The single-net variants exist for ablation runs.
enum class ModelKind : uint8_t { kHybrid, kSgnnOnly, kUnetOnly };

const char* model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

// One-step residual surrogate: X^{t+1} = X^t + denormalized predicted change.
// Both sub-networks consume the same assembled feature matrix.
struct HgnsModel {
  ModelKind kind = ModelKind::kHybrid;
  FeatureSchema schema;
  Normalizer normalizer;
  SgnnParams sgnn;  // empty when kind == kUnetOnly
  UnetParams unet;  // empty when kind == kSgnnOnly

  // Learnable tensors of the active sub-networks, prefixed "sgnn."/"unet.".
  void visit(const std::function<void(const std::string&, ad::Tensor&)>& f);
  void visit(const std::function<void(const std::string&, const ad::Tensor&)>& f) const;
};

// Networks sized from the schema; prediction heads start at zero unless
// zero_start is false, so a fresh model is exactly the no-change predictor.
HgnsModel init_hgns_model(ModelKind kind, const FeatureSchema& schema, const Normalizer& normalizer, uint64_t seed,
                          bool zero_start = true);

struct HgnsTapeModel {
  SgnnTapeParams sgnn;
  UnetTapeParams unet;
};

HgnsTapeModel stage_hgns(ad::Tape& tape, const HgnsModel& m, bool requires_grad);

// Per-cell (ncells x 1) column nodes for one state.
struct StateNodes {
  ad::NodeId pressure = ad::kNoNode, water = ad::kNoNode, oil = ad::kNoNode;
};

// Differentiable one-step prediction: recompute features from the input
// state nodes, run the sub-networks, denormalize the predicted deltas by the
// delta scales, zero them on inactive cells, and add to the inputs. Volumes
// for the conv net are zero-padded up to dims divisible by 4 and cropped
// back. edge_features is the staged E x 4 matrix for `topo` (reused across
// steps of a rollout).
StateNodes predict_step_t(ad::Tape& tape, const HgnsModel& m, const HgnsTapeModel& tm, const StateNodes& in,
                          const Grid& grid, const GraphTopology& topo, ad::NodeId edge_features,
                          const StepControls& controls);

// Plain one-step prediction; runs predict_step_t on a private tape so both
// paths are the same arithmetic. time_index advances by one.
State predict_step(const HgnsModel& m, const State& state, const Grid& grid, const StepControls& controls);

// Autoregressive rollout: steps+1 states, features recomputed from each
// predicted state; controls[k] applies to step k (size >= steps). When
// clamp_volumes is set, predicted volumes are clamped to [0, V] and
// renormalized to close V_w + V_o = V after each step (off by default; the
// plain model is evaluated unclamped).
Trajectory hgns_rollout(const HgnsModel& m, const State& initial, const Grid& grid,
                        const std::vector<StepControls>& controls, int steps, bool clamp_volumes = false);

}  // namespace hgns
