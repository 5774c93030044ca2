#include "hgns/model.hpp"

#include <algorithm>
#include <array>
#include <memory>
#include <stdexcept>
#include <utility>

#include "hgns/refsim.hpp"

namespace hgns {

namespace {

constexpr uint64_t kUnetSeedSalt = 0x9e3779b97f4a7c15ULL;

std::shared_ptr<const std::vector<int32_t>> identity_ids(int64_t n) {
  auto ids = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) (*ids)[static_cast<size_t>(i)] = static_cast<int32_t>(i);
  return ids;
}

ad::Tensor column(const std::vector<double>& v) {
  return ad::Tensor({static_cast<int64_t>(v.size()), 1}, v);
}

// Delta scale on active cells, 0 elsewhere: one multiply both denormalizes
// the predicted change and pins inactive cells.
ad::Tensor masked_scale(const Grid& grid, double scale) {
  ad::Tensor t({grid.ncells(), 1});
  for (int64_t c = 0; c < grid.ncells(); ++c) t.data[static_cast<size_t>(c)] = grid.is_active(c) ? scale : 0.0;
  return t;
}

}  // namespace

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kHybrid:
      return "hybrid";
    case ModelKind::kSgnnOnly:
      return "sgnn";
    case ModelKind::kUnetOnly:
      return "unet";
  }
  throw std::invalid_argument("model_kind_name: bad kind");
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "hybrid") return ModelKind::kHybrid;
  if (name == "sgnn") return ModelKind::kSgnnOnly;
  if (name == "unet") return ModelKind::kUnetOnly;
  throw std::invalid_argument("unknown model kind: " + name);
}

void HgnsModel::visit(const std::function<void(const std::string&, ad::Tensor&)>& f) {
  if (kind != ModelKind::kUnetOnly)
    sgnn.visit([&](const std::string& name, ad::Tensor& t) { f("sgnn." + name, t); });
  if (kind != ModelKind::kSgnnOnly)
    unet.visit([&](const std::string& name, ad::Tensor& t) { f("unet." + name, t); });
}

void HgnsModel::visit(const std::function<void(const std::string&, const ad::Tensor&)>& f) const {
  if (kind != ModelKind::kUnetOnly)
    sgnn.visit([&](const std::string& name, const ad::Tensor& t) { f("sgnn." + name, t); });
  if (kind != ModelKind::kSgnnOnly)
    unet.visit([&](const std::string& name, const ad::Tensor& t) { f("unet." + name, t); });
}

HgnsModel init_hgns_model(ModelKind kind, const FeatureSchema& schema, const Normalizer& normalizer, uint64_t seed,
                          bool zero_start) {
  HgnsModel m;
  m.kind = kind;
  m.schema = schema;
  m.normalizer = normalizer;
  const int d = schema.total_width();
  if (kind != ModelKind::kUnetOnly)
    m.sgnn = init_sgnn_params(d, seed, zero_start, kind == ModelKind::kSgnnOnly ? 3 : 2);
  if (kind != ModelKind::kSgnnOnly)
    m.unet = init_unet_params(d, seed ^ kUnetSeedSalt, zero_start, kind == ModelKind::kUnetOnly ? 3 : 1);
  return m;
}

HgnsTapeModel stage_hgns(ad::Tape& tape, const HgnsModel& m, bool requires_grad) {
  if (m.kind != ModelKind::kUnetOnly && m.sgnn.enc_w0.numel() == 0)
    throw std::invalid_argument("stage_hgns: graph network parameters are empty");
  if (m.kind != ModelKind::kSgnnOnly && m.unet.enc0a.w.numel() == 0)
    throw std::invalid_argument("stage_hgns: pressure network parameters are empty");
  HgnsTapeModel tm;
  if (m.kind != ModelKind::kUnetOnly) tm.sgnn = stage_sgnn(tape, m.sgnn, requires_grad);
  if (m.kind != ModelKind::kSgnnOnly) tm.unet = stage_unet(tape, m.unet, requires_grad);
  return tm;
}

StateNodes predict_step_t(ad::Tape& tape, const HgnsModel& m, const HgnsTapeModel& tm, const StateNodes& in,
                          const Grid& grid, const GraphTopology& topo, ad::NodeId edge_features,
                          const StepControls& controls) {
  const int64_t n = grid.ncells();
  ad::NodeId x = build_node_features(tape, in.pressure, in.water, in.oil, grid, controls, m.schema, &m.normalizer);

  ad::NodeId sg = ad::kNoNode;
  if (m.kind != ModelKind::kUnetOnly) sg = sgnn_forward(tape, tm.sgnn, x, edge_features, topo);

  ad::NodeId un = ad::kNoNode;
  if (m.kind != ModelKind::kSgnnOnly) {
    auto ids = identity_ids(n);
    const std::array<int64_t, 3> dims{grid.dims[0], grid.dims[1], grid.dims[2]};
    ad::NodeId vol = tape.rows_to_volume(x, ids, dims);
    const std::array<int64_t, 3> pad{(4 - grid.dims[2] % 4) % 4, (4 - grid.dims[1] % 4) % 4,
                                     (4 - grid.dims[0] % 4) % 4};
    const bool padded = pad[0] + pad[1] + pad[2] != 0;
    if (padded) vol = tape.pad3d(vol, {0, 0, 0}, pad);
    ad::NodeId out = unet_forward(tape, tm.unet, vol);
    if (padded) out = tape.crop3d(out, {0, 0, 0}, {grid.dims[2], grid.dims[1], grid.dims[0]});
    un = tape.volume_to_rows(out, ids, dims);
  }

  ad::NodeId dp = ad::kNoNode, dvw = ad::kNoNode, dvo = ad::kNoNode;
  switch (m.kind) {
    case ModelKind::kHybrid:
      dp = un;
      dvw = tape.select_cols(sg, {0});
      dvo = tape.select_cols(sg, {1});
      break;
    case ModelKind::kSgnnOnly:
      dp = tape.select_cols(sg, {0});
      dvw = tape.select_cols(sg, {1});
      dvo = tape.select_cols(sg, {2});
      break;
    case ModelKind::kUnetOnly:
      dp = tape.select_cols(un, {0});
      dvw = tape.select_cols(un, {1});
      dvo = tape.select_cols(un, {2});
      break;
  }

  const std::array<double, 3>& ds = m.normalizer.delta_std;
  StateNodes next;
  next.pressure = tape.add(in.pressure, tape.mul_const(dp, masked_scale(grid, ds[0])));
  next.water = tape.add(in.water, tape.mul_const(dvw, masked_scale(grid, ds[1])));
  next.oil = tape.add(in.oil, tape.mul_const(dvo, masked_scale(grid, ds[2])));
  return next;
}

namespace {

State plain_step(const HgnsModel& m, const State& state, const Grid& grid, const StepControls& controls,
                 const GraphTopology& topo, const ad::Tensor& efeat) {
  ad::Tape tape;
  HgnsTapeModel tm = stage_hgns(tape, m, false);
  StateNodes in;
  in.pressure = tape.input(column(state.pressure));
  in.water = tape.input(column(state.water_volume));
  in.oil = tape.input(column(state.oil_volume));
  StateNodes out = predict_step_t(tape, m, tm, in, grid, topo, tape.input(efeat), controls);
  State next;
  next.pressure = tape.value(out.pressure).data;
  next.water_volume = tape.value(out.water).data;
  next.oil_volume = tape.value(out.oil).data;
  next.time_index = state.time_index + 1;
  return next;
}

void clamp_volumes_inplace(State& s, const Grid& grid) {
  for (int64_t c = 0; c < grid.ncells(); ++c) {
    if (!grid.is_active(c)) continue;
    const double v = grid.statics.pore_volume[static_cast<size_t>(c)];
    double vw = std::clamp(s.water_volume[static_cast<size_t>(c)], 0.0, v);
    double vo = std::clamp(s.oil_volume[static_cast<size_t>(c)], 0.0, v);
    const double sum = vw + vo;
    if (sum > 0.0) {
      const double f = v / sum;
      vw *= f;
      vo *= f;
    } else {
      vw = 0.0;
      vo = v;
    }
    enforce_closure(v, vw, vo);
    s.water_volume[static_cast<size_t>(c)] = vw;
    s.oil_volume[static_cast<size_t>(c)] = vo;
  }
}

}  // namespace

State predict_step(const HgnsModel& m, const State& state, const Grid& grid, const StepControls& controls) {
  GraphTopology topo = cut_fault_edges(build_cell_graph(grid), grid);
  ad::Tensor efeat({topo.nedges(), 4}, assemble_edge_features(topo, &m.normalizer));
  return plain_step(m, state, grid, controls, topo, efeat);
}

Trajectory hgns_rollout(const HgnsModel& m, const State& initial, const Grid& grid,
                        const std::vector<StepControls>& controls, int steps, bool clamp_volumes) {
  if (steps < 0) throw std::invalid_argument("hgns_rollout: steps must be >= 0");
  if (static_cast<int64_t>(controls.size()) < steps)
    throw std::invalid_argument("hgns_rollout: need one StepControls per step");

  Trajectory traj;
  traj.grid = grid;
  traj.states.reserve(static_cast<size_t>(steps) + 1);
  traj.states.push_back(initial);
  traj.controls.assign(controls.begin(), controls.begin() + steps);

  GraphTopology topo = cut_fault_edges(build_cell_graph(grid), grid);
  ad::Tensor efeat({topo.nedges(), 4}, assemble_edge_features(topo, &m.normalizer));
  for (int k = 0; k < steps; ++k) {
    State next = plain_step(m, traj.states.back(), grid, controls[static_cast<size_t>(k)], topo, efeat);
    if (clamp_volumes) clamp_volumes_inplace(next, grid);
    traj.states.push_back(std::move(next));
  }
  return traj;
}

}  // namespace hgns
