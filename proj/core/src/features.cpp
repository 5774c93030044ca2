#include "hgns/features.hpp"

#include <cmath>
#include <stdexcept>

#include "nlohmann/json.hpp"

namespace hgns {

namespace {

constexpr double kStdFloor = 1e-6;

uint64_t fnv1a(uint64_t h, const void* data, size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

int64_t axis_stride(const Grid& g, int axis) { return axis == 0 ? 1 : (axis == 1 ? g.dims[0] : g.dims[0] * g.dims[1]); }

const std::vector<double>& trans_of(const Grid& g, int axis) {
  return axis == 0 ? g.statics.trans_x : axis == 1 ? g.statics.trans_y : g.statics.trans_z;
}

std::shared_ptr<const ad::PwlTable> to_pwl(const RelPermTable& t) {
  auto p = std::make_shared<ad::PwlTable>();
  p->x = t.s;
  p->y = t.kr;
  return p;
}

// v = sum(coef * x[src]) in term order; the kLinearMap kernel does the same,
// which keeps the plain and tape assemblies bit-identical.
void apply_map(const ad::LinearMap& map, const double* x, double* y) {
  for (size_t i = 0; i < map.rows.size(); ++i) {
    double v = 0.0;
    for (const auto& t : map.rows[i])
      if (t.src >= 0) v += t.coef * x[t.src];
    y[i] = v;
  }
}

// 0 = normal, 1 = injector, 2 = producer; producer wins on a shared cell.
std::vector<int8_t> node_types(const Grid& g) {
  std::vector<int8_t> type(static_cast<size_t>(g.ncells()), 0);
  for (const Well& w : g.wells)
    if (w.kind == Well::kInjector)
      for (int32_t p : w.perforations) type[static_cast<size_t>(p)] = 1;
  for (const Well& w : g.wells)
    if (w.kind == Well::kProducer)
      for (int32_t p : w.perforations) type[static_cast<size_t>(p)] = 2;
  return type;
}

std::vector<double> inv_pore_volume(const Grid& g) {
  size_t n = static_cast<size_t>(g.ncells());
  std::vector<double> inv(n, 0.0);
  for (size_t c = 0; c < n; ++c) {
    double v = g.statics.pore_volume[c];
    if (v > 0.0) inv[c] = 1.0 / v;
  }
  return inv;
}

// cell-level T per axis: mean of the two adjacent faces (absent face = 0)
double cell_trans(const Grid& g, int64_t c, int axis) {
  const std::vector<double>& t = trans_of(g, axis);
  double hi = t[static_cast<size_t>(c)];
  double lo = g.cell_xyz(c)[static_cast<size_t>(axis)] > 0 ? t[static_cast<size_t>(c - axis_stride(g, axis))] : 0.0;
  return 0.5 * (lo + hi);
}

void check_inputs(const State& state, const Grid& grid, const StepControls& controls, const FeatureSchema& schema) {
  size_t n = static_cast<size_t>(grid.ncells());
  if (state.pressure.size() != n || state.water_volume.size() != n || state.oil_volume.size() != n)
    throw std::invalid_argument("assemble_node_features: state size does not match grid");
  if (controls.water_injection_rate.size() != n)
    throw std::invalid_argument("assemble_node_features: controls size does not match grid");
  if (schema.total_width() <= 0) throw std::invalid_argument("assemble_node_features: empty schema");
}

std::pair<std::vector<double>, std::vector<double>> norm_scale_shift(const Normalizer& n) {
  std::vector<double> scale(n.mean.size()), shift(n.mean.size());
  for (size_t j = 0; j < n.mean.size(); ++j) {
    scale[j] = 1.0 / n.stdev[j];
    shift[j] = -n.mean[j] * scale[j];
  }
  return {std::move(scale), std::move(shift)};
}

}  // namespace

int FeatureSchema::total_width() const {
  int w = 0;
  for (const FeatureField& f : fields) w += f.width;
  return w;
}

int FeatureSchema::offset_of(const std::string& name) const {
  int off = 0;
  for (const FeatureField& f : fields) {
    if (f.name == name) return off;
    off += f.width;
  }
  return -1;
}

uint64_t FeatureSchema::hash() const {
  uint64_t h = 1469598103934665603ULL;
  for (const FeatureField& f : fields) {
    h = fnv1a(h, f.name.data(), f.name.size());
    unsigned char meta[3] = {static_cast<unsigned char>(f.width), static_cast<unsigned char>(f.group),
                             static_cast<unsigned char>(f.normalize)};
    h = fnv1a(h, meta, sizeof meta);
  }
  return h;
}

FeatureSchema FeatureSchema::node_default() {
  using G = FeatureGroup;
  FeatureSchema s;
  s.fields = {
      {"pressure", 1, G::kDynamic, true},
      {"water_volume", 1, G::kDynamic, true},
      {"oil_volume", 1, G::kDynamic, true},
      {"depth", 1, G::kStatic, true},
      {"porosity", 1, G::kStatic, true},
      {"pore_volume", 1, G::kStatic, true},
      {"connate_water_volume", 1, G::kStatic, true},
      {"perm_x", 1, G::kStatic, true},
      {"perm_y", 1, G::kStatic, true},
      {"perm_z", 1, G::kStatic, true},
      {"trans_x", 1, G::kStatic, true},
      {"trans_y", 1, G::kStatic, true},
      {"trans_z", 1, G::kStatic, true},
      {"node_type", 3, G::kStatic, false},
      {"boundary", 3, G::kStatic, false},
      {"relperm_w", 1, G::kComputed, true},
      {"relperm_o", 1, G::kComputed, true},
      {"grad_pressure", 3, G::kComputed, true},
      {"grad_water", 3, G::kComputed, true},
      {"grad_oil", 3, G::kComputed, true},
      {"injection_rate", 1, G::kControl, true},
      {"injector_pressure", 1, G::kControl, true},
  };
  return s;
}

std::string normalizer_to_json(const Normalizer& n) {
  nlohmann::json j;
  j["format"] = "hgns-normalizer";
  j["version"] = 1;
  j["mean"] = n.mean;
  j["std"] = n.stdev;
  j["edge_t_mean"] = n.edge_t_mean;
  j["edge_t_std"] = n.edge_t_std;
  j["delta_std"] = n.delta_std;
  return j.dump(2);
}

namespace {

const char* group_name(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::kDynamic:
      return "dynamic";
    case FeatureGroup::kStatic:
      return "static";
    case FeatureGroup::kComputed:
      return "computed";
    case FeatureGroup::kControl:
      return "control";
  }
  throw std::invalid_argument("schema: bad feature group");
}

FeatureGroup group_from_name(const std::string& s) {
  if (s == "dynamic") return FeatureGroup::kDynamic;
  if (s == "static") return FeatureGroup::kStatic;
  if (s == "computed") return FeatureGroup::kComputed;
  if (s == "control") return FeatureGroup::kControl;
  throw std::runtime_error("schema_from_json: unknown feature group \"" + s + "\"");
}

}  // namespace

std::string schema_to_json(const FeatureSchema& s) {
  nlohmann::json fields = nlohmann::json::array();
  for (const FeatureField& f : s.fields)
    fields.push_back({{"name", f.name}, {"width", f.width}, {"group", group_name(f.group)}, {"normalize", f.normalize}});
  nlohmann::json j;
  j["format"] = "hgns-feature-schema";
  j["version"] = 1;
  j["fields"] = fields;
  return j.dump(2);
}

FeatureSchema schema_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    throw std::runtime_error("schema_from_json: cannot parse");
  }
  if (!j.is_object() || j.value("format", "") != "hgns-feature-schema")
    throw std::runtime_error("schema_from_json: malformed document");
  FeatureSchema s;
  try {
    for (const nlohmann::json& jf : j.at("fields")) {
      FeatureField f;
      f.name = jf.at("name").get<std::string>();
      f.width = jf.at("width").get<int>();
      f.group = group_from_name(jf.at("group").get<std::string>());
      f.normalize = jf.at("normalize").get<bool>();
      if (f.width <= 0) throw std::runtime_error("schema_from_json: field \"" + f.name + "\" has non-positive width");
      s.fields.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception&) {
    throw std::runtime_error("schema_from_json: malformed document");
  }
  return s;
}

Normalizer normalizer_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    throw std::runtime_error("normalizer_from_json: cannot parse");
  }
  if (!j.is_object() || j.value("format", "") != "hgns-normalizer")
    throw std::runtime_error("normalizer_from_json: malformed document");
  Normalizer n;
  try {
    n.mean = j.at("mean").get<std::vector<double>>();
    n.stdev = j.at("std").get<std::vector<double>>();
    n.edge_t_mean = j.at("edge_t_mean").get<double>();
    n.edge_t_std = j.at("edge_t_std").get<double>();
    auto d = j.at("delta_std").get<std::vector<double>>();
    if (d.size() != 3) throw std::runtime_error("normalizer_from_json: delta_std must have 3 entries");
    for (int k = 0; k < 3; ++k) n.delta_std[static_cast<size_t>(k)] = d[static_cast<size_t>(k)];
  } catch (const nlohmann::json::exception&) {
    throw std::runtime_error("normalizer_from_json: malformed document");
  }
  if (n.mean.size() != n.stdev.size()) throw std::runtime_error("normalizer_from_json: mean/std length mismatch");
  return n;
}

void normalize_features(const Normalizer& n, std::vector<double>& features) {
  size_t d = n.mean.size();
  if (d == 0 || features.size() % d != 0) throw std::invalid_argument("normalize_features: size is not a multiple of width");
  auto [scale, shift] = norm_scale_shift(n);
  size_t rows = features.size() / d;
  for (size_t r = 0; r < rows; ++r)
    for (size_t j = 0; j < d; ++j) features[r * d + j] = features[r * d + j] * scale[j] + shift[j];
}

void denormalize_features(const Normalizer& n, std::vector<double>& features) {
  size_t d = n.mean.size();
  if (d == 0 || features.size() % d != 0) throw std::invalid_argument("denormalize_features: size is not a multiple of width");
  size_t rows = features.size() / d;
  for (size_t r = 0; r < rows; ++r)
    for (size_t j = 0; j < d; ++j) features[r * d + j] = features[r * d + j] * n.stdev[j] + n.mean[j];
}

std::shared_ptr<const ad::LinearMap> gradient_stencil(const Grid& grid, int axis) {
  int64_t n = grid.ncells();
  int64_t s = axis_stride(grid, axis);
  double d = grid.cell_size[static_cast<size_t>(axis)];
  auto map = std::make_shared<ad::LinearMap>();
  map->input_rows = n;
  map->rows.assign(static_cast<size_t>(n), {});
  for (int64_t c = 0; c < n; ++c) {
    if (!grid.is_active(c)) continue;
    auto xyz = grid.cell_xyz(c);
    int64_t dim = grid.dims[static_cast<size_t>(axis)];
    bool lo = xyz[static_cast<size_t>(axis)] > 0 && grid.is_active(c - s);
    bool hi = xyz[static_cast<size_t>(axis)] < dim - 1 && grid.is_active(c + s);
    auto& row = map->rows[static_cast<size_t>(c)];
    if (lo && hi) {
      double coef = 1.0 / (2.0 * d);
      row[0] = {static_cast<int32_t>(c + s), coef};
      row[1] = {static_cast<int32_t>(c - s), -coef};
    } else if (hi) {
      double coef = 1.0 / d;
      row[0] = {static_cast<int32_t>(c + s), coef};
      row[1] = {static_cast<int32_t>(c), -coef};
    } else if (lo) {
      double coef = 1.0 / d;
      row[0] = {static_cast<int32_t>(c), coef};
      row[1] = {static_cast<int32_t>(c - s), -coef};
    }
  }
  return map;
}

std::vector<double> spatial_gradient(const std::vector<double>& field, const Grid& grid, int axis) {
  if (static_cast<int64_t>(field.size()) != grid.ncells())
    throw std::invalid_argument("spatial_gradient: field size does not match grid");
  std::vector<double> out(field.size());
  apply_map(*gradient_stencil(grid, axis), field.data(), out.data());
  return out;
}

std::vector<double> assemble_node_features(const State& state, const Grid& grid, const StepControls& controls,
                                           const FeatureSchema& schema, const Normalizer* normalizer) {
  check_inputs(state, grid, controls, schema);
  int64_t n = grid.ncells();
  int d = schema.total_width();
  std::vector<double> out(static_cast<size_t>(n) * static_cast<size_t>(d), 0.0);

  std::vector<int8_t> types = node_types(grid);
  std::vector<double> invv = inv_pore_volume(grid);
  std::vector<double> bnd = boundary_encoding(grid);
  auto tw = to_pwl(grid.statics.fluid.relperm_w);
  auto to = to_pwl(grid.statics.fluid.relperm_o);

  int off = 0;
  for (const FeatureField& f : schema.fields) {
    auto col = [&](int64_t c, int k) -> double& { return out[static_cast<size_t>(c * d + off + k)]; };
    if (f.name == "pressure") {
      for (int64_t c = 0; c < n; ++c) col(c, 0) = state.pressure[static_cast<size_t>(c)];
    } else if (f.name == "water_volume") {
      for (int64_t c = 0; c < n; ++c) col(c, 0) = state.water_volume[static_cast<size_t>(c)];
    } else if (f.name == "oil_volume") {
      for (int64_t c = 0; c < n; ++c) col(c, 0) = state.oil_volume[static_cast<size_t>(c)];
    } else if (f.name == "depth") {
      for (int64_t c = 0; c < n; ++c) col(c, 0) = grid.statics.depth[static_cast<size_t>(c)];
    } else if (f.name == "porosity") {
      for (int64_t c = 0; c < n; ++c) col(c, 0) = grid.statics.porosity[static_cast<size_t>(c)];
    } else if (f.name == "pore_volume") {
      for (int64_t c = 0; c < n; ++c) col(c, 0) = grid.statics.pore_volume[static_cast<size_t>(c)];
    } else if (f.name == "connate_water_volume") {
      for (int64_t c = 0; c < n; ++c) col(c, 0) = grid.statics.connate_water_volume[static_cast<size_t>(c)];
    } else if (f.name == "perm_x" || f.name == "perm_y" || f.name == "perm_z") {
      int axis = f.name.back() - 'x';
      const std::vector<double>& k = axis == 0 ? grid.statics.perm_x : axis == 1 ? grid.statics.perm_y : grid.statics.perm_z;
      for (int64_t c = 0; c < n; ++c) col(c, 0) = k[static_cast<size_t>(c)];
    } else if (f.name == "trans_x" || f.name == "trans_y" || f.name == "trans_z") {
      int axis = f.name.back() - 'x';
      for (int64_t c = 0; c < n; ++c) col(c, 0) = cell_trans(grid, c, axis);
    } else if (f.name == "node_type") {
      for (int64_t c = 0; c < n; ++c) col(c, types[static_cast<size_t>(c)]) = 1.0;
    } else if (f.name == "boundary") {
      for (int64_t c = 0; c < n; ++c)
        for (int k = 0; k < 3; ++k) col(c, k) = bnd[static_cast<size_t>(c * 3 + k)];
    } else if (f.name == "relperm_w") {
      for (int64_t c = 0; c < n; ++c)
        col(c, 0) = ad::pwl_eval(*tw, state.water_volume[static_cast<size_t>(c)] * invv[static_cast<size_t>(c)]).first;
    } else if (f.name == "relperm_o") {
      for (int64_t c = 0; c < n; ++c)
        col(c, 0) = ad::pwl_eval(*to, state.oil_volume[static_cast<size_t>(c)] * invv[static_cast<size_t>(c)]).first;
    } else if (f.name == "grad_pressure" || f.name == "grad_water" || f.name == "grad_oil") {
      const std::vector<double>& field = f.name == "grad_pressure" ? state.pressure
                                         : f.name == "grad_water"  ? state.water_volume
                                                                   : state.oil_volume;
      for (int axis = 0; axis < 3; ++axis) {
        std::vector<double> g(static_cast<size_t>(n));
        apply_map(*gradient_stencil(grid, axis), field.data(), g.data());
        for (int64_t c = 0; c < n; ++c) col(c, axis) = g[static_cast<size_t>(c)];
      }
    } else if (f.name == "injection_rate") {
      for (int64_t c = 0; c < n; ++c) col(c, 0) = controls.water_injection_rate[static_cast<size_t>(c)];
    } else if (f.name == "injector_pressure") {
      for (int64_t c = 0; c < n; ++c)
        if (types[static_cast<size_t>(c)] == 1) col(c, 0) = state.pressure[static_cast<size_t>(c)];
    } else {
      throw std::invalid_argument("assemble_node_features: unknown feature field '" + f.name + "'");
    }
    off += f.width;
  }

  if (normalizer) {
    if (static_cast<int>(normalizer->mean.size()) != d)
      throw std::invalid_argument("assemble_node_features: normalizer width does not match schema");
    normalize_features(*normalizer, out);
  }
  return out;
}

std::vector<double> assemble_edge_features(const GraphTopology& topo, const Normalizer* normalizer) {
  double scale = 1.0, shift = 0.0;
  if (normalizer) {
    scale = 1.0 / normalizer->edge_t_std;
    shift = -normalizer->edge_t_mean * scale;
  }
  std::vector<double> out(static_cast<size_t>(topo.nedges()) * 4, 0.0);
  for (int64_t e = 0; e < topo.nedges(); ++e) {
    out[static_cast<size_t>(e * 4)] = topo.trans[static_cast<size_t>(e)] * scale + shift;
    out[static_cast<size_t>(e * 4 + 1 + topo.dir[static_cast<size_t>(e)])] = 1.0;
  }
  return out;
}

ad::NodeId build_node_features(ad::Tape& tape, ad::NodeId pressure, ad::NodeId water, ad::NodeId oil,
                               const Grid& grid, const StepControls& controls, const FeatureSchema& schema,
                               const Normalizer* normalizer) {
  int64_t n = grid.ncells();
  if (static_cast<int64_t>(controls.water_injection_rate.size()) != n)
    throw std::invalid_argument("build_node_features: controls size does not match grid");
  int d = schema.total_width();
  if (normalizer && static_cast<int>(normalizer->mean.size()) != d)
    throw std::invalid_argument("build_node_features: normalizer width does not match schema");

  std::vector<int8_t> types = node_types(grid);
  std::vector<double> invv = inv_pore_volume(grid);

  auto constant = [&](std::function<double(int64_t, int)> fill, int width) {
    ad::Tensor t({n, width});
    for (int64_t c = 0; c < n; ++c)
      for (int k = 0; k < width; ++k) t.ptr()[c * width + k] = fill(c, k);
    return tape.input(std::move(t), false);
  };
  auto diag_map = [&](std::function<double(int64_t)> coef) {
    auto map = std::make_shared<ad::LinearMap>();
    map->input_rows = n;
    map->rows.assign(static_cast<size_t>(n), {});
    for (int64_t c = 0; c < n; ++c) {
      double v = coef(c);
      if (v != 0.0) map->rows[static_cast<size_t>(c)][0] = {static_cast<int32_t>(c), v};
    }
    return map;
  };

  std::vector<double> bnd;
  std::vector<ad::NodeId> parts;
  parts.reserve(schema.fields.size());
  for (const FeatureField& f : schema.fields) {
    if (f.name == "pressure") {
      parts.push_back(pressure);
    } else if (f.name == "water_volume") {
      parts.push_back(water);
    } else if (f.name == "oil_volume") {
      parts.push_back(oil);
    } else if (f.name == "depth") {
      parts.push_back(constant([&](int64_t c, int) { return grid.statics.depth[static_cast<size_t>(c)]; }, 1));
    } else if (f.name == "porosity") {
      parts.push_back(constant([&](int64_t c, int) { return grid.statics.porosity[static_cast<size_t>(c)]; }, 1));
    } else if (f.name == "pore_volume") {
      parts.push_back(constant([&](int64_t c, int) { return grid.statics.pore_volume[static_cast<size_t>(c)]; }, 1));
    } else if (f.name == "connate_water_volume") {
      parts.push_back(constant([&](int64_t c, int) { return grid.statics.connate_water_volume[static_cast<size_t>(c)]; }, 1));
    } else if (f.name == "perm_x" || f.name == "perm_y" || f.name == "perm_z") {
      int axis = f.name.back() - 'x';
      const std::vector<double>& k = axis == 0 ? grid.statics.perm_x : axis == 1 ? grid.statics.perm_y : grid.statics.perm_z;
      parts.push_back(constant([&](int64_t c, int) { return k[static_cast<size_t>(c)]; }, 1));
    } else if (f.name == "trans_x" || f.name == "trans_y" || f.name == "trans_z") {
      int axis = f.name.back() - 'x';
      parts.push_back(constant([&](int64_t c, int) { return cell_trans(grid, c, axis); }, 1));
    } else if (f.name == "node_type") {
      parts.push_back(constant([&](int64_t c, int k) { return types[static_cast<size_t>(c)] == k ? 1.0 : 0.0; }, 3));
    } else if (f.name == "boundary") {
      if (bnd.empty()) bnd = boundary_encoding(grid);
      parts.push_back(constant([&](int64_t c, int k) { return bnd[static_cast<size_t>(c * 3 + k)]; }, 3));
    } else if (f.name == "relperm_w" || f.name == "relperm_o") {
      bool isw = f.name == "relperm_w";
      ad::NodeId sat = tape.linear_map(isw ? water : oil, diag_map([&](int64_t c) { return invv[static_cast<size_t>(c)]; }));
      parts.push_back(tape.pwl(sat, to_pwl(isw ? grid.statics.fluid.relperm_w : grid.statics.fluid.relperm_o)));
    } else if (f.name == "grad_pressure" || f.name == "grad_water" || f.name == "grad_oil") {
      ad::NodeId field = f.name == "grad_pressure" ? pressure : f.name == "grad_water" ? water : oil;
      std::vector<ad::NodeId> axes;
      for (int axis = 0; axis < 3; ++axis) axes.push_back(tape.linear_map(field, gradient_stencil(grid, axis)));
      parts.push_back(tape.concat(axes, 1));
    } else if (f.name == "injection_rate") {
      parts.push_back(constant([&](int64_t c, int) { return controls.water_injection_rate[static_cast<size_t>(c)]; }, 1));
    } else if (f.name == "injector_pressure") {
      parts.push_back(tape.linear_map(pressure, diag_map([&](int64_t c) { return types[static_cast<size_t>(c)] == 1 ? 1.0 : 0.0; })));
    } else {
      throw std::invalid_argument("build_node_features: unknown feature field '" + f.name + "'");
    }
  }

  ad::NodeId x = tape.concat(parts, 1);
  if (normalizer) {
    auto [scale, shift] = norm_scale_shift(*normalizer);
    x = tape.affine_cols(x, std::move(scale), std::move(shift));
  }
  return x;
}

Normalizer fit_normalizer(const std::vector<Trajectory>& dataset, const FeatureSchema& schema) {
  int d = schema.total_width();
  std::vector<double> sum(static_cast<size_t>(d), 0.0), sumsq(static_cast<size_t>(d), 0.0);
  std::array<double, 3> dsumsq{0.0, 0.0, 0.0};
  double edge_sum = 0.0, edge_sumsq = 0.0;
  int64_t rows = 0, drows = 0, edges = 0;

  for (const Trajectory& traj : dataset) {
    const Grid& g = traj.grid;
    GraphTopology topo = cut_fault_edges(build_cell_graph(g), g);
    for (int64_t e = 0; e < topo.nedges(); ++e) {
      double t = topo.trans[static_cast<size_t>(e)];
      edge_sum += t;
      edge_sumsq += t * t;
      ++edges;
    }
    size_t steps = traj.controls.size();
    for (size_t t = 0; t < steps && t + 1 < traj.states.size(); ++t) {
      std::vector<double> feats = assemble_node_features(traj.states[t], g, traj.controls[t], schema, nullptr);
      for (int64_t c = 0; c < g.ncells(); ++c) {
        if (!g.is_active(c)) continue;
        const double* row = feats.data() + c * d;
        for (int j = 0; j < d; ++j) {
          sum[static_cast<size_t>(j)] += row[j];
          sumsq[static_cast<size_t>(j)] += row[j] * row[j];
        }
        ++rows;
        const State& a = traj.states[t];
        const State& b = traj.states[t + 1];
        size_t i = static_cast<size_t>(c);
        double dp = b.pressure[i] - a.pressure[i];
        double dw = b.water_volume[i] - a.water_volume[i];
        double do_ = b.oil_volume[i] - a.oil_volume[i];
        dsumsq[0] += dp * dp;
        dsumsq[1] += dw * dw;
        dsumsq[2] += do_ * do_;
        ++drows;
      }
    }
  }
  if (rows == 0) throw std::invalid_argument("fit_normalizer: empty dataset");

  Normalizer n;
  n.mean.assign(static_cast<size_t>(d), 0.0);
  n.stdev.assign(static_cast<size_t>(d), 1.0);
  int off = 0;
  for (const FeatureField& f : schema.fields) {
    for (int k = 0; k < f.width; ++k) {
      size_t j = static_cast<size_t>(off + k);
      if (f.normalize) {
        double mean = sum[j] / static_cast<double>(rows);
        double var = sumsq[j] / static_cast<double>(rows) - mean * mean;
        n.mean[j] = mean;
        n.stdev[j] = std::max(kStdFloor, std::sqrt(std::max(0.0, var)));
      }
    }
    off += f.width;
  }
  if (edges > 0) {
    double mean = edge_sum / static_cast<double>(edges);
    double var = edge_sumsq / static_cast<double>(edges) - mean * mean;
    n.edge_t_mean = mean;
    n.edge_t_std = std::max(kStdFloor, std::sqrt(std::max(0.0, var)));
  }
  // deltas are scaled about zero (never centered): a zero model output must
  // decode to exactly "no change"
  for (int k = 0; k < 3; ++k)
    n.delta_std[static_cast<size_t>(k)] =
        drows > 0 ? std::max(kStdFloor, std::sqrt(dsumsq[static_cast<size_t>(k)] / static_cast<double>(drows))) : 1.0;
  return n;
}

}  // namespace hgns
