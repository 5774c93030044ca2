#include "hgns/trajectory.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hgns {

namespace {

// All supported hosts are little-endian; refuse to run elsewhere rather than
// silently writing a byte-swapped format.
static_assert(std::endian::native == std::endian::little, "trajectory format requires a little-endian host");

json relperm_json(const RelPermTable& t) { return json{{"s", t.s}, {"kr", t.kr}}; }

RelPermTable relperm_from(const json& j) {
  RelPermTable t;
  t.s = j.at("s").get<std::vector<double>>();
  t.kr = j.at("kr").get<std::vector<double>>();
  return t;
}

}  // namespace

void write_f32(const std::string& path, const std::vector<double>& values) {
  std::vector<float> buf(values.size());
  for (size_t i = 0; i < values.size(); ++i) buf[i] = static_cast<float>(values[i]);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("trajectory: cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw std::runtime_error("trajectory: short write to " + path);
}

std::vector<double> read_f32(const std::string& path, int64_t expected) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw std::runtime_error("trajectory: missing payload file " + path);
  auto bytes = static_cast<int64_t>(is.tellg());
  if (bytes != expected * 4)
    throw std::runtime_error("trajectory: truncated payload in " + path + ": expected " + std::to_string(expected) +
                             " floats, got " + std::to_string(bytes / 4));
  std::vector<float> buf(static_cast<size_t>(expected));
  is.seekg(0);
  is.read(reinterpret_cast<char*>(buf.data()), bytes);
  if (!is) throw std::runtime_error("trajectory: read failure on " + path);
  std::vector<double> out(buf.size());
  for (size_t i = 0; i < buf.size(); ++i) out[i] = static_cast<double>(buf[i]);
  return out;
}

void write_trajectory(const Trajectory& traj, const std::string& dir) {
  const Grid& g = traj.grid;
  fs::create_directories(dir);
  auto path = [&](const std::string& name) { return (fs::path(dir) / name).string(); };

  json wells = json::array();
  for (const Well& w : g.wells) {
    json jw{{"kind", w.kind == Well::kInjector ? "injector" : "producer"},
            {"name", w.name},
            {"perforations", w.perforations}};
    if (w.kind == Well::kInjector) {
      jw["water_rate"] = w.water_rate;
    } else {
      jw["bhp"] = w.bhp;
      jw["wi_multiplier"] = w.wi_multiplier;
    }
    wells.push_back(jw);
  }
  json faults = json::array();
  for (const FaultPlane& f : g.faults) faults.push_back(json{{"axis", f.axis}, {"faces", f.faces}});

  json manifest{
      {"format", "hgns-trajectory"},
      {"version", 1},
      {"dims", {g.dims[0], g.dims[1], g.dims[2]}},
      {"cell_size", {g.cell_size[0], g.cell_size[1], g.cell_size[2]}},
      {"units", {{"pressure", "psi"}, {"volume", "bbl"}, {"permeability", "md"}, {"time", "month"}}},
      {"steps", traj.states.size()},
      {"t0", traj.states.empty() ? int64_t{0} : traj.states.front().time_index},
      {"controls", traj.controls.size()},
      {"static_fields",
       {"active", "depth", "porosity", "pore_volume", "connate_water_volume", "perm_x", "perm_y", "perm_z", "trans_x",
        "trans_y", "trans_z"}},
      {"state_fields", {"pressure", "water_volume", "oil_volume"}},
      {"control_fields", {"water_injection_rate"}},
      {"fluid",
       {{"mu_w", g.statics.fluid.mu_w},
        {"mu_o", g.statics.fluid.mu_o},
        {"rho_w", g.statics.fluid.rho_w},
        {"rho_o", g.statics.fluid.rho_o},
        {"relperm_w", relperm_json(g.statics.fluid.relperm_w)},
        {"relperm_o", relperm_json(g.statics.fluid.relperm_o)}}},
      {"wells", wells},
      {"faults", faults},
  };
  std::ofstream ms(path("manifest.json"), std::ios::trunc);
  if (!ms) throw std::runtime_error("trajectory: cannot open " + path("manifest.json") + " for writing");
  ms << manifest.dump(2) << '\n';

  std::vector<double> act(g.active.begin(), g.active.end());
  write_f32(path("static_active.f32"), act);
  write_f32(path("static_depth.f32"), g.statics.depth);
  write_f32(path("static_porosity.f32"), g.statics.porosity);
  write_f32(path("static_pore_volume.f32"), g.statics.pore_volume);
  write_f32(path("static_connate_water_volume.f32"), g.statics.connate_water_volume);
  write_f32(path("static_perm_x.f32"), g.statics.perm_x);
  write_f32(path("static_perm_y.f32"), g.statics.perm_y);
  write_f32(path("static_perm_z.f32"), g.statics.perm_z);
  write_f32(path("static_trans_x.f32"), g.statics.trans_x);
  write_f32(path("static_trans_y.f32"), g.statics.trans_y);
  write_f32(path("static_trans_z.f32"), g.statics.trans_z);

  for (size_t t = 0; t < traj.states.size(); ++t) {
    const State& s = traj.states[t];
    std::string st = std::to_string(t);
    write_f32(path("state_" + st + "_pressure.f32"), s.pressure);
    write_f32(path("state_" + st + "_water_volume.f32"), s.water_volume);
    write_f32(path("state_" + st + "_oil_volume.f32"), s.oil_volume);
  }
  for (size_t t = 0; t < traj.controls.size(); ++t)
    write_f32(path("control_" + std::to_string(t) + "_water_injection_rate.f32"), traj.controls[t].water_injection_rate);
}

Trajectory read_trajectory(const std::string& dir) {
  auto path = [&](const std::string& name) { return (fs::path(dir) / name).string(); };
  std::ifstream ms(path("manifest.json"));
  if (!ms) throw std::runtime_error("trajectory: missing manifest at " + path("manifest.json"));
  json manifest;
  try {
    ms >> manifest;
  } catch (const json::exception& e) {
    throw std::runtime_error("trajectory: cannot parse manifest at " + path("manifest.json") + ": " + e.what());
  }

  Trajectory traj;
  Grid& g = traj.grid;
  try {
    auto dims = manifest.at("dims");
    g.dims = {dims.at(0).get<int64_t>(), dims.at(1).get<int64_t>(), dims.at(2).get<int64_t>()};
    auto cs = manifest.at("cell_size");
    g.cell_size = {cs.at(0).get<double>(), cs.at(1).get<double>(), cs.at(2).get<double>()};
    g.statics.fluid.mu_w = manifest.at("fluid").at("mu_w").get<double>();
    g.statics.fluid.mu_o = manifest.at("fluid").at("mu_o").get<double>();
    g.statics.fluid.rho_w = manifest.at("fluid").at("rho_w").get<double>();
    g.statics.fluid.rho_o = manifest.at("fluid").at("rho_o").get<double>();
    g.statics.fluid.relperm_w = relperm_from(manifest.at("fluid").at("relperm_w"));
    g.statics.fluid.relperm_o = relperm_from(manifest.at("fluid").at("relperm_o"));
    for (const json& jw : manifest.at("wells")) {
      Well w;
      w.kind = jw.at("kind").get<std::string>() == "injector" ? Well::kInjector : Well::kProducer;
      w.name = jw.value("name", "");
      w.perforations = jw.at("perforations").get<std::vector<int32_t>>();
      if (w.kind == Well::kInjector) {
        w.water_rate = jw.at("water_rate").get<double>();
      } else {
        w.bhp = jw.at("bhp").get<double>();
        w.wi_multiplier = jw.value("wi_multiplier", 1.0);
      }
      g.wells.push_back(std::move(w));
    }
    for (const json& jf : manifest.at("faults")) {
      FaultPlane f;
      f.axis = jf.at("axis").get<int>();
      f.faces = jf.at("faces").get<std::vector<int32_t>>();
      g.faults.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("trajectory: malformed manifest at " + path("manifest.json") + ": " + e.what());
  }
  if (g.dims[0] < 1 || g.dims[1] < 1 || g.dims[2] < 1)
    throw std::runtime_error("trajectory: malformed manifest: dims must be >= 1");

  int64_t n = g.ncells();
  std::vector<double> act = read_f32(path("static_active.f32"), n);
  g.active.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) g.active[static_cast<size_t>(i)] = act[static_cast<size_t>(i)] != 0.0 ? 1 : 0;
  g.statics.depth = read_f32(path("static_depth.f32"), n);
  g.statics.porosity = read_f32(path("static_porosity.f32"), n);
  g.statics.pore_volume = read_f32(path("static_pore_volume.f32"), n);
  g.statics.connate_water_volume = read_f32(path("static_connate_water_volume.f32"), n);
  g.statics.perm_x = read_f32(path("static_perm_x.f32"), n);
  g.statics.perm_y = read_f32(path("static_perm_y.f32"), n);
  g.statics.perm_z = read_f32(path("static_perm_z.f32"), n);
  g.statics.trans_x = read_f32(path("static_trans_x.f32"), n);
  g.statics.trans_y = read_f32(path("static_trans_y.f32"), n);
  g.statics.trans_z = read_f32(path("static_trans_z.f32"), n);

  int64_t steps = manifest.at("steps").get<int64_t>();
  int64_t t0 = manifest.value("t0", int64_t{0});
  int64_t ncontrols = manifest.at("controls").get<int64_t>();
  for (int64_t t = 0; t < steps; ++t) {
    State s;
    std::string st = std::to_string(t);
    s.pressure = read_f32(path("state_" + st + "_pressure.f32"), n);
    s.water_volume = read_f32(path("state_" + st + "_water_volume.f32"), n);
    s.oil_volume = read_f32(path("state_" + st + "_oil_volume.f32"), n);
    s.time_index = t0 + t;
    traj.states.push_back(std::move(s));
  }
  for (int64_t t = 0; t < ncontrols; ++t) {
    StepControls c;
    c.water_injection_rate = read_f32(path("control_" + std::to_string(t) + "_water_injection_rate.f32"), n);
    traj.controls.push_back(std::move(c));
  }
  return traj;
}

}  // namespace hgns
