#include "magloc/io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace magloc {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

[[noreturn]] void schema_fail(const std::string& ctx, const std::string& what) {
  throw SchemaError(ctx + ": " + what);
}

const json& require(const json& j, const char* key, const std::string& ctx) {
  const auto it = j.find(key);
  if (it == j.end()) schema_fail(ctx, std::string("missing field '") + key + "'");
  return *it;
}

double as_number(const json& j, const std::string& ctx) {
  if (!j.is_number()) schema_fail(ctx, "expected a number");
  return j.get<double>();
}

Vec3 as_vec3(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 3) schema_fail(ctx, "expected [x, y, z]");
  return Vec3(as_number(j[0], ctx), as_number(j[1], ctx), as_number(j[2], ctx));
}

Mat3 as_mat3(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 3) schema_fail(ctx, "expected a 3x3 array");
  Mat3 m;
  for (int i = 0; i < 3; ++i) {
    const json& row = j[i];
    if (!row.is_array() || row.size() != 3) schema_fail(ctx, "expected a 3x3 array");
    for (int k = 0; k < 3; ++k) m(i, k) = as_number(row[k], ctx);
  }
  return m;
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json mat3_to_json(const Mat3& m) {
  json rows = json::array();
  for (int i = 0; i < 3; ++i) {
    rows.push_back(json::array({m(i, 0), m(i, 1), m(i, 2)}));
  }
  return rows;
}

Rect as_rect(const json& j, const std::string& ctx) {
  Rect r;
  r.x0 = as_number(require(j, "x0", ctx), ctx + ".x0");
  r.y0 = as_number(require(j, "y0", ctx), ctx + ".y0");
  r.x1 = as_number(require(j, "x1", ctx), ctx + ".x1");
  r.y1 = as_number(require(j, "y1", ctx), ctx + ".y1");
  return r;
}

json rect_to_json(const Rect& r) {
  return json{{"x0", r.x0}, {"y0", r.y0}, {"x1", r.x1}, {"y1", r.y1}};
}

void parse_chain(const json& j, SignalChain& chain, const std::string& ctx) {
  if (auto it = j.find("filter"); it != j.end()) {
    const json& f = *it;
    if (f.contains("center_freq"))
      chain.filter.center_freq = as_number(f["center_freq"], ctx + ".filter");
    if (f.contains("passband_gain"))
      chain.filter.passband_gain = as_number(f["passband_gain"], ctx + ".filter");
    if (f.contains("rolloff"))
      chain.filter.rolloff = as_number(f["rolloff"], ctx + ".filter");
    if (f.contains("order")) chain.filter.order = f["order"].get<int>();
  }
  if (auto it = j.find("logamp"); it != j.end()) {
    const json& f = *it;
    if (f.contains("slope")) chain.logamp.slope = as_number(f["slope"], ctx + ".logamp");
    if (f.contains("intercept_ref"))
      chain.logamp.intercept_ref = as_number(f["intercept_ref"], ctx + ".logamp");
    if (f.contains("output_clip"))
      chain.logamp.output_clip = as_number(f["output_clip"], ctx + ".logamp");
  }
  if (auto it = j.find("noise"); it != j.end()) {
    const json& f = *it;
    if (f.contains("rms")) chain.noise.rms = as_number(f["rms"], ctx + ".noise");
    if (f.contains("seed")) chain.noise.seed = f["seed"].get<std::uint64_t>();
  }
  if (auto it = j.find("adc"); it != j.end()) {
    const json& f = *it;
    if (f.contains("bits")) chain.adc.bits = f["bits"].get<int>();
    if (f.contains("full_scale"))
      chain.adc.full_scale = as_number(f["full_scale"], ctx + ".adc");
  }
}

json chain_to_json(const SignalChain& c) {
  return json{
      {"filter",
       {{"center_freq", c.filter.center_freq},
        {"passband_gain", c.filter.passband_gain},
        {"rolloff", c.filter.rolloff},
        {"order", c.filter.order}}},
      {"logamp",
       {{"slope", c.logamp.slope},
        {"intercept_ref", c.logamp.intercept_ref},
        {"output_clip", c.logamp.output_clip}}},
      {"noise", {{"rms", c.noise.rms}, {"seed", c.noise.seed}}},
      {"adc", {{"bits", c.adc.bits}, {"full_scale", c.adc.full_scale}}}};
}

AxisCalibration axis_from_json(const json& j, const std::string& ctx) {
  AxisCalibration cal;
  cal.scale = as_number(require(j, "scale", ctx), ctx);
  cal.exponent = as_number(require(j, "exponent", ctx), ctx);
  cal.slope_sign = require(j, "slope_sign", ctx).get<int>();
  cal.tx_index = require(j, "tx_index", ctx).get<int>();
  cal.axis_index = require(j, "axis_index", ctx).get<int>();
  cal.residual_rms = as_number(require(j, "residual_rms", ctx), ctx);
  return cal;
}

json axis_to_json(const AxisCalibration& cal) {
  return json{{"scale", cal.scale},
              {"exponent", cal.exponent},
              {"slope_sign", cal.slope_sign},
              {"tx_index", cal.tx_index},
              {"axis_index", cal.axis_index},
              {"residual_rms", cal.residual_rms}};
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vector_from_json(const json& j, const std::string& ctx) {
  if (!j.is_array()) schema_fail(ctx, "expected an array of numbers");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = as_number(j[i], ctx);
  return v;
}

std::string hash_hex(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json parse_json_text(const std::string& text, const std::string& ctx) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    schema_fail(ctx, e.what());
  }
}

}  // namespace

ScenarioFile load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();

  ScenarioFile out;
  out.raw_text = buffer.str();
  const json j = parse_json_text(out.raw_text, "scenario " + path);
  const std::string ctx = "scenario " + path;

  Scenario& sc = out.scenario;
  sc.id = require(j, "id", ctx).get<std::string>();
  if (j.contains("seed")) sc.seed = j["seed"].get<std::uint64_t>();
  sc.bounds = as_rect(require(j, "bounds", ctx), ctx + ".bounds");

  const json& grid = require(j, "grid", ctx);
  sc.grid_rect = grid.contains("rect") ? as_rect(grid["rect"], ctx + ".grid.rect")
                                       : sc.bounds;
  sc.grid_spacing = as_number(require(grid, "spacing", ctx + ".grid"), ctx + ".grid");
  sc.grid_height = as_number(require(grid, "height", ctx + ".grid"), ctx + ".grid");

  if (j.contains("excitation_freq"))
    sc.env.excitation_freq = as_number(j["excitation_freq"], ctx);
  if (j.contains("receiver")) {
    const json& r = j["receiver"];
    if (r.contains("turns")) sc.env.receiver.turns = r["turns"].get<int>();
    if (r.contains("area")) sc.env.receiver.area = as_number(r["area"], ctx);
    if (r.contains("axes")) sc.env.receiver.axes = as_mat3(r["axes"], ctx + ".receiver");
  }
  if (j.contains("chain")) parse_chain(j["chain"], sc.env.chain, ctx + ".chain");

  const json& txs = require(j, "transmitters", ctx);
  if (!txs.is_array() || txs.empty())
    schema_fail(ctx, "'transmitters' must be a non-empty array");
  for (std::size_t t = 0; t < txs.size(); ++t) {
    const std::string tctx = ctx + ".transmitters[" + std::to_string(t) + "]";
    const json& tj = txs[t];
    Transmitter tx;
    tx.pose.origin = as_vec3(require(tj, "origin", tctx), tctx + ".origin");
    if (tj.contains("axes")) tx.pose.axes = as_mat3(tj["axes"], tctx + ".axes");
    if (tj.contains("coil")) {
      const json& c = tj["coil"];
      CoilSpec spec;
      if (c.contains("turns")) spec.turns = c["turns"].get<int>();
      if (c.contains("radius")) spec.radius = as_number(c["radius"], tctx + ".coil");
      if (c.contains("current")) spec.current = as_number(c["current"], tctx + ".coil");
      for (auto& coil : tx.pose.coils) coil = spec;
    }
    if (tj.contains("crosstalk"))
      tx.crosstalk.mix = as_mat3(tj["crosstalk"], tctx + ".crosstalk");
    sc.env.transmitters.push_back(tx);
  }

  if (j.contains("distorters")) {
    const json& ds = j["distorters"];
    if (!ds.is_array()) schema_fail(ctx, "'distorters' must be an array");
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const std::string dctx = ctx + ".distorters[" + std::to_string(i) + "]";
      const json& dj = ds[i];
      Distorter d;
      d.position = as_vec3(require(dj, "position", dctx), dctx + ".position");
      if (dj.contains("polarizability")) {
        d.polarizability = as_mat3(dj["polarizability"], dctx + ".polarizability");
      } else if (dj.contains("alpha")) {
        d.polarizability = as_number(dj["alpha"], dctx) * Mat3::Identity();
      } else {
        schema_fail(dctx, "needs 'polarizability' or 'alpha'");
      }
      sc.env.distorters.push_back(d);
    }
  }

  if (j.contains("solve")) {
    const json& s = j["solve"];
    if (s.contains("fixed_z")) sc.fixed_z = as_number(s["fixed_z"], ctx + ".solve");
  }

  if (j.contains("run")) {
    const json& r = j["run"];
    RunOverrides& ov = out.run;
    if (r.contains("seed")) ov.seed = r["seed"].get<std::uint64_t>();
    if (r.contains("method")) ov.method = r["method"].get<std::string>();
    if (r.contains("train_frac")) ov.train_frac = as_number(r["train_frac"], ctx + ".run");
    if (r.contains("recal_frac")) ov.recal_frac = as_number(r["recal_frac"], ctx + ".run");
    if (r.contains("lambda")) ov.lambda = as_number(r["lambda"], ctx + ".run");
    if (r.contains("workers")) ov.workers = r["workers"].get<int>();
    if (r.contains("kind")) ov.kind = r["kind"].get<std::string>();
  }

  sc.env.validate();
  return out;
}

std::string scenario_to_json(const Scenario& sc) {
  json j;
  j["id"] = sc.id;
  j["seed"] = sc.seed;
  j["bounds"] = rect_to_json(sc.bounds);
  j["grid"] = {{"rect", rect_to_json(sc.grid_rect)},
               {"spacing", sc.grid_spacing},
               {"height", sc.grid_height}};
  j["excitation_freq"] = sc.env.excitation_freq;
  j["receiver"] = {{"turns", sc.env.receiver.turns}, {"area", sc.env.receiver.area}};
  j["chain"] = chain_to_json(sc.env.chain);
  json txs = json::array();
  for (const auto& tx : sc.env.transmitters) {
    json tj;
    tj["origin"] = vec3_to_json(tx.pose.origin);
    tj["axes"] = mat3_to_json(tx.pose.axes);
    tj["coil"] = {{"turns", tx.pose.coils[0].turns},
                  {"radius", tx.pose.coils[0].radius},
                  {"current", tx.pose.coils[0].current}};
    tj["crosstalk"] = mat3_to_json(tx.crosstalk.mix);
    txs.push_back(tj);
  }
  j["transmitters"] = txs;
  json ds = json::array();
  for (const auto& d : sc.env.distorters) {
    ds.push_back({{"position", vec3_to_json(d.position)},
                  {"polarizability", mat3_to_json(d.polarizability)}});
  }
  j["distorters"] = ds;
  if (sc.fixed_z) j["solve"] = {{"fixed_z", *sc.fixed_z}};
  return j.dump(2) + "\n";
}

void save_dataset(const Dataset& dataset, const std::string& path,
                  std::uint64_t config_hash) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  const json header = {{"config_hash", hash_hex(config_hash)},
                       {"count", dataset.cycles.size()},
                       {"scenario_id", dataset.scenario_id},
                       {"seed", dataset.seed}};
  out << header.dump() << "\n";
  for (const auto& cycle : dataset.cycles) {
    json cj;
    cj["slot"] = cycle.slot_index;
    if (cycle.true_position) cj["true_position"] = vec3_to_json(*cycle.true_position);
    json slots = json::array();
    for (const auto& slot : cycle.transmitters) {
      json sj;
      sj["magnitudes"] = mat3_to_json(slot.magnitudes);
      json signs = json::array();
      for (int i = 0; i < 3; ++i) {
        signs.push_back(json::array({slot.signs[i][0], slot.signs[i][1], slot.signs[i][2]}));
      }
      sj["signs"] = signs;
      slots.push_back(sj);
    }
    cj["transmitters"] = slots;
    out << cj.dump() << "\n";
  }
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path);
  const std::string ctx = "dataset " + path;
  std::string line;
  if (!std::getline(in, line)) schema_fail(ctx, "empty file");
  const json header = parse_json_text(line, ctx + " header");
  Dataset out;
  out.scenario_id = require(header, "scenario_id", ctx).get<std::string>();
  out.seed = require(header, "seed", ctx).get<std::uint64_t>();
  const std::size_t count = require(header, "count", ctx).get<std::size_t>();

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json cj = parse_json_text(line, ctx + " record");
    MeasurementCycle cycle;
    cycle.slot_index = require(cj, "slot", ctx).get<std::int64_t>();
    if (cj.contains("true_position"))
      cycle.true_position = as_vec3(cj["true_position"], ctx + ".true_position");
    const json& slots = require(cj, "transmitters", ctx);
    if (!slots.is_array()) schema_fail(ctx, "'transmitters' must be an array");
    for (const auto& sj : slots) {
      MeasurementCycle::PerTransmitter slot;
      slot.magnitudes = as_mat3(require(sj, "magnitudes", ctx), ctx + ".magnitudes");
      const json& signs = require(sj, "signs", ctx);
      if (!signs.is_array() || signs.size() != 3) schema_fail(ctx, "bad sign matrix");
      for (int i = 0; i < 3; ++i) {
        const json& row = signs[i];
        if (!row.is_array() || row.size() != 3) schema_fail(ctx, "bad sign matrix");
        for (int k = 0; k < 3; ++k) slot.signs[i][k] = row[k].get<int>();
      }
      cycle.transmitters.push_back(std::move(slot));
    }
    out.cycles.push_back(std::move(cycle));
  }
  if (out.cycles.size() != count)
    schema_fail(ctx, "cycle count mismatch: header says " + std::to_string(count) +
                         ", file has " + std::to_string(out.cycles.size()));
  return out;
}

void save_calibration(const CalibrationSet& cal, const std::string& path,
                      std::uint64_t config_hash, std::uint64_t seed) {
  json j;
  j["config_hash"] = hash_hex(config_hash);
  j["seed"] = seed;
  json txs = json::array();
  for (const auto& tx : cal.transmitters) {
    json tj;
    json axes = json::array();
    for (const auto& axis : tx.axis) axes.push_back(axis_to_json(axis));
    tj["axes"] = axes;
    tj["combined"] = axis_to_json(tx.combined);
    txs.push_back(tj);
  }
  j["transmitters"] = txs;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

CalibrationSet load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calibration: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string ctx = "calibration " + path;
  const json j = parse_json_text(buffer.str(), ctx);
  CalibrationSet out;
  const json& txs = require(j, "transmitters", ctx);
  if (!txs.is_array()) schema_fail(ctx, "'transmitters' must be an array");
  for (const auto& tj : txs) {
    CalibrationSet::PerTransmitter per;
    const json& axes = require(tj, "axes", ctx);
    if (!axes.is_array() || axes.size() != 3)
      schema_fail(ctx, "'axes' must hold 3 calibrations");
    for (int i = 0; i < 3; ++i) per.axis[i] = axis_from_json(axes[i], ctx);
    per.combined = axis_from_json(require(tj, "combined", ctx), ctx);
    out.transmitters.push_back(per);
  }
  return out;
}

void save_model(const FingerprintModel& model, const std::string& path,
                std::uint64_t config_hash) {
  json j;
  j["config_hash"] = hash_hex(config_hash);
  j["kind"] = model.kind == MapKind::kPoly3Lasso ? "poly3-lasso" : "lasso";
  j["degree"] = model.degree;
  j["feature_count"] = model.feature_count;
  j["lambda"] = model.lambda;
  j["train_fraction"] = model.train_fraction;
  j["seed"] = model.seed;
  if (std::isfinite(model.held_out_median))
    j["held_out_median"] = model.held_out_median;
  else
    j["held_out_median"] = nullptr;
  j["conditioning_warning"] = model.conditioning_warning;
  j["raw"] = {{"mean", vector_to_json(model.raw.mean)},
              {"scale", vector_to_json(model.raw.scale)}};
  j["expanded"] = {{"mean", vector_to_json(model.expanded.mean)},
                   {"scale", vector_to_json(model.expanded.scale)}};
  json weights = json::array();
  for (int k = 0; k < 3; ++k)
    weights.push_back(vector_to_json(model.weights.row(k).transpose()));
  j["weights"] = weights;
  j["intercepts"] = vec3_to_json(model.intercepts);

  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

FingerprintModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string ctx = "model " + path;
  const json j = parse_json_text(buffer.str(), ctx);

  FingerprintModel model;
  const std::string kind = require(j, "kind", ctx).get<std::string>();
  if (kind == "poly3-lasso") {
    model.kind = MapKind::kPoly3Lasso;
  } else if (kind == "lasso") {
    model.kind = MapKind::kLasso;
  } else {
    schema_fail(ctx, "unknown kind '" + kind + "'");
  }
  model.degree = require(j, "degree", ctx).get<int>();
  model.feature_count = require(j, "feature_count", ctx).get<int>();
  model.lambda = as_number(require(j, "lambda", ctx), ctx);
  model.train_fraction = as_number(require(j, "train_fraction", ctx), ctx);
  model.seed = require(j, "seed", ctx).get<std::uint64_t>();
  const json& held = require(j, "held_out_median", ctx);
  model.held_out_median =
      held.is_null() ? std::numeric_limits<double>::quiet_NaN() : as_number(held, ctx);
  model.conditioning_warning = require(j, "conditioning_warning", ctx).get<bool>();
  const json& raw = require(j, "raw", ctx);
  model.raw.mean = vector_from_json(require(raw, "mean", ctx), ctx + ".raw.mean");
  model.raw.scale = vector_from_json(require(raw, "scale", ctx), ctx + ".raw.scale");
  const json& expanded = require(j, "expanded", ctx);
  model.expanded.mean =
      vector_from_json(require(expanded, "mean", ctx), ctx + ".expanded.mean");
  model.expanded.scale =
      vector_from_json(require(expanded, "scale", ctx), ctx + ".expanded.scale");
  const json& weights = require(j, "weights", ctx);
  if (!weights.is_array() || weights.size() != 3)
    schema_fail(ctx, "'weights' must hold 3 rows");
  for (int k = 0; k < 3; ++k) {
    const Eigen::VectorXd row = vector_from_json(weights[k], ctx + ".weights");
    if (k == 0) model.weights.resize(3, row.size());
    if (row.size() != model.weights.cols()) schema_fail(ctx, "ragged weight rows");
    model.weights.row(k) = row.transpose();
  }
  model.intercepts = as_vec3(require(j, "intercepts", ctx), ctx + ".intercepts");
  return model;
}

}  // namespace magloc
