#include "hpf/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hpf {

namespace {

const Json& need(const Json& j, const char* key, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorKind::io, ctx + ": missing required key \"" + key + "\"");
  }
  return j.at(key);
}

Real need_real(const Json& j, const char* key, const std::string& ctx) {
  const Json& v = need(j, key, ctx);
  if (!v.is_number()) throw Error(ErrorKind::io, ctx + "/" + key + ": expected a number");
  return v.get<Real>();
}

Real real_or(const Json& j, const char* key, Real fallback) {
  if (j.is_object() && j.contains(key) && j.at(key).is_number()) return j.at(key).get<Real>();
  return fallback;
}

int need_int(const Json& j, const char* key, const std::string& ctx) {
  const Json& v = need(j, key, ctx);
  if (!v.is_number_integer()) throw Error(ErrorKind::io, ctx + "/" + key + ": expected an integer");
  return v.get<int>();
}

std::string need_string(const Json& j, const char* key, const std::string& ctx) {
  const Json& v = need(j, key, ctx);
  if (!v.is_string()) throw Error(ErrorKind::io, ctx + "/" + key + ": expected a string");
  return v.get<std::string>();
}

bool resolve_per_unit(const Json& j, std::optional<bool> override_flag) {
  if (override_flag) return *override_flag;
  if (j.is_object() && j.contains("per_unit")) {
    const Json& v = j.at("per_unit");
    if (!v.is_boolean()) throw Error(ErrorKind::io, "/per_unit: expected a boolean");
    return v.get<bool>();
  }
  return false;
}

Matrix3 parse_mat3(const Json& v, const std::string& ctx) {
  if (!v.is_array() || v.size() != 9) {
    throw Error(ErrorKind::io, ctx + ": expected 9 numbers (row-major 3x3)");
  }
  Matrix3 m;
  for (int i = 0; i < 9; ++i) {
    if (!v[static_cast<std::size_t>(i)].is_number()) {
      throw Error(ErrorKind::io, ctx + ": expected 9 numbers (row-major 3x3)");
    }
    m(i / 3, i % 3) = v[static_cast<std::size_t>(i)].get<Real>();
  }
  return m;
}

Json dump_mat3(const Matrix3& m) {
  Json v = Json::array();
  for (int i = 0; i < 9; ++i) v.push_back(m(i / 3, i % 3));
  return v;
}

Matrix3Comp parse_mat3c(const Json& v, const std::string& ctx) {
  if (!v.is_array() || v.size() != 18) {
    throw Error(ErrorKind::io, ctx + ": expected 18 numbers (row-major 3x3, re/im interleaved)");
  }
  Matrix3Comp m;
  for (int k = 0; k < 9; ++k) {
    const Json& re = v[static_cast<std::size_t>(2 * k)];
    const Json& im = v[static_cast<std::size_t>(2 * k + 1)];
    if (!re.is_number() || !im.is_number()) {
      throw Error(ErrorKind::io, ctx + ": expected 18 numbers (row-major 3x3, re/im interleaved)");
    }
    m(k / 3, k % 3) = Complex(re.get<Real>(), im.get<Real>());
  }
  return m;
}

Json dump_mat3c(const Matrix3Comp& m) {
  Json v = Json::array();
  for (int k = 0; k < 9; ++k) {
    v.push_back(m(k / 3, k % 3).real());
    v.push_back(m(k / 3, k % 3).imag());
  }
  return v;
}

int parse_order_key(const std::string& key, const std::string& ctx) {
  std::size_t used = 0;
  int h = 0;
  try {
    h = std::stoi(key, &used);
  } catch (const std::exception&) {
    throw Error(ErrorKind::io, ctx + "/" + key + ": key must be a harmonic order");
  }
  if (used != key.size()) {
    throw Error(ErrorKind::io, ctx + "/" + key + ": key must be a harmonic order");
  }
  return h;
}

std::map<int, Matrix3Comp> parse_order_table(const Json& table, const std::string& ctx,
                                             Real scale) {
  if (!table.is_object()) throw Error(ErrorKind::io, ctx + ": expected an object keyed by order");
  std::map<int, Matrix3Comp> out;
  for (const auto& [key, value] : table.items()) {
    const int h = parse_order_key(key, ctx);
    if (h < 0) {
      throw Error(ErrorKind::io,
                  ctx + "/" + key + ": negative orders are implied by conjugate symmetry");
    }
    out.emplace(h, (parse_mat3c(value, ctx + "/" + key) * scale).eval());
  }
  return out;
}

Json dump_order_table(const std::map<int, Matrix3Comp>& table) {
  Json out = Json::object();
  for (const auto& [h, m] : table) out[std::to_string(h)] = dump_mat3c(m);
  return out;
}

std::string format_number(Real v) {
  if (v == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

GridModel grid_from_json(const Json& j, std::optional<bool> per_unit_override) {
  const std::string ctx = "/";
  GridModel grid;
  grid.f1 = need_real(j, "f1_hz", ctx);
  const bool per_unit = resolve_per_unit(j, per_unit_override);
  grid.v_base = per_unit ? real_or(j, "v_base", 1.0) : need_real(j, "v_base", ctx);
  grid.s_base = per_unit ? real_or(j, "s_base", 1.5) : need_real(j, "s_base", ctx);
  if (grid.f1 <= 0.0 || grid.v_base <= 0.0 || grid.s_base <= 0.0) {
    throw Error(ErrorKind::io, "/: f1_hz, v_base and s_base must be positive");
  }
  const Real zb = per_unit ? 1.0 : grid.z_base();

  const Json& nodes = need(j, "nodes", ctx);
  if (!nodes.is_array() || nodes.empty()) {
    throw Error(ErrorKind::io, "/nodes: expected a non-empty array");
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string nctx = "/nodes/" + std::to_string(i);
    GridNode node;
    node.id = need_int(nodes[i], "id", nctx);
    const std::string kind = need_string(nodes[i], "kind", nctx);
    if (kind == "forming") {
      node.kind = NodeKind::forming;
    } else if (kind == "following") {
      node.kind = NodeKind::following;
    } else if (kind == "zero") {
      node.kind = NodeKind::zero;
    } else {
      throw Error(ErrorKind::io, nctx + "/kind: expected forming, following or zero");
    }
    grid.nodes.push_back(node);
  }

  if (j.contains("branches")) {
    const Json& branches = j.at("branches");
    if (!branches.is_array()) throw Error(ErrorKind::io, "/branches: expected an array");
    for (std::size_t i = 0; i < branches.size(); ++i) {
      const std::string bctx = "/branches/" + std::to_string(i);
      GridBranch branch;
      branch.from = need_int(branches[i], "from", bctx);
      branch.to = need_int(branches[i], "to", bctx);
      if (branches[i].contains("Z_table")) {
        branch.impedance_table =
            parse_order_table(branches[i].at("Z_table"), bctx + "/Z_table", 1.0 / zb);
      } else {
        branch.resistance = parse_mat3(need(branches[i], "R", bctx), bctx + "/R") / zb;
        branch.inductance = parse_mat3(need(branches[i], "L", bctx), bctx + "/L") / zb;
      }
      grid.branches.push_back(std::move(branch));
    }
  }

  if (j.contains("shunts")) {
    const Json& shunts = j.at("shunts");
    if (!shunts.is_array()) throw Error(ErrorKind::io, "/shunts: expected an array");
    for (std::size_t i = 0; i < shunts.size(); ++i) {
      const std::string sctx = "/shunts/" + std::to_string(i);
      GridShunt shunt;
      shunt.node = need_int(shunts[i], "node", sctx);
      if (shunts[i].contains("Y_table")) {
        shunt.admittance_table = parse_order_table(shunts[i].at("Y_table"), sctx + "/Y_table", zb);
      } else {
        shunt.conductance = parse_mat3(need(shunts[i], "G", sctx), sctx + "/G") * zb;
        shunt.capacitance = parse_mat3(need(shunts[i], "C", sctx), sctx + "/C") * zb;
      }
      grid.shunts.push_back(std::move(shunt));
    }
  }
  return grid;
}

Json grid_to_json(const GridModel& grid) {
  Json j = Json::object();
  j["f1_hz"] = grid.f1;
  j["v_base"] = grid.v_base;
  j["s_base"] = grid.s_base;
  j["per_unit"] = true;
  j["nodes"] = Json::array();
  for (const auto& node : grid.nodes) {
    const char* kind = node.kind == NodeKind::forming
                           ? "forming"
                           : (node.kind == NodeKind::following ? "following" : "zero");
    j["nodes"].push_back(Json{{"id", node.id}, {"kind", kind}});
  }
  j["branches"] = Json::array();
  for (const auto& branch : grid.branches) {
    Json b = Json::object();
    b["from"] = branch.from;
    b["to"] = branch.to;
    if (branch.impedance_table) {
      b["Z_table"] = dump_order_table(*branch.impedance_table);
    } else {
      b["R"] = dump_mat3(branch.resistance);
      b["L"] = dump_mat3(branch.inductance);
    }
    j["branches"].push_back(std::move(b));
  }
  j["shunts"] = Json::array();
  for (const auto& shunt : grid.shunts) {
    Json s = Json::object();
    s["node"] = shunt.node;
    if (shunt.admittance_table) {
      s["Y_table"] = dump_order_table(*shunt.admittance_table);
    } else {
      s["G"] = dump_mat3(shunt.conductance);
      s["C"] = dump_mat3(shunt.capacitance);
    }
    j["shunts"].push_back(std::move(s));
  }
  return j;
}

namespace {

/// Per-loop measurement/command bases for SI controller gains.  Loop j
/// (0 = innermost) measures filter stage (stages - loops + j): a voltage for
/// the last stage of a forming converter, a current otherwise.  It commands
/// the quantity measured by loop j-1; the innermost commands the actuator
/// voltage.
void scale_controller_gains(CiderModel& model, Real v_base, Real i_base) {
  const int loops = static_cast<int>(model.controller.size());
  auto measured_base = [&](int j) {
    const bool voltage = model.mode == CiderMode::forming && j == loops - 1;
    return voltage ? v_base : i_base;
  };
  for (int j = 0; j < loops; ++j) {
    const Real base_out = (j == 0) ? v_base : measured_base(j - 1);
    const Real factor = measured_base(j) / base_out;
    model.controller[static_cast<std::size_t>(j)].kp *= factor;
    model.controller[static_cast<std::size_t>(j)].ki *= factor;
  }
}

CiderModel cider_from_json(const Json& j, const GridModel& bases, bool per_unit,
                           const std::string& ctx) {
  CiderModel model;
  model.node = need_int(j, "node", ctx);
  const std::string mode = need_string(j, "mode", ctx);
  if (mode == "forming") {
    model.mode = CiderMode::forming;
  } else if (mode == "following") {
    model.mode = CiderMode::following;
  } else {
    throw Error(ErrorKind::io, ctx + "/mode: expected forming or following");
  }
  const std::string transform = need_string(j, "transform", ctx);
  if (transform == "park") {
    model.frame = ControlFrame::park;
  } else if (transform == "clarke") {
    model.frame = ControlFrame::clarke;
  } else {
    throw Error(ErrorKind::io, ctx + "/transform: expected park or clarke");
  }

  const Real zb = per_unit ? 1.0 : bases.z_base();
  const Json& stages = need(need(j, "filter", ctx), "stages", ctx + "/filter");
  if (!stages.is_array() || stages.empty()) {
    throw Error(ErrorKind::io, ctx + "/filter/stages: expected a non-empty array");
  }
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::string sctx = ctx + "/filter/stages/" + std::to_string(s);
    FilterStage stage;
    stage.inductance = need_real(stages[s], "L", sctx) / zb;
    stage.resistance = real_or(stages[s], "R", 0.0) / zb;
    stage.capacitance = real_or(stages[s], "C", 0.0) * zb;
    model.filter.push_back(stage);
  }

  const Json& loops = need(need(j, "controller", ctx), "stages", ctx + "/controller");
  if (!loops.is_array() || loops.empty()) {
    throw Error(ErrorKind::io, ctx + "/controller/stages: expected a non-empty array");
  }
  for (std::size_t s = 0; s < loops.size(); ++s) {
    const std::string sctx = ctx + "/controller/stages/" + std::to_string(s);
    ControlStage stage;
    stage.kp = need_real(loops[s], "kp", sctx);
    stage.ki = real_or(loops[s], "ki", 0.0);
    model.controller.push_back(stage);
  }

  const Json& setpoint = need(j, "setpoint", ctx);
  if (setpoint.contains("V")) {
    model.reference.kind = ReferenceLaw::Kind::voltage_frequency;
    model.reference.v_set = need_real(setpoint, "V", ctx + "/setpoint") /
                            (per_unit ? 1.0 : bases.v_base);
    model.reference.f_set = need_real(setpoint, "f", ctx + "/setpoint");
  } else if (setpoint.contains("P")) {
    model.reference.kind = ReferenceLaw::Kind::power;
    model.reference.p_set = need_real(setpoint, "P", ctx + "/setpoint") /
                            (per_unit ? 1.0 : bases.s_base);
    model.reference.q_set = need_real(setpoint, "Q", ctx + "/setpoint") /
                            (per_unit ? 1.0 : bases.s_base);
    model.reference.f_set = bases.f1;
  } else {
    throw Error(ErrorKind::io, ctx + "/setpoint: expected {V, f} or {P, Q}");
  }

  if (!per_unit) scale_controller_gains(model, bases.v_base, bases.i_base());
  return model;
}

}  // namespace

std::vector<CiderModel> ciders_from_json(const Json& j, const GridModel& bases,
                                         std::optional<bool> per_unit_override) {
  const Json* list = &j;
  bool per_unit = per_unit_override.value_or(false);
  if (j.is_object()) {
    per_unit = resolve_per_unit(j, per_unit_override);
    list = &need(j, "resources", "/");
  }
  if (!list->is_array()) {
    throw Error(ErrorKind::io, "/resources: expected an array of converter models");
  }
  std::vector<CiderModel> out;
  for (std::size_t i = 0; i < list->size(); ++i) {
    out.push_back(
        cider_from_json((*list)[i], bases, per_unit, "/resources/" + std::to_string(i)));
  }
  return out;
}

Json ciders_to_json(const std::vector<CiderModel>& ciders) {
  Json list = Json::array();
  for (const auto& model : ciders) {
    Json c = Json::object();
    c["node"] = model.node;
    c["mode"] = model.mode == CiderMode::forming ? "forming" : "following";
    c["transform"] = model.frame == ControlFrame::park ? "park" : "clarke";
    Json stages = Json::array();
    for (const auto& stage : model.filter) {
      stages.push_back(Json{{"L", stage.inductance}, {"R", stage.resistance},
                            {"C", stage.capacitance}});
    }
    c["filter"] = Json{{"stages", std::move(stages)}};
    Json loops = Json::array();
    for (const auto& stage : model.controller) {
      loops.push_back(Json{{"kp", stage.kp}, {"ki", stage.ki}});
    }
    c["controller"] = Json{{"stages", std::move(loops)}};
    if (model.reference.kind == ReferenceLaw::Kind::voltage_frequency) {
      c["setpoint"] = Json{{"V", model.reference.v_set}, {"f", model.reference.f_set}};
    } else {
      c["setpoint"] = Json{{"P", model.reference.p_set}, {"Q", model.reference.q_set}};
    }
    list.push_back(std::move(c));
  }
  return Json{{"per_unit", true}, {"resources", std::move(list)}};
}

namespace {

HarmonicSignal parse_spectrum(const Json& spec, const std::string& ctx, Real scale) {
  if (!spec.is_object()) throw Error(ErrorKind::io, ctx + ": expected an object keyed by order");
  HarmonicSignal out(3);
  for (const auto& [key, value] : spec.items()) {
    const int h = parse_order_key(key, ctx);
    if (h < 0) {
      throw Error(ErrorKind::io,
                  ctx + "/" + key + ": negative orders are implied by conjugate symmetry");
    }
    if (!value.is_array() || value.size() != 6) {
      throw Error(ErrorKind::io, ctx + "/" + key + ": expected 6 numbers (re/im per phase)");
    }
    VectorComp coeff(3);
    for (int p = 0; p < 3; ++p) {
      const Json& re = value[static_cast<std::size_t>(2 * p)];
      const Json& im = value[static_cast<std::size_t>(2 * p + 1)];
      if (!re.is_number() || !im.is_number()) {
        throw Error(ErrorKind::io, ctx + "/" + key + ": expected 6 numbers (re/im per phase)");
      }
      coeff(p) = Complex(re.get<Real>(), im.get<Real>()) * scale;
    }
    if (h == 0 && coeff.imag().cwiseAbs().maxCoeff() > 0.0) {
      throw Error(ErrorKind::io, ctx + "/0: the order-0 coefficient of a real signal is real");
    }
    if (coeff.cwiseAbs().maxCoeff() == 0.0) continue;
    out.set(h, coeff);
    if (h > 0) out.set(-h, coeff.conjugate());
  }
  return out;
}

Json dump_spectrum(const HarmonicSignal& x) {
  Json out = Json::object();
  for (const auto& [h, coeff] : x.coeffs) {
    if (h < 0) continue;  // implied by conjugation
    Json v = Json::array();
    for (int p = 0; p < 3; ++p) {
      v.push_back(coeff(p).real());
      v.push_back(coeff(p).imag());
    }
    out[std::to_string(h)] = std::move(v);
  }
  return out;
}

HarmonicBlockMatrix parse_block_matrix(const Json& mat, const std::string& ctx, Real scale) {
  if (!mat.is_object()) {
    throw Error(ErrorKind::io, ctx + ": expected an object keyed by \"row,col\" orders");
  }
  HarmonicBlockMatrix out;
  for (const auto& [key, value] : mat.items()) {
    const auto comma = key.find(',');
    if (comma == std::string::npos) {
      throw Error(ErrorKind::io, ctx + "/" + key + ": key must be \"row_order,col_order\"");
    }
    const int m = parse_order_key(key.substr(0, comma), ctx);
    const int n = parse_order_key(key.substr(comma + 1), ctx);
    out.set(m, n, (parse_mat3c(value, ctx + "/" + key) * scale).eval());
  }
  // Fill in the conjugate partners the file left implicit.
  const auto given = out.blocks;
  for (const auto& [orders, block] : given) {
    const auto partner = std::make_pair(-orders.first, -orders.second);
    if (given.count(partner) == 0) out.set(partner.first, partner.second, block.conjugate());
  }
  return out;
}

Json dump_block_matrix(const HarmonicBlockMatrix& mat) {
  Json out = Json::object();
  for (const auto& [orders, block] : mat.blocks) {
    const auto [m, n] = orders;
    if (m < 0 || (m == 0 && n < 0)) continue;  // canonical half; rest by conjugation
    out[std::to_string(m) + "," + std::to_string(n)] = dump_mat3c(block);
  }
  return out;
}

}  // namespace

SourceSet sources_from_json(const Json& j, const GridModel& bases,
                            std::optional<bool> per_unit_override) {
  const Json* list = &j;
  bool per_unit = per_unit_override.value_or(false);
  if (j.is_object()) {
    per_unit = resolve_per_unit(j, per_unit_override);
    list = &need(j, "sources", "/");
  }
  if (!list->is_array()) {
    throw Error(ErrorKind::io, "/sources: expected an array of source equivalents");
  }
  SourceSet out;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const std::string ctx = "/sources/" + std::to_string(i);
    const Json& entry = (*list)[i];
    const int node = need_int(entry, "node", ctx);
    const std::string kind = need_string(entry, "kind", ctx);
    if (kind == "thevenin") {
      TheveninEquivalent te;
      te.node = node;
      te.v_source = parse_spectrum(need(entry, "spectrum", ctx), ctx + "/spectrum",
                                   per_unit ? 1.0 : 1.0 / bases.v_base);
      te.impedance = parse_block_matrix(need(entry, "matrix", ctx), ctx + "/matrix",
                                        per_unit ? 1.0 : 1.0 / bases.z_base());
      out.thevenin.push_back(std::move(te));
    } else if (kind == "norton") {
      NortonEquivalent ne;
      ne.node = node;
      ne.i_source = parse_spectrum(need(entry, "spectrum", ctx), ctx + "/spectrum",
                                   per_unit ? 1.0 : 1.0 / bases.i_base());
      ne.admittance = parse_block_matrix(need(entry, "matrix", ctx), ctx + "/matrix",
                                         per_unit ? 1.0 : bases.z_base());
      out.norton.push_back(std::move(ne));
    } else {
      throw Error(ErrorKind::io, ctx + "/kind: expected thevenin or norton");
    }
  }
  return out;
}

Json sources_to_json(const SourceSet& sources) {
  Json list = Json::array();
  for (const auto& te : sources.thevenin) {
    list.push_back(Json{{"node", te.node},
                        {"kind", "thevenin"},
                        {"spectrum", dump_spectrum(te.v_source)},
                        {"matrix", dump_block_matrix(te.impedance)}});
  }
  for (const auto& ne : sources.norton) {
    list.push_back(Json{{"node", ne.node},
                        {"kind", "norton"},
                        {"spectrum", dump_spectrum(ne.i_source)},
                        {"matrix", dump_block_matrix(ne.admittance)}});
  }
  return Json{{"per_unit", true}, {"sources", std::move(list)}};
}

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, path + ": cannot open for reading");
  try {
    return Json::parse(in);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::io, path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, path + ": cannot open for writing");
  out << text;
  if (!out) throw Error(ErrorKind::io, path + ": write failed");
}

HpfProblem load_study(const StudyConfig& config) {
  if (config.h_max < 1) {
    throw Error(ErrorKind::parameter, "the harmonic depth must be at least 1");
  }
  if (config.tolerance <= 0.0) {
    throw Error(ErrorKind::parameter, "the convergence tolerance must be positive");
  }
  GridModel grid = grid_from_json(load_json_file(config.grid_path), config.per_unit);
  const HarmonicIndexSet H{config.h_max, grid.f1};
  const ValidationReport report = validate_grid(grid, H);
  if (!report.ok()) {
    throw Error(ErrorKind::parameter, config.grid_path + ": " + report.summary());
  }
  std::vector<CiderModel> ciders =
      ciders_from_json(load_json_file(config.ciders_path), grid, config.per_unit);
  SourceSet sources;
  if (!config.sources_path.empty()) {
    sources = sources_from_json(load_json_file(config.sources_path), grid, config.per_unit);
  }
  SolverOptions options;
  options.tolerance = config.tolerance;
  options.max_iterations = config.max_iterations;
  options.damping = config.damping;
  options.threads = config.threads;
  return build_problem(std::move(grid), std::move(ciders), std::move(sources.thevenin),
                       std::move(sources.norton), H, options);
}

std::string spectrum_csv(const NodalSpectra& spectra, const HarmonicIndexSet& H) {
  std::ostringstream os;
  os << "# harmonic spectra in per-unit; magnitude = waveform amplitude at order h "
        "(|X_0| at h=0, 2|X_h| for h >= 1); angle in radians\n";
  os << "node,phase,quantity,h,magnitude,angle\n";
  const char* phases = "ABC";
  for (int id : spectra.node_ids) {
    for (int p = 0; p < 3; ++p) {
      for (const char* quantity : {"V", "I"}) {
        const auto& table = quantity[0] == 'V' ? spectra.voltage : spectra.injection;
        const HarmonicSignal& signal = table.at(id);
        for (int h = 0; h <= H.h_max; ++h) {
          const Complex c = signal.at(h)(p);
          const Real magnitude = (h == 0 ? 1.0 : 2.0) * std::abs(c);
          const Real angle = magnitude > 0.0 ? std::arg(c) : 0.0;
          os << id << ',' << phases[p] << ',' << quantity << ',' << h << ','
             << format_number(magnitude) << ',' << format_number(angle) << '\n';
        }
      }
    }
  }
  return os.str();
}

std::string convergence_log_lines(const HpfSolution& solution) {
  std::ostringstream os;
  for (const auto& record : solution.history) {
    Json line = Json::object();
    line["iter"] = record.iter;
    line["max_dV"] = record.max_dv;
    line["max_dI"] = record.max_di;
    os << line.dump() << '\n';
  }
  Json summary = Json::object();
  summary["converged"] = solution.converged;
  summary["iterations"] = solution.iterations;
  os << summary.dump() << '\n';
  return os.str();
}

std::string waveform_csv(const Matrix& samples, Real f1) {
  std::ostringstream os;
  os << 't';
  for (Eigen::Index c = 0; c < samples.cols(); ++c) os << ",signal_" << c;
  os << '\n';
  const Real dt = 1.0 / (f1 * static_cast<Real>(samples.rows()));
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    os << format_number(static_cast<Real>(r) * dt);
    for (Eigen::Index c = 0; c < samples.cols(); ++c) {
      os << ',' << format_number(samples(r, c));
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace hpf
