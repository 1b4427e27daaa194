#include "hessfit/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace hessfit {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Text and CSV persistence
// ---------------------------------------------------------------------------

void write_text_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  const fs::path dir = target.has_parent_path() ? target.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path tmp = dir / (target.filename().string() + ".tmp~");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("rename to " + path + " failed: " + ec.message());
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_cloud_csv(const std::string& path, const PointCloud& cloud,
                     const Json& meta) {
  std::string buf;
  buf.reserve(static_cast<std::size_t>(cloud.n()) * cloud.p() * 20 + 64);
  for (int c = 0; c < cloud.p(); ++c) {
    if (c) buf += ',';
    buf += "x" + std::to_string(c + 1);
  }
  buf += '\n';
  for (long i = 0; i < cloud.n(); ++i) {
    for (int c = 0; c < cloud.p(); ++c) {
      if (c) buf += ',';
      buf += format_g17(cloud.points(i, c));
    }
    buf += '\n';
  }
  write_text_atomic(path, buf);
  write_text_atomic(path + ".meta.json", meta.dump(2) + "\n");
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == sep) {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

}  // namespace

PointCloud read_cloud_csv(const std::string& path) {
  const std::string text = read_text(path);
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '\n') {
      if (i > start) lines.push_back(std::string_view(text).substr(start, i - start));
      start = i + 1;
    }
  }
  if (lines.empty()) throw ParseError("empty cloud CSV " + path);
  const auto header = split(lines[0], ',');
  const int p = static_cast<int>(header.size());
  PointCloud cloud;
  cloud.points.resize(static_cast<long>(lines.size()) - 1, p);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = split(lines[r], ',');
    if (static_cast<int>(cells.size()) != p)
      throw ParseError("row " + std::to_string(r) + " has wrong arity in " + path);
    for (int c = 0; c < p; ++c) cloud.points(static_cast<long>(r) - 1, c) = parse_double(cells[c]);
  }
  if (auto meta = read_cloud_meta(path)) {
    cloud.model_id = meta->value("model_id", "");
    cloud.density_id = meta->value("density_id", "");
    cloud.seed = (*meta).value("seed", 0ull);
  }
  return cloud;
}

std::optional<Json> read_cloud_meta(const std::string& path) {
  const std::string mp = path + ".meta.json";
  if (!fs::exists(mp)) return std::nullopt;
  return Json::parse(read_text(mp));
}

void write_vector_csv(const std::string& path, const Vec& v, const std::string& header) {
  std::string buf = header + "\n";
  for (long i = 0; i < v.size(); ++i) buf += format_g17(v[i]) + "\n";
  write_text_atomic(path, buf);
}

Vec read_vector_csv(const std::string& path) {
  const std::string text = read_text(path);
  std::vector<double> vals;
  std::size_t start = 0;
  bool first = true;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '\n') {
      if (i > start) {
        const std::string_view line = std::string_view(text).substr(start, i - start);
        if (first) {
          first = false;  // header
        } else {
          vals.push_back(parse_double(line));
        }
      }
      start = i + 1;
    }
  }
  Vec v(static_cast<long>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) v[static_cast<long>(i)] = vals[i];
  return v;
}

// ---------------------------------------------------------------------------
// JSON configs
// ---------------------------------------------------------------------------

namespace {

void check_keys(const Json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed)
      if (it.key() == a) ok = true;
    if (!ok)
      throw ValidationError("unknown key \"" + it.key() + "\" in " + where);
  }
}

double num_or(const Json& j, const char* key, double def) {
  if (!j.contains(key)) return def;
  if (!j.at(key).is_number()) throw ValidationError(std::string(key) + " must be a number");
  return j.at(key).get<double>();
}

}  // namespace

ManifoldModel model_from_json(const Json& j) {
  if (j.is_string()) {
    const std::string name = j.get<std::string>();
    return model_from_json(Json{{"name", name}});
  }
  check_keys(j, {"name", "d", "p", "radius", "half_height", "major", "minor"}, "model");
  if (!j.contains("name")) throw ValidationError("model needs \"name\"");
  const ModelKind kind = model_kind_from_string(j.at("name").get<std::string>());
  const int d = static_cast<int>(num_or(j, "d", 2));
  switch (kind) {
    case ModelKind::FlatDisk:
      return ManifoldModel::flat_disk(d, static_cast<int>(num_or(j, "p", d)),
                                      num_or(j, "radius", 1.0));
    case ModelKind::Sphere:
      return ManifoldModel::sphere(d);
    case ModelKind::Hemisphere:
      return ManifoldModel::hemisphere(d);
    case ModelKind::Cylinder:
      return ManifoldModel::cylinder(num_or(j, "half_height", 1.0));
    case ModelKind::Torus:
      return ManifoldModel::torus(num_or(j, "major", 2.0), num_or(j, "minor", 1.0));
  }
  throw ValidationError("unreachable model kind");
}

Json model_to_json(const ManifoldModel& m) {
  Json j{{"name", to_string(m.kind())}, {"d", m.d()}};
  switch (m.kind()) {
    case ModelKind::FlatDisk:
      j["p"] = m.p();
      j["radius"] = m.disk_radius();
      break;
    case ModelKind::Cylinder:
      j["half_height"] = m.cyl_half_height();
      break;
    case ModelKind::Torus:
      j["major"] = m.torus_major();
      j["minor"] = m.torus_minor();
      break;
    default:
      break;
  }
  return j;
}

DensityModel density_from_json(const ManifoldModel& m, const Json& j) {
  if (j.is_null()) return DensityModel::uniform(m);
  if (j.is_string()) {
    if (j.get<std::string>() == "uniform") return DensityModel::uniform(m);
    throw ValidationError("unknown density \"" + j.get<std::string>() + "\"");
  }
  check_keys(j, {"kind", "a", "k"}, "density");
  const std::string kind = j.value("kind", "uniform");
  if (kind == "uniform") return DensityModel::uniform(m);
  if (kind == "smooth_bump")
    return DensityModel::smooth_bump(m, num_or(j, "a", 0.5),
                                     static_cast<int>(num_or(j, "k", 1)));
  throw ValidationError("unknown density kind \"" + kind + "\"");
}

Json density_to_json(const DensityModel& rho) {
  if (rho.kind() == DensityKind::Uniform) return Json{{"kind", "uniform"}};
  return Json{{"kind", "smooth_bump"}, {"a", rho.amplitude()}, {"k", rho.mode()}};
}

ScalarField field_from_json(const ManifoldModel& m, const Json& j) {
  if (j.is_string()) return field_by_name(m, j.get<std::string>());
  check_keys(j, {"kind", "c", "terms", "k1", "k2"}, "field");
  const std::string kind = j.value("kind", "");
  if (kind == "ambient_linear") {
    const auto cv = j.at("c").get<std::vector<double>>();
    if (static_cast<int>(cv.size()) != m.p())
      throw ValidationError("field c must have length p");
    Vec c(m.p());
    for (int i = 0; i < m.p(); ++i) c[i] = cv[i];
    return ScalarField::ambient_linear(c);
  }
  if (kind == "chart_polynomial") {
    std::vector<PolyTerm> terms;
    for (const auto& t : j.at("terms")) {
      check_keys(t, {"coeff", "exps"}, "field term");
      PolyTerm pt;
      pt.coeff = t.at("coeff").get<double>();
      pt.exps = t.at("exps").get<std::vector<int>>();
      if (static_cast<int>(pt.exps.size()) != m.d())
        throw ValidationError("chart term exps must have length d");
      terms.push_back(std::move(pt));
    }
    return ScalarField::chart_polynomial(terms);
  }
  if (kind == "trig") {
    if (m.kind() != ModelKind::Torus)
      throw ValidationError("explicit trig fields are only defined on the torus");
    return ScalarField::torus_trig(static_cast<int>(num_or(j, "k1", 1)),
                                   static_cast<int>(num_or(j, "k2", 2)));
  }
  throw ValidationError("unknown field kind \"" + kind + "\"");
}

SampleConfig parse_sample_config(const Json& j) {
  check_keys(j, {"model", "params", "density", "field", "n", "seed"}, "sample config");
  SampleConfig c;
  Json model = j.value("model", Json("sphere"));
  if (model.is_string() && j.contains("params")) {
    Json merged = j.at("params");
    merged["name"] = model.get<std::string>();
    model = merged;
  }
  c.model = model_from_json(model);
  c.density = density_from_json(c.model, j.value("density", Json()));
  if (j.contains("field")) c.field = field_from_json(c.model, j.at("field"));
  if (j.contains("n")) {
    if (!j.at("n").is_number_integer() || j.at("n").get<long>() < 1)
      throw ValidationError("n must be a positive integer");
    c.n = j.at("n").get<long>();
  }
  c.seed = j.value("seed", 0ull);
  return c;
}

Json sample_config_to_json(const SampleConfig& c) {
  Json j;
  j["model"] = model_to_json(c.model);
  j["density"] = density_to_json(c.density);
  if (c.field) j["field"] = c.field->name();
  j["n"] = c.n;
  j["seed"] = c.seed;
  return j;
}

namespace {

NRule nrule_from_json(const Json& j) {
  NRule r;
  if (j.is_null()) return r;
  check_keys(j, {"c", "A", "n_at_eps_max"}, "n_rule");
  r.c = num_or(j, "c", 8.0);
  r.A = num_or(j, "A", 0.0);
  r.n_at_eps_max = num_or(j, "n_at_eps_max", 2e4);
  return r;
}

std::vector<double> eps_grid_from_json(const Json& j) {
  if (!j.is_array() || j.size() < 2)
    throw ValidationError("eps_grid must be an array with >= 2 entries");
  std::vector<double> grid = j.get<std::vector<double>>();
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] < grid[i - 1]))
      throw ValidationError("eps_grid must be strictly decreasing");
  for (double e : grid)
    if (!(e > 0)) throw ValidationError("eps_grid entries must be positive");
  return grid;
}

}  // namespace

ConvergenceConfig parse_converge_config(const Json& j) {
  check_keys(j,
             {"model", "density", "field", "eps_grid", "n_rule", "query",
              "repetitions", "seed"},
             "converge config");
  ConvergenceConfig c;
  c.model = model_from_json(j.value("model", Json("sphere")));
  c.density = density_from_json(c.model, j.value("density", Json()));
  c.field = j.contains("field") ? field_from_json(c.model, j.at("field"))
                                : field_catalog(c.model).front();
  c.eps_grid = eps_grid_from_json(j.value("eps_grid", Json::array({0.4, 0.3, 0.22, 0.16})));
  c.n_rule = nrule_from_json(j.value("n_rule", Json()));
  if (j.contains("query")) {
    const Json& q = j.at("query");
    check_keys(q, {"type", "count", "points"}, "query");
    const std::string t = q.value("type", "interior");
    if (t == "interior") c.query.type = QueryType::InteriorPoints;
    else if (t == "boundary_band") c.query.type = QueryType::BoundaryBandPoints;
    else if (t == "fixed") c.query.type = QueryType::FixedPoints;
    else throw ValidationError("unknown query type \"" + t + "\"");
    c.query.count = static_cast<int>(num_or(q, "count", 64));
    if (q.contains("points")) {
      for (const auto& pt : q.at("points")) {
        const auto v = pt.get<std::vector<double>>();
        Vec z(static_cast<long>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) z[static_cast<long>(i)] = v[i];
        c.query.fixed.push_back(z);
      }
    }
  }
  c.repetitions = static_cast<int>(num_or(j, "repetitions", 3));
  c.seed = j.value("seed", 0ull);
  c.validate();
  return c;
}

Json converge_config_to_json(const ConvergenceConfig& c) {
  Json q{{"count", c.query.count}};
  q["type"] = c.query.type == QueryType::InteriorPoints ? "interior"
              : c.query.type == QueryType::BoundaryBandPoints ? "boundary_band"
                                                              : "fixed";
  if (!c.query.fixed.empty()) {
    Json pts = Json::array();
    for (const auto& z : c.query.fixed) {
      std::vector<double> v(z.data(), z.data() + z.size());
      pts.push_back(v);
    }
    q["points"] = pts;
  }
  return Json{{"model", model_to_json(c.model)},
              {"density", density_to_json(c.density)},
              {"field", c.field.name()},
              {"eps_grid", c.eps_grid},
              {"n_rule", Json{{"c", c.n_rule.c}, {"A", c.n_rule.A},
                              {"n_at_eps_max", c.n_rule.n_at_eps_max}}},
              {"query", q},
              {"repetitions", c.repetitions},
              {"seed", c.seed}};
}

GramConfig parse_gram_config(const Json& j) {
  check_keys(j,
             {"model", "density", "eps_grid", "n_rule", "repetitions",
              "query_count", "seed", "variant"},
             "gram config");
  GramConfig c;
  c.model = model_from_json(j.value("model", Json("flat_disk")));
  c.density = density_from_json(c.model, j.value("density", Json()));
  c.eps_grid = eps_grid_from_json(j.value("eps_grid", Json::array({0.4, 0.3, 0.22})));
  c.n_rule = nrule_from_json(j.value("n_rule", Json()));
  c.repetitions = static_cast<int>(num_or(j, "repetitions", 2));
  c.query_count = static_cast<int>(num_or(j, "query_count", 4));
  c.seed = j.value("seed", 0ull);
  const std::string v = j.value("variant", "interior");
  if (v == "interior") c.variant = GramVariant::InteriorDirect;
  else if (v == "truncated") c.variant = GramVariant::TruncatedHeuristic;
  else throw ValidationError("unknown gram variant \"" + v + "\"");
  return c;
}

RunConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const std::exception& e) {
    throw ParseError(e.what());
  }
  check_keys(j, {"subcommand", "sample", "estimate", "moments", "gram", "converge",
                 "out", "fvals_out", "out_prefix"},
             "run config");
  RunConfig rc;
  const std::string sub = j.value("subcommand", "sample");
  if (sub == "sample") {
    rc.sub = Subcommand::Sample;
    rc.sample = parse_sample_config(j.value("sample", Json::object()));
    rc.sample_out = j.value("out", "cloud.csv");
    rc.sample_fvals_out = j.value("fvals_out", "");
  } else if (sub == "estimate") {
    rc.sub = Subcommand::Estimate;
    const Json e = j.value("estimate", Json::object());
    check_keys(e, {"cloud", "fvals", "z", "eps", "dim", "out"}, "estimate config");
    rc.estimate.cloud_path = e.value("cloud", "");
    rc.estimate.fvals = e.value("fvals", "");
    rc.estimate.z = e.value("z", "");
    rc.estimate.eps = num_or(e, "eps", 0.1);
    rc.estimate.dim = static_cast<int>(num_or(e, "dim", 2));
    rc.estimate.out_path = e.value("out", "estimate.json");
  } else if (sub == "moments") {
    rc.sub = Subcommand::Moments;
    const Json mj = j.value("moments", Json::object());
    check_keys(mj, {"d", "delta", "eps", "mc_samples", "seed", "report"}, "moments config");
    rc.moments.d = static_cast<int>(num_or(mj, "d", 2));
    rc.moments.delta = num_or(mj, "delta", 0.0);
    rc.moments.eps = num_or(mj, "eps", 0.1);
    rc.moments.mc_samples = static_cast<long>(num_or(mj, "mc_samples", 1e6));
    rc.moments.seed = mj.value("seed", 0ull);
    rc.moments.report_path = mj.value("report", "moments.csv");
  } else if (sub == "gram") {
    rc.sub = Subcommand::Gram;
    rc.gram.gram = parse_gram_config(j.value("gram", Json::object()));
    rc.gram.out_path = j.value("out", "gram.csv");
  } else if (sub == "converge") {
    rc.sub = Subcommand::Converge;
    rc.converge.conv = parse_converge_config(j.value("converge", Json::object()));
    rc.converge.out_prefix = j.value("out_prefix", "converge");
  } else {
    throw ValidationError("unknown subcommand \"" + sub + "\"");
  }
  return rc;
}

// ---------------------------------------------------------------------------
// Report writers
// ---------------------------------------------------------------------------

void write_convergence_outputs(const ConvergenceReport& rep,
                               const ConvergenceConfig& cfg,
                               const std::string& out_prefix) {
  std::string raw = "eps,n,point_id,e_f,e_grad,e_hess_frob,e_trace,k_z\n";
  for (const auto& r : rep.raw) {
    raw += format_g17(r.eps) + "," + std::to_string(r.n) + "," +
           std::to_string(r.point_id) + "," + format_g17(r.err.e_f) + "," +
           format_g17(r.err.e_grad) + "," + format_g17(r.err.e_hess_frob) + "," +
           format_g17(r.err.e_trace) + "," + std::to_string(r.k_z) + "\n";
  }
  write_text_atomic(out_prefix + "_raw.csv", raw);

  auto slope_json = [](const RegressResult& r) {
    return Json{{"slope", r.slope},
                {"intercept", r.intercept},
                {"ci_lo", r.ci_lo},
                {"ci_hi", r.ci_hi},
                {"floored", r.floored},
                {"near_floor", r.near_floor}};
  };
  Json per_eps = Json::array();
  for (const auto& s : rep.per_eps) {
    per_eps.push_back(Json{{"eps", s.eps},
                           {"n", s.n},
                           {"mean_e_f", s.mean_e_f},
                           {"mean_e_grad", s.mean_e_grad},
                           {"mean_e_hess_frob", s.mean_e_hess},
                           {"mean_e_trace", s.mean_e_trace},
                           {"p90_e_hess_frob", s.p90_e_hess},
                           {"k_min", s.k_min},
                           {"k_mean", s.k_mean},
                           {"k_max", s.k_max},
                           {"failures", s.failures}});
  }
  const Json report{{"config", converge_config_to_json(cfg)},
                    {"region", rep.region},
                    {"per_eps", per_eps},
                    {"slopes", Json{{"f", slope_json(rep.slope_f)},
                                    {"grad", slope_json(rep.slope_grad)},
                                    {"hess_frob", slope_json(rep.slope_hess)},
                                    {"trace", slope_json(rep.slope_trace)}}}};
  write_text_atomic(out_prefix + "_report.json", report.dump(2) + "\n");
}

void write_gram_csv(const GramReport& rep, const std::string& path) {
  std::string csv =
      "block,eps,n,max_abs_dev,w_order,ld_order,slope,ratio_obs,ratio_pred,pass\n";
  for (const auto& b : rep.blocks) {
    for (std::size_t i = 0; i < rep.eps_grid.size(); ++i) {
      csv += b.block + "," + format_g17(rep.eps_grid[i]) + "," +
             std::to_string(rep.n_grid[i]) + "," + format_g17(b.dev[i]) + "," +
             format_g17(b.w_order) + "," + format_g17(b.ld_order) + "," +
             format_g17(b.slope) + "," + format_g17(b.ratio_obs) + "," +
             format_g17(b.ratio_pred) + "," + (b.pass ? "1" : "0") + "\n";
    }
  }
  write_text_atomic(path, csv);
}

}  // namespace hessfit
