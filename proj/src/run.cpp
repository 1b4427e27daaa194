#include <cmath>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>

#include "hessfit/io.hpp"

namespace hessfit {

namespace {

std::string csv_cell(double v) { return format_g17(v); }

struct ReportRow {
  std::string name;
  std::string closed, quad, mc, mc_se;
  bool pass = true;
};

// |closed - mc| within 4 sigma (with a tiny absolute floor for exact zeros)
bool within_4s(double ref, const McResult& mc) {
  return std::abs(ref - mc.estimate) <= 4.0 * mc.stderr_ + 1e-12;
}

void named_moment_rows(std::vector<ReportRow>& rows, int d, long n_mc,
                       std::uint64_t seed) {
  {
    ReportRow r;
    r.name = "ball_volume_d" + std::to_string(d);
    const double closed = unit_ball_volume(d);
    const McResult mc = mc_ball_volume(d, n_mc, seed);
    r.closed = csv_cell(closed);
    r.mc = csv_cell(mc.estimate);
    r.mc_se = csv_cell(mc.stderr_);
    r.pass = within_4s(closed, mc);
    rows.push_back(r);
  }
  struct Named {
    const char* name;
    MomentDomain dom;
    std::vector<int> pat;
  };
  const std::vector<Named> named = {
      {"II_B", MomentDomain::Ball, {4}},      {"JI_B", MomentDomain::Ball, {2, 2}},
      {"II_S", MomentDomain::Sphere, {4}},    {"JI_S", MomentDomain::Sphere, {2, 2}},
      {"III_S", MomentDomain::Sphere, {6}},   {"JJI_S", MomentDomain::Sphere, {4, 2}},
      {"KJI_S", MomentDomain::Sphere, {2, 2, 2}},
      {"JJII_S", MomentDomain::Sphere, {4, 4}},
  };
  for (const auto& nm : named) {
    if (static_cast<int>(nm.pat.size()) > d) continue;
    BallMomentSpec spec;
    spec.d = d;
    spec.r = 1.0;
    spec.domain = nm.dom;
    spec.pattern = nm.pat;
    ReportRow r;
    r.name = std::string(nm.name) + "_d" + std::to_string(d);
    const double closed = ball_moment(spec);
    // independent algebraic route through the gamma-function surface moments
    double quad;
    if (nm.dom == MomentDomain::Sphere) {
      quad = sphere_surface_moment(d, nm.pat);
    } else {
      std::vector<int> pat = nm.pat;
      int total = 0;
      for (int e : pat) total += e;
      quad = sphere_surface_moment(d, pat) / (d + total);
    }
    const McResult mc = mc_moment(spec, n_mc, seed);
    r.closed = csv_cell(closed);
    r.quad = csv_cell(quad);
    r.mc = csv_cell(mc.estimate);
    r.mc_se = csv_cell(mc.stderr_);
    r.pass = within_4s(closed, mc) && std::abs(closed - quad) <= 1e-10 * (1 + std::abs(closed));
    rows.push_back(r);
  }
}

void greek_rows(std::vector<ReportRow>& rows, const MomentsConfig& cfg, long n_mc) {
  const GreekSet g = greeks(cfg.d, cfg.delta, cfg.eps);
  const double e2 = cfg.eps * cfg.eps, e3 = e2 * cfg.eps, e4 = e2 * e2;
  struct Item {
    const char* name;
    double scale;
    double quad_value;
    int m, k2;
    bool is022;
    double closed_delta0;
  };
  const int d = cfg.d;
  const double a0 = e2 / (d + 2.0);
  const double b0_big = 3.0 * e4 / ((d + 2.0) * (d + 4.0));
  const double b0 = e4 / ((d + 2.0) * (d + 4.0));
  const std::vector<Item> items = {
      {"gamma1", cfg.eps, g.gamma1, 1, 0, false, 0.0},
      {"alpha1", e2, g.alpha1, 2, 0, false, a0},
      {"alpha2", e2, g.alpha2, 0, 2, false, a0},
      {"mu1", e3, g.mu1, 3, 0, false, 0.0},
      {"mu2", e3, g.mu2, 1, 2, false, 0.0},
      {"beta1", e4, g.beta1, 4, 0, false, b0_big},
      {"beta2", e4, g.beta2, 2, 2, false, b0},
      {"beta3", e4, g.beta3, 0, 4, false, b0_big},
      {"beta4", e4, g.beta4, 0, 0, true, b0},
  };
  for (const auto& it : items) {
    ReportRow r;
    r.name = it.name;
    r.quad = csv_cell(it.quad_value);
    McResult mc_num;
    if (it.is022) {
      mc_num = (d >= 3) ? mc_truncated_C022(d, cfg.delta, n_mc, cfg.seed)
                        : mc_truncated_C(d, cfg.delta, 2, 2, n_mc, cfg.seed);
    } else {
      mc_num = mc_truncated_C(d, cfg.delta, it.m, it.k2, n_mc, cfg.seed);
    }
    // scale the raw C estimate by eps powers over the quadrature C00
    McResult mc;
    mc.estimate = it.scale * mc_num.estimate / g.C00;
    mc.stderr_ = it.scale * mc_num.stderr_ / g.C00;
    r.mc = csv_cell(mc.estimate);
    r.mc_se = csv_cell(mc.stderr_);
    r.pass = within_4s(it.quad_value, mc);
    if (cfg.delta == 0.0) {
      r.closed = csv_cell(it.closed_delta0);
      r.pass = r.pass && std::abs(it.quad_value - it.closed_delta0) <= 1e-8;
    }
    rows.push_back(r);
  }
}

void tensor_rows(std::vector<ReportRow>& rows, const MomentsConfig& cfg, long n_mc) {
  const int d = cfg.d;
  CounterRng rng{stream_key(cfg.seed, "cli_io", "moments_tensors")};
  std::uint64_t ctr = 0;
  auto rand_sym = [&](int dim) {
    Mat T(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = i; j < dim; ++j) {
        T(i, j) = 2.0 * rng.u01(ctr++) - 1.0;
        T(j, i) = T(i, j);
      }
    return T;
  };
  SphereTensorInputs in;
  in.d = d;
  in.T = rand_sym(d);
  in.II = {rand_sym(d), rand_sym(d)};
  in.s = 0;
  in.l = 1;
  const std::vector<std::pair<const char*, SphereTensorKind>> kinds = {
      {"tensor_trace", SphereTensorKind::TraceT},
      {"tensor_e1sq", SphereTensorKind::TE1Sq},
      {"tensor_e1e2", SphereTensorKind::TE1E2},
      {"sff_sq", SphereTensorKind::SffSq},
      {"sff_sq_e1sq", SphereTensorKind::SffSqE1Sq},
      {"sff_sq_e1e2", SphereTensorKind::SffSqE1E2},
      {"sff_cross", SphereTensorKind::AijCross},
  };
  for (const auto& [name, kind] : kinds) {
    if (d < 2) continue;
    ReportRow r;
    r.name = name;
    const double closed = sphere_tensor_integral(kind, in);
    const McResult mc = mc_sphere_tensor(kind, in, n_mc, cfg.seed);
    r.closed = csv_cell(closed);
    r.mc = csv_cell(mc.estimate);
    r.mc_se = csv_cell(mc.stderr_);
    r.pass = within_4s(closed, mc);
    rows.push_back(r);
  }
}

}  // namespace

std::string moments_report_csv(const MomentsConfig& cfg) {
  std::vector<ReportRow> rows;
  named_moment_rows(rows, cfg.d, cfg.mc_samples, cfg.seed);
  greek_rows(rows, cfg, cfg.mc_samples);
  tensor_rows(rows, cfg, cfg.mc_samples);
  std::string csv = "name,closed_form,quadrature,mc,mc_stderr,pass\n";
  for (const auto& r : rows) {
    csv += r.name + "," + r.closed + "," + r.quad + "," + r.mc + "," + r.mc_se +
           "," + (r.pass ? "1" : "0") + "\n";
  }
  return csv;
}

namespace {

Vec parse_query_point(const std::string& s, const PointCloud& cloud) {
  if (s.rfind("index:", 0) == 0) {
    const long i = std::stol(s.substr(6));
    if (i < 0 || i >= cloud.n()) throw ValidationError("query index out of range");
    return cloud.points.row(i).transpose();
  }
  std::vector<double> vals;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == ',') {
      vals.push_back(parse_double(std::string_view(s).substr(start, i - start)));
      start = i + 1;
    }
  }
  if (static_cast<int>(vals.size()) != cloud.p())
    throw ValidationError("query point arity != cloud dimension");
  Vec z(cloud.p());
  for (int i = 0; i < cloud.p(); ++i) z[i] = vals[i];
  return z;
}

std::string estimate_json(const HessianEstimate& est) {
  std::string s = "{\n  \"f0\": " + format_g17(est.f0) + ",\n  \"grad\": [";
  for (long i = 0; i < est.grad.size(); ++i) {
    if (i) s += ", ";
    s += format_g17(est.grad[i]);
  }
  s += "],\n  \"hess\": [";
  for (long i = 0; i < est.hess.rows(); ++i) {
    if (i) s += ", ";
    s += "[";
    for (long j = 0; j < est.hess.cols(); ++j) {
      if (j) s += ", ";
      s += format_g17(est.hess(i, j));
    }
    s += "]";
  }
  s += "],\n  \"k_z\": " + std::to_string(est.k_z) +
       ",\n  \"cond\": " + format_g17(est.cond) + ",\n  \"basis\": [";
  for (long i = 0; i < est.basis.rows(); ++i) {
    if (i) s += ", ";
    s += "[";
    for (long j = 0; j < est.basis.cols(); ++j) {
      if (j) s += ", ";
      s += format_g17(est.basis(i, j));
    }
    s += "]";
  }
  s += "]\n}\n";
  return s;
}

void run_sample(const RunConfig& rc) {
  const SampleConfig& c = rc.sample;
  PointCloud cloud = sample(c.model, c.density, c.n, c.seed);
  Json meta = sample_config_to_json(c);
  meta["model_id"] = cloud.model_id;
  meta["density_id"] = cloud.density_id;
  meta["schema"] = "hessfit-cloud-v1";
  write_cloud_csv(rc.sample_out, cloud, meta);
  if (c.field && !rc.sample_fvals_out.empty()) {
    const Vec fv = c.field->values(c.model, cloud.points);
    write_vector_csv(rc.sample_fvals_out, fv, "f");
  }
}

void run_estimate(const RunConfig& rc) {
  const EstimateConfig& c = rc.estimate;
  PointCloud cloud = read_cloud_csv(c.cloud_path);
  Vec fvals;
  if (std::filesystem::exists(c.fvals)) {
    fvals = read_vector_csv(c.fvals);
  } else {
    const auto meta = read_cloud_meta(c.cloud_path);
    if (!meta)
      throw ValidationError("fvals is not a file and the cloud has no metadata "
                            "to resolve field '" + c.fvals + "'");
    const ManifoldModel m = model_from_json(meta->at("model"));
    fvals = field_by_name(m, c.fvals).values(m, cloud.points);
  }
  const Vec z = parse_query_point(c.z, cloud);
  const HessianEstimate est = estimate_at(cloud, fvals, z, c.eps, c.dim);
  write_text_atomic(c.out_path, estimate_json(est));
}

}  // namespace

int run(const RunConfig& config) {
  try {
    switch (config.sub) {
      case Subcommand::Sample:
        run_sample(config);
        break;
      case Subcommand::Estimate:
        run_estimate(config);
        break;
      case Subcommand::Moments:
        write_text_atomic(config.moments.report_path, moments_report_csv(config.moments));
        break;
      case Subcommand::Gram: {
        const GramReport rep = gram_deviation_experiment(config.gram.gram);
        write_gram_csv(rep, config.gram.out_path);
        break;
      }
      case Subcommand::Converge: {
        const ConvergenceReport rep = convergence_run(config.converge.conv);
        write_convergence_outputs(rep, config.converge.conv, config.converge.out_prefix);
        break;
      }
    }
  } catch (const ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace hessfit
