#include "hessfit/moments.hpp"

#include <algorithm>
#include <cmath>

namespace hessfit {

double unit_ball_volume(int d) {
  if (d < 1) throw ValidationError("unit_ball_volume requires d >= 1");
  return std::exp(0.5 * d * std::log(M_PI) - std::lgamma(0.5 * d + 1.0));
}

double sphere_surface_moment(int q, const std::vector<int>& exps) {
  if (q < 1) throw ValidationError("sphere_surface_moment requires q >= 1");
  if (static_cast<int>(exps.size()) > q)
    throw ValidationError("more exponents than coordinates");
  int listed = 0;
  for (int e : exps) {
    if (e < 0) throw ValidationError("negative exponent");
    if (e % 2 == 1) return 0.0;
    ++listed;
  }
  if (q == 1) {
    // S^0 = {-1,+1} with counting measure
    return 2.0;
  }
  // 2 prod Gamma((a_i+1)/2) / Gamma(sum (a_i+1)/2), unlisted coords have a=0
  double log_num = 0.0;
  double beta_sum = 0.0;
  for (int e : exps) {
    log_num += std::lgamma(0.5 * (e + 1));
    beta_sum += 0.5 * (e + 1);
  }
  const int rest = q - listed;
  log_num += rest * std::lgamma(0.5);
  beta_sum += rest * 0.5;
  return 2.0 * std::exp(log_num - std::lgamma(beta_sum));
}

namespace {

bool has_odd(const std::vector<int>& pat) {
  for (int e : pat)
    if (e % 2 == 1) return true;
  return false;
}

std::vector<int> sorted_desc(std::vector<int> v) {
  std::sort(v.begin(), v.end(), std::greater<int>());
  while (!v.empty() && v.back() == 0) v.pop_back();
  return v;
}

}  // namespace

double ball_moment(const BallMomentSpec& spec) {
  const int d = spec.d;
  if (d < 1) throw ValidationError("ball_moment requires d >= 1");
  if (has_odd(spec.pattern)) return 0.0;
  const std::vector<int> pat = sorted_desc(spec.pattern);
  if (static_cast<int>(pat.size()) > d)
    throw UnsupportedPattern("more coordinates than dimensions");
  const double B = unit_ball_volume(d);
  if (spec.domain == MomentDomain::Ball) {
    const double r = spec.r;
    if (pat == std::vector<int>{4})
      return 3.0 / ((d + 2.0) * (d + 4.0)) * B * std::pow(r, d + 4);
    if (pat == std::vector<int>{2, 2})
      return 1.0 / ((d + 2.0) * (d + 4.0)) * B * std::pow(r, d + 4);
    if (pat.empty()) return B * std::pow(r, d);  // plain volume
    throw UnsupportedPattern("ball pattern outside the closed-form table");
  }
  if (pat == std::vector<int>{4}) return 3.0 / (d + 2.0) * B;
  if (pat == std::vector<int>{2, 2}) return 1.0 / (d + 2.0) * B;
  if (pat == std::vector<int>{6}) return 15.0 / ((d + 2.0) * (d + 4.0)) * B;
  if (pat == std::vector<int>{4, 2}) return 3.0 / ((d + 2.0) * (d + 4.0)) * B;
  if (pat == std::vector<int>{2, 2, 2}) return 1.0 / ((d + 2.0) * (d + 4.0)) * B;
  if (pat == std::vector<int>{4, 4})
    return 9.0 / ((d + 2.0) * (d + 4.0) * (d + 6.0)) * B;
  throw UnsupportedPattern("sphere pattern outside the closed-form table");
}

namespace {

// one uniform point on S^{d-1}; uses counters [base, base + 2*ceil(d/2))
void sphere_point(const CounterRng& rng, std::uint64_t base, int d, Vec& out) {
  double n0, n1;
  for (int i = 0; i < d; i += 2) {
    rng.normal_pair(base + i, n0, n1);
    out[i] = n0;
    if (i + 1 < d) out[i + 1] = n1;
  }
  const double nrm = out.norm();
  if (nrm > 0) out /= nrm;
  else out[0] = 1.0;
}

McResult mc_reduce(const std::vector<double>& vals, double domain_measure) {
  const double n = static_cast<double>(vals.size());
  double mean = 0;
  for (double v : vals) mean += v;
  mean /= n;
  double var = 0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= (n - 1.0);
  McResult r;
  r.estimate = mean * domain_measure;
  r.stderr_ = std::sqrt(var / n) * domain_measure;
  return r;
}

}  // namespace

McResult mc_moment(const BallMomentSpec& spec, long n_samples, std::uint64_t seed) {
  if (n_samples < 1000) throw ValidationError("mc_moment requires n >= 1000");
  const int d = spec.d;
  const std::uint64_t key = stream_key(seed, "moment_oracles", "mc_moment");
  CounterRng rng{key};
  const int slots = 2 * ((d + 1) / 2) + 2;
  std::vector<double> vals(n_samples);
  const double ball_vol = unit_ball_volume(d) * std::pow(spec.r, d);
  const double area = d * unit_ball_volume(d);  // |S^{d-1}|
  parallel_for(n_samples, [&](std::int64_t i) {
    Vec x(d);
    const std::uint64_t base = static_cast<std::uint64_t>(i) * slots;
    sphere_point(rng, base, d, x);
    if (spec.domain == MomentDomain::Ball) {
      const double u = rng.u01(base + slots - 1);
      x *= spec.r * std::pow(u, 1.0 / d);
    }
    double g = 1.0;
    for (std::size_t c = 0; c < spec.pattern.size(); ++c)
      for (int e = 0; e < spec.pattern[c]; ++e) g *= x[static_cast<int>(c)];
    vals[i] = g;
  });
  return mc_reduce(vals, spec.domain == MomentDomain::Ball ? ball_vol : area);
}

McResult mc_ball_volume(int d, long n_samples, std::uint64_t seed) {
  if (n_samples < 1000) throw ValidationError("mc_ball_volume requires n >= 1000");
  const std::uint64_t key = stream_key(seed, "moment_oracles", "mc_ball_volume");
  CounterRng rng{key};
  std::vector<double> vals(n_samples);
  parallel_for(n_samples, [&](std::int64_t i) {
    double s = 0;
    const std::uint64_t base = static_cast<std::uint64_t>(i) * (d + 1);
    for (int c = 0; c < d; ++c) {
      const double x = 2.0 * rng.u01(base + c) - 1.0;
      s += x * x;
    }
    vals[i] = (s <= 1.0) ? 1.0 : 0.0;
  });
  return mc_reduce(vals, std::pow(2.0, d));
}

// ---------------------------------------------------------------------------
// Truncated-ball constants
// ---------------------------------------------------------------------------

namespace {

// angular prefactor: integral over S^{d-2} of (w_last)^{2k} dS
double ang_factor(int d, int k) {
  std::vector<int> e;
  if (k > 0) e.push_back(2 * k);
  return sphere_surface_moment(d - 1, e);
}

// radius at which the ray in direction with polar cosine u exits B_{1,delta}
double exit_radius(double u, double delta) {
  if (u >= -(1.0 - delta)) return 1.0;
  return (1.0 - delta) / (-u);
}

// integral over [a,b] of cos^m(phi) sin^s(phi) * exit(cos phi)^P / P dphi
double polar_integral(double a, double b, int m, int s, int P, double delta, int nodes) {
  const auto& xs = gl_nodes(nodes);
  const auto& ws = gl_weights(nodes);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double acc = 0;
  for (int i = 0; i < nodes; ++i) {
    const double phi = mid + half * xs[i];
    const double u = std::cos(phi);
    double g = std::pow(exit_radius(u, delta), P) / P;
    for (int e = 0; e < m; ++e) g *= u;
    const double sp = std::sin(phi);
    for (int e = 0; e < s; ++e) g *= sp;
    acc += ws[i] * g;
  }
  return acc * half;
}

// adaptive bisection with a 48-vs-64 node error estimate per panel
double adaptive_polar(double a, double b, int m, int s, int P, double delta,
                      double tol, int depth) {
  const double coarse = polar_integral(a, b, m, s, P, delta, 48);
  const double fine = polar_integral(a, b, m, s, P, delta, 64);
  if (std::abs(fine - coarse) <= tol) return fine;
  if (depth >= 40)
    throw QuadratureNotConverged("truncated-ball quadrature did not converge");
  const double mid = 0.5 * (a + b);
  return adaptive_polar(a, mid, m, s, P, delta, 0.5 * tol, depth + 1) +
         adaptive_polar(mid, b, m, s, P, delta, 0.5 * tol, depth + 1);
}

double truncated_radial(double delta, int m, int sin_pow, int P) {
  // split at the cutoff kink phi* = acos(-(1-delta)); the radial integral is
  // exact, leaving only the angular quadrature (tolerance 1e-9)
  const double tol = 1e-10;
  const double phi_star = (delta > 0 && delta < 1)
                              ? std::acos(-(1.0 - delta))
                              : (delta <= 0 ? M_PI : 0.5 * M_PI);
  if (phi_star >= M_PI - 1e-14)
    return adaptive_polar(0, M_PI, m, sin_pow, P, delta, tol, 0);
  return adaptive_polar(0, phi_star, m, sin_pow, P, delta, tol, 0) +
         adaptive_polar(phi_star, M_PI, m, sin_pow, P, delta, tol, 0);
}

}  // namespace

double truncated_C(int d, double delta, int m, int k2) {
  if (d < 2) throw ValidationError("truncated_C requires d >= 2");
  if (delta < 0 || delta >= 1) throw ValidationError("delta must be in [0,1)");
  if (m < 0 || k2 < 0 || k2 % 2 != 0) throw ValidationError("bad (m, 2k) pattern");
  const int k = k2 / 2;
  const int P = d + m + k2;
  return ang_factor(d, k) * truncated_radial(delta, m, d - 2 + k2, P);
}

double truncated_C022(int d, double delta) {
  if (d < 3)
    throw ValidationError("C_{0,2,2} needs two tangential coordinates (d >= 3)");
  if (delta < 0 || delta >= 1) throw ValidationError("delta must be in [0,1)");
  const double ang = sphere_surface_moment(d - 1, {2, 2});
  return ang * truncated_radial(delta, 0, d - 2 + 4, d + 4);
}

namespace {

McResult mc_truncated(int d, double delta, long n, std::uint64_t seed,
                      const std::function<double(const Vec&)>& g) {
  if (n < 1000) throw ValidationError("mc oracle requires n >= 1000");
  const std::uint64_t key = stream_key(seed, "moment_oracles", "mc_truncated");
  CounterRng rng{key};
  const int slots = 2 * ((d + 1) / 2) + 2;
  std::vector<double> vals(n);
  parallel_for(n, [&](std::int64_t i) {
    Vec x(d);
    const std::uint64_t base = static_cast<std::uint64_t>(i) * slots;
    sphere_point(rng, base, d, x);
    x *= std::pow(rng.u01(base + slots - 1), 1.0 / d);
    vals[i] = (x[d - 1] > -(1.0 - delta)) ? g(x) : 0.0;
  });
  return mc_reduce(vals, unit_ball_volume(d));
}

}  // namespace

McResult mc_truncated_C(int d, double delta, int m, int k2, long n, std::uint64_t seed) {
  return mc_truncated(d, delta, n, seed, [&](const Vec& x) {
    double g = 1.0;
    for (int e = 0; e < m; ++e) g *= x[d - 1];
    for (int e = 0; e < k2; ++e) g *= x[d - 2];
    return g;
  });
}

McResult mc_truncated_C022(int d, double delta, long n, std::uint64_t seed) {
  if (d < 3) throw ValidationError("C_{0,2,2} needs d >= 3");
  return mc_truncated(d, delta, n, seed, [&](const Vec& x) {
    const double a = x[d - 2], b = x[d - 3];
    return a * a * b * b;
  });
}

GreekSet greeks(int d, double delta, double eps) {
  GreekSet g;
  g.d = d;
  g.delta = delta;
  g.eps = eps;
  g.C00 = truncated_C(d, delta, 0, 0);
  g.C10 = truncated_C(d, delta, 1, 0);
  g.C20 = truncated_C(d, delta, 2, 0);
  g.C02 = truncated_C(d, delta, 0, 2);
  g.C30 = truncated_C(d, delta, 3, 0);
  g.C12 = truncated_C(d, delta, 1, 2);
  g.C40 = truncated_C(d, delta, 4, 0);
  g.C22 = truncated_C(d, delta, 2, 2);
  g.C04 = truncated_C(d, delta, 0, 4);
  // C_{0,2,2} is used by the paper without a standalone definition; we read
  // it as two distinct squared tangential components, which degenerates to
  // C_{2,2} when d = 2 (the only off-diagonal pair then involves x_d).
  g.C022 = (d >= 3) ? truncated_C022(d, delta) : g.C22;
  const double e1 = eps, e2 = eps * eps;
  const double e3 = e2 * eps, e4 = e2 * e2;
  g.gamma1 = e1 * g.C10 / g.C00;
  g.alpha1 = e2 * g.C20 / g.C00;
  g.alpha2 = e2 * g.C02 / g.C00;
  g.mu1 = e3 * g.C30 / g.C00;
  g.mu2 = e3 * g.C12 / g.C00;
  g.beta1 = e4 * g.C40 / g.C00;
  g.beta2 = e4 * g.C22 / g.C00;
  g.beta3 = e4 * g.C04 / g.C00;
  g.beta4 = e4 * g.C022 / g.C00;
  return g;
}

// ---------------------------------------------------------------------------
// Leading Gram matrices
// ---------------------------------------------------------------------------

namespace {

// D-block pair list in design order: (s,t), 0-based, s < t, row-major
std::vector<std::pair<int, int>> pair_list(int d) {
  std::vector<std::pair<int, int>> pr;
  for (int s = 0; s < d; ++s)
    for (int t = s + 1; t < d; ++t) pr.emplace_back(s, t);
  return pr;
}

}  // namespace

GramOracle build_L0_truncated(const GreekSet& g) {
  const int d = g.d;
  const long m = design_cols(d);
  const auto pr = pair_list(d);
  Mat L = Mat::Zero(m, m);
  const long B = 1, C = 1 + d, D = 1 + 2L * d;
  L(0, 0) = 1.0;
  // A-B: first moments, nonzero only in the depth direction
  L(0, B + d - 1) = g.gamma1;
  // A-C: second moments
  for (int s = 0; s < d; ++s) L(0, C + s) = (s == d - 1) ? g.alpha1 : g.alpha2;
  // B-B
  for (int s = 0; s < d; ++s) L(B + s, B + s) = (s == d - 1) ? g.alpha1 : g.alpha2;
  // B-C: row u_d only
  for (int t = 0; t < d; ++t) L(B + d - 1, C + t) = (t == d - 1) ? g.mu1 : g.mu2;
  // B-D: mu2 where the pair is (r, d) and the row is u_r
  for (std::size_t c = 0; c < pr.size(); ++c)
    if (pr[c].second == d - 1) L(B + pr[c].first, D + c) = g.mu2;
  // C-C
  for (int s = 0; s < d; ++s)
    for (int t = 0; t < d; ++t) {
      double v;
      if (s == t) v = (s == d - 1) ? g.beta1 : g.beta3;
      else if (s == d - 1 || t == d - 1) v = g.beta2;
      else v = g.beta4;
      L(C + s, C + t) = v;
    }
  // D-D diagonal
  for (std::size_t c = 0; c < pr.size(); ++c)
    L(D + c, D + c) = (pr[c].second == d - 1) ? g.beta2 : g.beta4;
  // mirror
  Mat full = L.selfadjointView<Eigen::Upper>();
  GramOracle out;
  out.variant = GramVariant::TruncatedHeuristic;
  out.d = d;
  out.eps = g.eps;
  out.matrix = full;
  return out;
}

GramOracle build_L0_interior(int d, double eps, double rho, const Vec& grad_rho) {
  if (grad_rho.size() != d) throw DimensionMismatch("grad_rho must have length d");
  if (!(rho > 0)) throw ValidationError("rho must be positive");
  const long m = design_cols(d);
  const double alpha = eps * eps / (d + 2.0);
  const double beta = std::pow(eps, 4) / ((d + 2.0) * (d + 4.0));
  Mat L = Mat::Zero(m, m);
  const long B = 1, C = 1 + d, D = 1 + 2L * d;
  L(0, 0) = 1.0;
  for (int s = 0; s < d; ++s) {
    L(0, B + s) = alpha * grad_rho[s] / rho;
    L(0, C + s) = alpha;
    L(B + s, B + s) = alpha;
  }
  for (int s = 0; s < d; ++s)
    for (int t = 0; t < d; ++t)
      L(B + s, C + t) = beta * (grad_rho[s] / rho) * (s == t ? 3.0 : 1.0);
  for (int s = 0; s < d; ++s)
    for (int t = 0; t < d; ++t) L(C + s, C + t) = beta * (s == t ? 3.0 : 1.0);
  for (long c = D; c < m; ++c) L(c, c) = beta;
  Mat full = L.selfadjointView<Eigen::Upper>();
  GramOracle out;
  out.variant = GramVariant::InteriorDirect;
  out.d = d;
  out.eps = eps;
  out.matrix = full;
  return out;
}

// ---------------------------------------------------------------------------
// Sphere tensor integrals
// ---------------------------------------------------------------------------

namespace {

void require_symmetric(const Mat& T, const char* what) {
  if ((T - T.transpose()).lpNorm<Eigen::Infinity>() > 1e-12 * (1.0 + T.norm()))
    throw NotSymmetric(what);
}

void validate_tensor_inputs(SphereTensorKind kind, const SphereTensorInputs& in) {
  const bool needs_T = kind == SphereTensorKind::TraceT ||
                       kind == SphereTensorKind::TE1Sq ||
                       kind == SphereTensorKind::TE1E2;
  if (needs_T) {
    if (in.T.rows() != in.d || in.T.cols() != in.d)
      throw DimensionMismatch("T must be d x d");
    require_symmetric(in.T, "T is not symmetric");
  } else {
    if (in.II.empty()) throw DimensionMismatch("II array is empty");
    for (const auto& h : in.II) {
      if (h.rows() != in.d || h.cols() != in.d)
        throw DimensionMismatch("II components must be d x d");
      require_symmetric(h, "II is not symmetric");
    }
  }
}

}  // namespace

Mat gauss_codazzi_ricci(const std::vector<Mat>& II) {
  const int d = static_cast<int>(II.front().rows());
  Mat H_dot(d, d);
  Mat sum_sq = Mat::Zero(d, d);
  std::vector<double> trH(II.size());
  H_dot.setZero();
  for (std::size_t a = 0; a < II.size(); ++a) {
    trH[a] = II[a].trace();
    H_dot += trH[a] * II[a];
    sum_sq += II[a] * II[a];
  }
  return H_dot - sum_sq;
}

double sphere_tensor_integral(SphereTensorKind kind, const SphereTensorInputs& in) {
  validate_tensor_inputs(kind, in);
  const int d = in.d;
  const double B = unit_ball_volume(d);
  switch (kind) {
    case SphereTensorKind::TraceT:
      return B * in.T.trace();
    case SphereTensorKind::TE1Sq:
      return B / (d + 2.0) * (2.0 * in.T(0, 0) + in.T.trace());
    case SphereTensorKind::TE1E2:
      return 2.0 * B / (d + 2.0) * in.T(0, 1);
    default:
      break;
  }
  double normA2 = 0, normH2 = 0;
  Mat h_dot = Mat::Zero(d, d);
  for (const auto& h : in.II) {
    normA2 += h.squaredNorm();
    h_dot += h.trace() * h;
    normH2 += h.trace() * h.trace();
  }
  const Mat ric = gauss_codazzi_ricci(in.II);
  switch (kind) {
    case SphereTensorKind::SffSq:
      return B / (d + 2.0) * (2.0 * normA2 + normH2);
    case SphereTensorKind::SffSqE1Sq:
      return B / ((d + 2.0) * (d + 4.0)) *
             (12.0 * h_dot(0, 0) - 8.0 * ric(0, 0) + 2.0 * normA2 + normH2);
    case SphereTensorKind::SffSqE1E2:
      return B / ((d + 2.0) * (d + 4.0)) * (12.0 * h_dot(0, 1) - 8.0 * ric(0, 1));
    case SphereTensorKind::AijCross:
      return B / (d + 2.0) * (3.0 * h_dot(in.s, in.l) - 2.0 * ric(in.s, in.l));
    default:
      break;
  }
  throw ValidationError("unhandled sphere tensor kind");
}

McResult mc_sphere_tensor(SphereTensorKind kind, const SphereTensorInputs& in,
                          long n_samples, std::uint64_t seed) {
  validate_tensor_inputs(kind, in);
  const int d = in.d;
  const std::uint64_t key = stream_key(seed, "moment_oracles", "mc_sphere_tensor");
  CounterRng rng{key};
  const int slots = 2 * ((d + 1) / 2);
  std::vector<double> vals(n_samples);
  parallel_for(n_samples, [&](std::int64_t i) {
    Vec th(d);
    sphere_point(rng, static_cast<std::uint64_t>(i) * slots, d, th);
    double g = 0;
    switch (kind) {
      case SphereTensorKind::TraceT: g = th.dot(in.T * th); break;
      case SphereTensorKind::TE1Sq: g = th.dot(in.T * th) * th[0] * th[0]; break;
      case SphereTensorKind::TE1E2: g = th.dot(in.T * th) * th[0] * th[1]; break;
      case SphereTensorKind::SffSq:
      case SphereTensorKind::SffSqE1Sq:
      case SphereTensorKind::SffSqE1E2: {
        double s2 = 0;
        for (const auto& h : in.II) {
          const double v = th.dot(h * th);
          s2 += v * v;
        }
        if (kind == SphereTensorKind::SffSq) g = s2;
        else if (kind == SphereTensorKind::SffSqE1Sq) g = s2 * th[0] * th[0];
        else g = s2 * th[0] * th[1];
        break;
      }
      case SphereTensorKind::AijCross: {
        double dot = 0;
        for (const auto& h : in.II) {
          const double a = th.dot(h * th);
          const double b = (h * th)[in.s];
          dot += a * b;
        }
        g = dot * th[in.l];
        break;
      }
    }
    vals[i] = g;
  });
  return mc_reduce(vals, d * unit_ball_volume(d));
}

// ---------------------------------------------------------------------------
// Interior normalized-moment oracle
// ---------------------------------------------------------------------------

double interior_moment_oracle(int d, double eps, const FieldData& f,
                              const RhoData& rho, const CurvatureInputs& curv,
                              InteriorMoment which, int j, int l) {
  const double alpha = eps * eps / (d + 2.0);
  const double beta = std::pow(eps, 4) / ((d + 2.0) * (d + 4.0));
  const double ir = 1.0 / rho.rho;
  switch (which) {
    case InteriorMoment::MeanF:
      return f.f + 0.5 * alpha * (f.lap + 2.0 * ir * f.grad.dot(rho.grad));
    case InteriorMoment::LinF:
      return alpha * (f.grad[j] + ir * f.f * rho.grad[j]);
    case InteriorMoment::SqF: {
      if (!curv.present) throw MissingCurvatureData("SqF needs curvature scalars");
      double v = alpha * f.f + beta * (f.hess(j, j) + 0.5 * f.lap);
      v += beta * ir *
           (2.0 * f.grad[j] * rho.grad[j] + f.grad.dot(rho.grad) +
            f.f * rho.hess(j, j) - f.f * rho.lap / (d + 2.0));
      v += beta * (2.0 * curv.lambda - 0.5 * curv.h_dot_ii(j, j)) * f.f;
      return v;
    }
    case InteriorMoment::CrossF: {
      if (!curv.present) throw MissingCurvatureData("CrossF needs curvature scalars");
      if (j == l) throw ValidationError("CrossF requires distinct indices");
      double v = beta * f.hess(j, l);
      v += beta * ir *
           (f.grad[j] * rho.grad[l] + f.grad[l] * rho.grad[j] + f.f * rho.hess(j, l));
      v += beta * (-0.5 * curv.h_dot_ii(j, l)) * f.f;
      return v;
    }
    case InteriorMoment::CubicMixed:
      return (j == l ? 3.0 : 1.0) * beta * ir * rho.grad[j];
    case InteriorMoment::QuarticPair:
      return (j == l ? 3.0 : 1.0) * beta;
  }
  throw ValidationError("unhandled interior moment");
}

}  // namespace hessfit
