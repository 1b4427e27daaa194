#include "hessfit/manifold.hpp"

#include <cmath>

namespace hessfit {

namespace {

double unit_ball_vol(int d) {
  return std::exp(0.5 * d * std::log(M_PI) - std::lgamma(0.5 * d + 1.0));
}
// surface area of the unit sphere S^d embedded in R^{d+1}
double sphere_area(int d) {
  return 2.0 * std::exp(0.5 * (d + 1) * std::log(M_PI) - std::lgamma(0.5 * (d + 1)));
}

// Chebyshev T_k with first and second derivatives.
void cheb_eval(int k, double u, double& T, double& dT, double& ddT) {
  double t0 = 1, t1 = u, d0 = 0, d1 = 1, s0 = 0, s1 = 0;
  if (k == 0) { T = 1; dT = 0; ddT = 0; return; }
  for (int n = 1; n < k; ++n) {
    const double t2 = 2 * u * t1 - t0;
    const double d2 = 2 * t1 + 2 * u * d1 - d0;
    const double s2 = 4 * d1 + 2 * u * s1 - s0;
    t0 = t1; t1 = t2;
    d0 = d1; d1 = d2;
    s0 = s1; s1 = s2;
  }
  T = t1; dT = d1; ddT = s1;
}

double wrap_2pi(double a) {
  a = std::fmod(a, 2 * M_PI);
  if (a < 0) a += 2 * M_PI;
  return a;
}

}  // namespace

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::FlatDisk: return "flat_disk";
    case ModelKind::Sphere: return "sphere";
    case ModelKind::Hemisphere: return "hemisphere";
    case ModelKind::Cylinder: return "cylinder";
    case ModelKind::Torus: return "torus";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "flat_disk") return ModelKind::FlatDisk;
  if (s == "sphere") return ModelKind::Sphere;
  if (s == "hemisphere") return ModelKind::Hemisphere;
  if (s == "cylinder") return ModelKind::Cylinder;
  if (s == "torus") return ModelKind::Torus;
  throw ValidationError("unknown model '" + s + "'");
}

ManifoldModel ManifoldModel::flat_disk(int d, int p, double radius) {
  if (d < 1 || p < d) throw ValidationError("flat_disk requires 1 <= d <= p");
  if (radius <= 0) throw ValidationError("flat_disk radius must be positive");
  ManifoldModel m;
  m.kind_ = ModelKind::FlatDisk;
  m.d_ = d;
  m.p_ = p;
  m.radius_ = radius;
  return m;
}

ManifoldModel ManifoldModel::sphere(int d) {
  if (d < 1) throw ValidationError("sphere requires d >= 1");
  ManifoldModel m;
  m.kind_ = ModelKind::Sphere;
  m.d_ = d;
  m.p_ = d + 1;
  return m;
}

ManifoldModel ManifoldModel::hemisphere(int d) {
  if (d < 2) throw ValidationError("hemisphere requires d >= 2");
  ManifoldModel m;
  m.kind_ = ModelKind::Hemisphere;
  m.d_ = d;
  m.p_ = d + 1;
  return m;
}

ManifoldModel ManifoldModel::cylinder(double half_height) {
  if (half_height <= 0) throw ValidationError("cylinder half_height must be positive");
  ManifoldModel m;
  m.kind_ = ModelKind::Cylinder;
  m.d_ = 2;
  m.p_ = 3;
  m.half_height_ = half_height;
  return m;
}

ManifoldModel ManifoldModel::torus(double major, double minor) {
  if (!(major > minor && minor > 0))
    throw ValidationError("torus requires major > minor > 0");
  ManifoldModel m;
  m.kind_ = ModelKind::Torus;
  m.d_ = 2;
  m.p_ = 3;
  m.major_ = major;
  m.minor_ = minor;
  return m;
}

std::string ManifoldModel::id() const {
  std::string s = to_string(kind_) + "(d=" + std::to_string(d_) + ",p=" + std::to_string(p_);
  if (kind_ == ModelKind::FlatDisk) s += ",R=" + format_g17(radius_);
  if (kind_ == ModelKind::Cylinder) s += ",h=" + format_g17(half_height_);
  if (kind_ == ModelKind::Torus)
    s += ",R=" + format_g17(major_) + ",r=" + format_g17(minor_);
  return s + ")";
}

Vec ManifoldModel::chart_lo() const {
  Vec lo(d_);
  switch (kind_) {
    case ModelKind::FlatDisk: lo.setConstant(-radius_); break;
    case ModelKind::Sphere:
    case ModelKind::Hemisphere: lo.setZero(); break;
    case ModelKind::Cylinder: lo << 0.0, -half_height_; break;
    case ModelKind::Torus: lo.setZero(); break;
  }
  return lo;
}

Vec ManifoldModel::chart_hi() const {
  Vec hi(d_);
  switch (kind_) {
    case ModelKind::FlatDisk: hi.setConstant(radius_); break;
    case ModelKind::Sphere:
      hi.setConstant(M_PI);
      hi[d_ - 1] = 2 * M_PI;
      break;
    case ModelKind::Hemisphere:
      hi.setConstant(M_PI);
      hi[0] = 0.5 * M_PI;
      hi[d_ - 1] = 2 * M_PI;
      if (d_ == 1) hi[0] = M_PI;
      break;
    case ModelKind::Cylinder: hi << 2 * M_PI, half_height_; break;
    case ModelKind::Torus: hi << 2 * M_PI, 2 * M_PI; break;
  }
  return hi;
}

bool ManifoldModel::in_chart(const Vec& u) const {
  if (u.size() != d_) return false;
  const double tol = 1e-12;
  if (kind_ == ModelKind::FlatDisk) return u.norm() <= radius_ + tol;
  const Vec lo = chart_lo(), hi = chart_hi();
  for (int i = 0; i < d_; ++i)
    if (u[i] < lo[i] - tol || u[i] > hi[i] + tol) return false;
  return true;
}

Vec ManifoldModel::embed(const Vec& u) const {
  if (!in_chart(u)) throw OutOfChart("chart point outside domain of " + id());
  Vec x = Vec::Zero(p_);
  switch (kind_) {
    case ModelKind::FlatDisk:
      x.head(d_) = u;
      break;
    case ModelKind::Sphere:
    case ModelKind::Hemisphere: {
      double s = 1.0;
      for (int k = 0; k + 1 < d_; ++k) {
        x[d_ - k] = s * std::cos(u[k]);
        s *= std::sin(u[k]);
      }
      x[1] = s * std::sin(u[d_ - 1]);
      x[0] = s * std::cos(u[d_ - 1]);
      break;
    }
    case ModelKind::Cylinder:
      x << std::cos(u[0]), std::sin(u[0]), u[1];
      break;
    case ModelKind::Torus: {
      const double A = major_ + minor_ * std::cos(u[1]);
      x << A * std::cos(u[0]), A * std::sin(u[0]), minor_ * std::sin(u[1]);
      break;
    }
  }
  return x;
}

double ManifoldModel::sqrt_metric_det(const Vec& u) const {
  switch (kind_) {
    case ModelKind::FlatDisk: return 1.0;
    case ModelKind::Sphere:
    case ModelKind::Hemisphere: {
      double det = 1.0;
      for (int k = 0; k + 1 < d_; ++k)
        det *= std::pow(std::sin(u[k]), d_ - 1 - k);
      return std::abs(det);
    }
    case ModelKind::Cylinder: return 1.0;
    case ModelKind::Torus: return minor_ * (major_ + minor_ * std::cos(u[1]));
  }
  return 1.0;
}

Mat ManifoldModel::chart_metric(const Vec& u) const {
  Mat g = Mat::Identity(d_, d_);
  switch (kind_) {
    case ModelKind::FlatDisk:
    case ModelKind::Cylinder:
      break;
    case ModelKind::Sphere:
    case ModelKind::Hemisphere: {
      double s2 = 1.0;
      for (int k = 1; k < d_; ++k) {
        s2 *= std::sin(u[k - 1]) * std::sin(u[k - 1]);
        g(k, k) = s2;
      }
      break;
    }
    case ModelKind::Torus: {
      const double A = major_ + minor_ * std::cos(u[1]);
      g(0, 0) = A * A;
      g(1, 1) = minor_ * minor_;
      break;
    }
  }
  return g;
}

Vec ManifoldModel::chart_inverse(const Vec& z) const {
  require_on_manifold(z);
  Vec u(d_);
  switch (kind_) {
    case ModelKind::FlatDisk:
      u = z.head(d_);
      break;
    case ModelKind::Sphere:
    case ModelKind::Hemisphere: {
      double s = 1.0;
      for (int k = 0; k + 1 < d_; ++k) {
        double c = (s > 1e-300) ? z[d_ - k] / s : 1.0;
        c = std::min(1.0, std::max(-1.0, c));
        u[k] = std::acos(c);
        s *= std::sin(u[k]);
      }
      u[d_ - 1] = (s > 1e-300) ? wrap_2pi(std::atan2(z[1], z[0])) : 0.0;
      break;
    }
    case ModelKind::Cylinder:
      u << wrap_2pi(std::atan2(z[1], z[0])), z[2];
      break;
    case ModelKind::Torus: {
      const double rho = std::hypot(z[0], z[1]);
      u << wrap_2pi(std::atan2(z[1], z[0])),
          wrap_2pi(std::atan2(z[2], rho - major_));
      break;
    }
  }
  return u;
}

bool ManifoldModel::on_manifold(const Vec& z, double tol) const {
  if (z.size() != p_) return false;
  switch (kind_) {
    case ModelKind::FlatDisk: {
      if (z.tail(p_ - d_).lpNorm<Eigen::Infinity>() > tol) return false;
      return z.head(d_).norm() <= radius_ + tol;
    }
    case ModelKind::Sphere:
      return std::abs(z.norm() - 1.0) <= tol;
    case ModelKind::Hemisphere:
      return std::abs(z.norm() - 1.0) <= tol && z[p_ - 1] >= -tol;
    case ModelKind::Cylinder:
      return std::abs(std::hypot(z[0], z[1]) - 1.0) <= tol &&
             std::abs(z[2]) <= half_height_ + tol;
    case ModelKind::Torus: {
      const double rho = std::hypot(z[0], z[1]);
      return std::abs(std::hypot(rho - major_, z[2]) - minor_) <= tol;
    }
  }
  return false;
}

void ManifoldModel::require_on_manifold(const Vec& z, double tol) const {
  if (!on_manifold(z, tol))
    throw NotOnManifold("point is not on " + id());
}

Mat ManifoldModel::tangent_frame(const Vec& z) const {
  require_on_manifold(z);
  Mat E(p_, d_);
  switch (kind_) {
    case ModelKind::FlatDisk:
      E = Mat::Identity(p_, d_);
      break;
    case ModelKind::Sphere:
    case ModelKind::Hemisphere: {
      // Householder complement of the normal z: H e_p = z, columns 1..p-1 of H
      // span the tangent space.
      const Vec zn = z / z.norm();
      if (1.0 - zn[p_ - 1] < 1e-12) {
        E = Mat::Identity(p_, d_);
      } else {
        Vec v = zn;
        v[p_ - 1] -= 1.0;
        const Mat H = Mat::Identity(p_, p_) - (2.0 / v.squaredNorm()) * (v * v.transpose());
        E = H.leftCols(d_);
      }
      break;
    }
    case ModelKind::Cylinder: {
      const double nr = std::hypot(z[0], z[1]);
      E.col(0) << -z[1] / nr, z[0] / nr, 0.0;
      E.col(1) << 0.0, 0.0, 1.0;
      break;
    }
    case ModelKind::Torus: {
      const Vec u = chart_inverse(z);
      const double cu = std::cos(u[0]), su = std::sin(u[0]);
      const double cv = std::cos(u[1]), sv = std::sin(u[1]);
      E.col(0) << -su, cu, 0.0;
      E.col(1) << -sv * cu, -sv * su, cv;
      break;
    }
  }
  return E;
}

double ManifoldModel::boundary_distance(const Vec& z) const {
  require_on_manifold(z);
  switch (kind_) {
    case ModelKind::FlatDisk:
      return radius_ - z.head(d_).norm();
    case ModelKind::Hemisphere: {
      if (d_ == 1) {
        const double phi = std::atan2(z[1], z[0]);
        return std::min(std::abs(phi), M_PI - std::abs(phi));
      }
      const double c = std::min(1.0, std::max(-1.0, z[p_ - 1]));
      return std::asin(std::max(0.0, c));
    }
    default:
      return std::numeric_limits<double>::infinity();
  }
}

Vec ManifoldModel::ii_form(const Vec& z, const Vec& X, const Vec& Y) const {
  switch (kind_) {
    case ModelKind::FlatDisk:
      return Vec::Zero(p_);
    case ModelKind::Sphere:
    case ModelKind::Hemisphere:
      return -X.dot(Y) * z;
    case ModelKind::Cylinder: {
      Vec rhat(3), tau(3);
      const double nr = std::hypot(z[0], z[1]);
      rhat << z[0] / nr, z[1] / nr, 0.0;
      tau << -rhat[1], rhat[0], 0.0;
      return -(X.dot(tau) * Y.dot(tau)) * rhat;
    }
    case ModelKind::Torus: {
      const Vec u = chart_inverse(z);
      const double cu = std::cos(u[0]), su = std::sin(u[0]);
      const double cv = std::cos(u[1]), sv = std::sin(u[1]);
      const double A = major_ + minor_ * cv;
      Vec E1(3), E2(3), nu(3);
      E1 << -su, cu, 0.0;
      E2 << -sv * cu, -sv * su, cv;
      nu << cv * cu, cv * su, sv;
      const double k1 = -cv / A;
      const double k2 = -1.0 / minor_;
      return (k1 * X.dot(E1) * Y.dot(E1) + k2 * X.dot(E2) * Y.dot(E2)) * nu;
    }
  }
  return Vec::Zero(p_);
}

CurvatureData ManifoldModel::curvature(const Vec& z, const Mat& frame) const {
  CurvatureData c;
  const int d = d_;
  Vec H = Vec::Zero(p_);
  std::vector<std::vector<Vec>> ii(d, std::vector<Vec>(d));
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      ii[i][j] = ii_form(z, frame.col(i), frame.col(j));
      if (j != i) ii[j][i] = ii[i][j];
    }
  for (int i = 0; i < d; ++i) H += ii[i][i];
  c.h_dot_ii = Mat::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      c.h_dot_ii(i, j) = H.dot(ii[i][j]);
      c.norm_A_sq += ii[i][j].squaredNorm();
    }
  c.norm_H_sq = H.squaredNorm();
  c.lambda = (c.norm_H_sq - 2.0 * c.norm_A_sq) / (8.0 * (d + 2));
  return c;
}

Vec ManifoldModel::geodesic(const Vec& z, const Vec& w, double t) const {
  switch (kind_) {
    case ModelKind::FlatDisk:
      return z + t * w;
    case ModelKind::Sphere:
    case ModelKind::Hemisphere:
      return std::cos(t) * z + std::sin(t) * w;
    case ModelKind::Cylinder: {
      Vec u = chart_inverse(z);
      Vec tau(3);
      tau << -std::sin(u[0]), std::cos(u[0]), 0.0;
      const double a = w.dot(tau), b = w[2];
      Vec u2(2);
      u2 << u[0] + a * t, u[1] + b * t;
      u2[0] = wrap_2pi(u2[0]);
      return embed(u2);
    }
    case ModelKind::Torus: {
      // RK4 on the chart geodesic ODE; oracle-only path.
      Vec u = chart_inverse(z);
      const Mat E = tangent_frame(z);
      double s[4] = {u[0], u[1], w.dot(E.col(0)) / (major_ + minor_ * std::cos(u[1])),
                     w.dot(E.col(1)) / minor_};
      const int nsteps = std::max(8, static_cast<int>(std::ceil(std::abs(t) / 0.005)));
      const double h = t / nsteps;
      auto deriv = [&](const double* y, double* dy) {
        const double A = major_ + minor_ * std::cos(y[1]);
        dy[0] = y[2];
        dy[1] = y[3];
        dy[2] = 2.0 * (minor_ * std::sin(y[1]) / A) * y[2] * y[3];
        dy[3] = -(A * std::sin(y[1]) / minor_) * y[2] * y[2];
      };
      for (int i = 0; i < nsteps; ++i) {
        double k1[4], k2[4], k3[4], k4[4], tmp[4];
        deriv(s, k1);
        for (int j = 0; j < 4; ++j) tmp[j] = s[j] + 0.5 * h * k1[j];
        deriv(tmp, k2);
        for (int j = 0; j < 4; ++j) tmp[j] = s[j] + 0.5 * h * k2[j];
        deriv(tmp, k3);
        for (int j = 0; j < 4; ++j) tmp[j] = s[j] + h * k3[j];
        deriv(tmp, k4);
        for (int j = 0; j < 4; ++j)
          s[j] += h / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
      }
      Vec u2(2);
      u2 << wrap_2pi(s[0]), wrap_2pi(s[1]);
      return embed(u2);
    }
  }
  return z;
}

double ManifoldModel::volume() const {
  switch (kind_) {
    case ModelKind::FlatDisk: return unit_ball_vol(d_) * std::pow(radius_, d_);
    case ModelKind::Sphere: return sphere_area(d_);
    case ModelKind::Hemisphere: return 0.5 * sphere_area(d_);
    case ModelKind::Cylinder: return 2 * M_PI * 2 * half_height_;
    case ModelKind::Torus: return 4 * M_PI * M_PI * major_ * minor_;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// ScalarField
// ---------------------------------------------------------------------------

ScalarField ScalarField::constant(double c) {
  ScalarField f;
  f.kind_ = FieldKind::Constant;
  f.name_ = "constant";
  f.const_ = c;
  return f;
}

ScalarField ScalarField::ambient_linear(const Vec& c) {
  ScalarField f;
  f.kind_ = FieldKind::AmbientLinear;
  f.name_ = "ambient_linear";
  f.terms_.reserve(c.size());
  for (int i = 0; i < c.size(); ++i) {
    if (c[i] == 0.0) continue;
    PolyTerm t;
    t.coeff = c[i];
    t.exps.assign(c.size(), 0);
    t.exps[i] = 1;
    f.terms_.push_back(std::move(t));
  }
  return f;
}

ScalarField ScalarField::ambient_polynomial(std::vector<PolyTerm> terms,
                                            const std::string& name,
                                            FieldKind reported) {
  ScalarField f;
  f.kind_ = reported;
  f.name_ = name;
  f.terms_ = std::move(terms);
  return f;
}

ScalarField ScalarField::chart_polynomial(std::vector<PolyTerm> terms,
                                          const std::string& name) {
  ScalarField f;
  f.kind_ = FieldKind::ChartPolynomial;
  f.name_ = name;
  f.chart_based_ = true;
  f.terms_ = std::move(terms);
  return f;
}

ScalarField ScalarField::torus_trig(int k1, int k2) {
  ScalarField f;
  f.kind_ = FieldKind::TrigField;
  f.name_ = "trig_uv";
  f.chart_based_ = true;
  f.torus_trig_ = true;
  f.k1_ = k1;
  f.k2_ = k2;
  return f;
}

void ScalarField::ambient_eval(const Vec& x, double& F, Vec& grad, Mat& hess) const {
  const int p = static_cast<int>(x.size());
  F = const_;
  grad = Vec::Zero(p);
  hess = Mat::Zero(p, p);
  // value of a monomial with exponent vector e, with e[i]/e[j] reduced
  auto mono = [&](const std::vector<int>& exps, int di, int dj) {
    double v = 1.0;
    for (int q = 0; q < p; ++q) {
      int e = exps[q];
      if (q == di) --e;
      if (q == dj) --e;
      if (e < 0) return 0.0;
      for (int r = 0; r < e; ++r) v *= x[q];
    }
    return v;
  };
  for (const auto& t : terms_) {
    if (static_cast<int>(t.exps.size()) != p)
      throw DimensionMismatch("field term arity != point dim");
    F += t.coeff * mono(t.exps, -1, -1);
    for (int i = 0; i < p; ++i) {
      if (t.exps[i] == 0) continue;
      grad[i] += t.coeff * t.exps[i] * mono(t.exps, i, -1);
      if (t.exps[i] >= 2)
        hess(i, i) += t.coeff * t.exps[i] * (t.exps[i] - 1) * mono(t.exps, i, i);
      for (int j = i + 1; j < p; ++j) {
        if (t.exps[j] == 0) continue;
        const double h = t.coeff * t.exps[i] * t.exps[j] * mono(t.exps, i, j);
        hess(i, j) += h;
        hess(j, i) += h;
      }
    }
  }
}

void ScalarField::chart_eval(const Vec& u, double& F, Vec& grad, Mat& hess) const {
  const int d = static_cast<int>(u.size());
  if (torus_trig_) {
    const double c1 = std::cos(k1_ * u[0]), s1 = std::sin(k1_ * u[0]);
    const double c2 = std::cos(k2_ * u[1]), s2 = std::sin(k2_ * u[1]);
    F = c1 * c2;
    grad = Vec::Zero(2);
    hess = Mat::Zero(2, 2);
    grad[0] = -k1_ * s1 * c2;
    grad[1] = -k2_ * c1 * s2;
    hess(0, 0) = -k1_ * k1_ * c1 * c2;
    hess(0, 1) = hess(1, 0) = k1_ * k2_ * s1 * s2;
    hess(1, 1) = -k2_ * k2_ * c1 * c2;
    return;
  }
  ambient_eval(u, F, grad, hess);  // same polynomial machinery, chart arity
  (void)d;
}

double ScalarField::value(const ManifoldModel& m, const Vec& z) const {
  if (kind_ == FieldKind::Constant) return const_;
  if (chart_based_) {
    const Vec u = m.chart_inverse(z);
    double F;
    Vec g;
    Mat h;
    chart_eval(u, F, g, h);
    return F;
  }
  double F;
  Vec g;
  Mat h;
  ambient_eval(z, F, g, h);
  return F;
}

Vec ScalarField::values(const ManifoldModel& m, const MatR& points) const {
  Vec out(points.rows());
  // fast paths: constant and pure polynomial in ambient coordinates
  if (kind_ == FieldKind::Constant) {
    out.setConstant(const_);
    return out;
  }
  if (!chart_based_) {
    parallel_for(points.rows(), [&](std::int64_t i) {
      double v = const_;
      for (const auto& t : terms_) {
        double term = t.coeff;
        for (int c = 0; c < points.cols(); ++c)
          for (int e = 0; e < t.exps[c]; ++e) term *= points(i, c);
        v += term;
      }
      out[i] = v;
    });
    return out;
  }
  parallel_for(points.rows(), [&](std::int64_t i) {
    out[i] = value(m, points.row(i).transpose());
  });
  return out;
}

void ScalarField::true_derivatives(const ManifoldModel& m, const Vec& z,
                                   const Mat& frame, double& f, Vec& grad,
                                   Mat& hess) const {
  const int d = m.d();
  if (frame.rows() != m.p() || frame.cols() != d)
    throw DimensionMismatch("frame must be p x d");
  if ((frame.transpose() * frame - Mat::Identity(d, d)).norm() > 1e-8)
    throw FrameNotTangent("frame columns are not orthonormal");
  const Mat E = m.tangent_frame(z);
  if ((frame - E * (E.transpose() * frame)).norm() > 1e-8)
    throw FrameNotTangent("frame does not span the tangent space");

  if (kind_ == FieldKind::Constant) {
    f = const_;
    grad = Vec::Zero(d);
    hess = Mat::Zero(d, d);
    return;
  }

  if (!chart_based_) {
    double F;
    Vec gF;
    Mat hF;
    ambient_eval(z, F, gF, hF);
    f = F;
    grad = frame.transpose() * gF;
    hess = frame.transpose() * hF * frame;
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        const double corr = m.ii_form(z, frame.col(i), frame.col(j)).dot(gF);
        hess(i, j) += corr;
        if (j != i) hess(j, i) += corr;
      }
    return;
  }

  // chart-based field: compute (f, grad, hess) in the model's canonical
  // orthonormal chart frame, then rotate into the supplied frame.
  const Vec u = m.chart_inverse(z);
  double F;
  Vec gu;
  Mat hu;
  chart_eval(u, F, gu, hu);
  f = F;
  Vec grad0(d);
  Mat hess0(d, d);
  Mat E0(m.p(), d);
  switch (m.kind()) {
    case ModelKind::FlatDisk: {
      grad0 = gu;
      hess0 = hu;
      E0 = Mat::Identity(m.p(), d);
      break;
    }
    case ModelKind::Cylinder: {
      // flat isometric chart: (theta, h) are normal coordinates
      grad0 = gu;
      hess0 = hu;
      E0 = m.tangent_frame(z);
      break;
    }
    case ModelKind::Torus: {
      const double A = m.torus_major() + m.torus_minor() * std::cos(u[1]);
      const double r = m.torus_minor();
      const double sv = std::sin(u[1]);
      grad0.resize(2);
      grad0 << gu[0] / A, gu[1] / r;
      hess0.resize(2, 2);
      hess0(0, 0) = (hu(0, 0) - (A * sv / r) * gu[1]) / (A * A);
      hess0(0, 1) = hess0(1, 0) = (hu(0, 1) + (r * sv / A) * gu[0]) / (A * r);
      hess0(1, 1) = hu(1, 1) / (r * r);
      E0 = m.tangent_frame(z);
      break;
    }
    default:
      throw ValidationError("chart-based field not defined on " + m.id());
  }
  const Mat R = E0.transpose() * frame;  // d x d rotation within the tangent space
  grad = R.transpose() * grad0;
  hess = R.transpose() * hess0 * R;
}

double ScalarField::laplacian(const ManifoldModel& m, const Vec& z) const {
  double f;
  Vec g;
  Mat h;
  true_derivatives(m, z, m.tangent_frame(z), f, g, h);
  return h.trace();
}

std::vector<ScalarField> field_catalog(const ManifoldModel& m) {
  std::vector<ScalarField> out;
  const int d = m.d();
  const int p = m.p();
  auto term = [](double c, std::vector<int> e) {
    PolyTerm t;
    t.coeff = c;
    t.exps = std::move(e);
    return t;
  };
  auto e_of = [&](int arity, std::initializer_list<std::pair<int, int>> ce) {
    std::vector<int> e(arity, 0);
    for (auto [i, v] : ce) e[i] = v;
    return e;
  };
  switch (m.kind()) {
    case ModelKind::FlatDisk: {
      std::vector<PolyTerm> lin = {term(0.7, e_of(d, {{0, 1}}))};
      if (d >= 2) lin.push_back(term(-0.3, e_of(d, {{1, 1}})));
      out.push_back(ScalarField::chart_polynomial(lin, "chart_linear"));
      std::vector<PolyTerm> quad = {term(0.8, e_of(d, {{0, 2}})),
                                    term(0.2, e_of(d, {{0, 1}}))};
      if (d >= 2) {
        quad.push_back(term(-0.4, e_of(d, {{1, 2}})));
        quad.push_back(term(0.6, e_of(d, {{0, 1}, {1, 1}})));
        quad.push_back(term(-0.1, e_of(d, {{1, 1}})));
      }
      out.push_back(ScalarField::chart_polynomial(quad, "chart_quadratic"));
      std::vector<PolyTerm> cub = {term(1.0, e_of(d, {{0, 3}})),
                                   term(0.3, e_of(d, {{0, 2}}))};
      if (d >= 2) {
        cub.push_back(term(-2.0, e_of(d, {{0, 1}, {1, 2}})));
        cub.push_back(term(0.5, e_of(d, {{1, 1}})));
      }
      out.push_back(ScalarField::chart_polynomial(cub, "chart_cubic"));
      break;
    }
    case ModelKind::Sphere:
    case ModelKind::Hemisphere: {
      out.push_back(ScalarField::ambient_polynomial(
          {term(1.0, e_of(p, {{p - 1, 1}}))}, "ambient_axis", FieldKind::AmbientLinear));
      std::vector<PolyTerm> mixed;
      Vec c(p);
      for (int i = 0; i < p; ++i) c[i] = i + 1.0;
      c[p - 1] = -c[p - 1];
      c /= c.norm();
      for (int i = 0; i < p; ++i) mixed.push_back(term(c[i], e_of(p, {{i, 1}})));
      out.push_back(ScalarField::ambient_polynomial(mixed, "ambient_mixed",
                                                    FieldKind::AmbientLinear));
      // cos(2*polar angle) = 2 x_p^2 - 1, smooth on the closed sphere
      out.push_back(ScalarField::ambient_polynomial(
          {term(2.0, e_of(p, {{p - 1, 2}})), term(-1.0, e_of(p, {}))}, "cheb2",
          FieldKind::TrigField));
      break;
    }
    case ModelKind::Cylinder: {
      std::vector<PolyTerm> mixed = {term(1.0, e_of(3, {{0, 1}})),
                                     term(-0.7, e_of(3, {{1, 1}})),
                                     term(0.5, e_of(3, {{2, 1}}))};
      out.push_back(ScalarField::ambient_polynomial(mixed, "ambient_mixed",
                                                    FieldKind::AmbientLinear));
      // cos(2 theta)(1 + h/2) on the unit cylinder
      out.push_back(ScalarField::ambient_polynomial(
          {term(1.0, e_of(3, {{0, 2}})), term(-1.0, e_of(3, {{1, 2}})),
           term(0.5, e_of(3, {{0, 2}, {2, 1}})), term(-0.5, e_of(3, {{1, 2}, {2, 1}}))},
          "ring2", FieldKind::TrigField));
      // sin(theta) h^2
      out.push_back(ScalarField::ambient_polynomial(
          {term(1.0, e_of(3, {{1, 1}, {2, 2}}))}, "ring_h2", FieldKind::TrigField));
      break;
    }
    case ModelKind::Torus: {
      out.push_back(ScalarField::ambient_polynomial(
          {term(1.0, e_of(3, {{2, 1}}))}, "ambient_z", FieldKind::AmbientLinear));
      out.push_back(ScalarField::ambient_polynomial(
          {term(1.0, e_of(3, {{0, 1}}))}, "ambient_x", FieldKind::AmbientLinear));
      out.push_back(ScalarField::torus_trig(1, 2));
      break;
    }
  }
  return out;
}

ScalarField field_by_name(const ManifoldModel& m, const std::string& name) {
  if (name == "constant") return ScalarField::constant(1.0);
  for (auto& f : field_catalog(m))
    if (f.name() == name) return f;
  throw ValidationError("field '" + name + "' not in the catalog of " + m.id());
}

// ---------------------------------------------------------------------------
// DensityModel
// ---------------------------------------------------------------------------

namespace {

// 1-D reduction of the bump integral, see README.
double bump_integral(const ManifoldModel& m, int k) {
  const int n = 192;
  const auto& xs = gl_nodes(n);
  const auto& ws = gl_weights(n);
  switch (m.kind()) {
    case ModelKind::FlatDisk: {
      const int d = m.d();
      const double R = m.disk_radius();
      if (d == 1) {
        double s = 0;
        for (int i = 0; i < n; ++i) s += ws[i] * std::cos(k * R * xs[i]);
        return s * R;
      }
      const double cs = unit_ball_vol(d - 1);
      double s = 0;
      for (int i = 0; i < n; ++i) {
        const double t = R * xs[i];
        s += ws[i] * std::cos(k * t) * cs * std::pow(R * R - t * t, 0.5 * (d - 1));
      }
      return s * R;
    }
    case ModelKind::Sphere:
    case ModelKind::Hemisphere: {
      const int d = m.d();
      const double hi = (m.kind() == ModelKind::Hemisphere && d >= 2) ? 0.5 * M_PI : M_PI;
      const double ring = (d >= 2) ? sphere_area(d - 1) : 1.0;
      double s = 0;
      for (int i = 0; i < n; ++i) {
        const double phi = 0.5 * hi * (xs[i] + 1.0);
        double T, dT, ddT;
        cheb_eval(k, std::cos(phi), T, dT, ddT);
        const double jac = (d >= 2) ? std::pow(std::sin(phi), d - 1) : 1.0;
        s += ws[i] * T * jac;
      }
      return s * 0.5 * hi * ring;
    }
    case ModelKind::Cylinder:
    case ModelKind::Torus:
      return 0.0;  // integer-frequency bump integrates to zero over the angle
  }
  return 0.0;
}

}  // namespace

DensityModel DensityModel::uniform(const ManifoldModel& m) {
  DensityModel r;
  r.kind_ = DensityKind::Uniform;
  r.norm_ = m.volume();
  return r;
}

DensityModel DensityModel::smooth_bump(const ManifoldModel& m, double a, int mode) {
  if (std::abs(a) >= 1.0) throw ValidationError("SmoothBump requires |a| < 1");
  if (mode < 1) throw ValidationError("SmoothBump mode must be >= 1");
  DensityModel r;
  r.kind_ = DensityKind::SmoothBump;
  r.a_ = a;
  r.mode_ = mode;
  r.norm_ = m.volume() + a * bump_integral(m, mode);
  return r;
}

std::string DensityModel::id() const {
  if (kind_ == DensityKind::Uniform) return "uniform";
  return "smooth_bump(a=" + format_g17(a_) + ",k=" + std::to_string(mode_) + ")";
}

double DensityModel::rho_unnorm_chart(const ManifoldModel& m, const Vec& u) const {
  if (kind_ == DensityKind::Uniform) return 1.0;
  switch (m.kind()) {
    case ModelKind::FlatDisk: return 1.0 + a_ * std::cos(mode_ * u[0]);
    case ModelKind::Sphere:
    case ModelKind::Hemisphere: return 1.0 + a_ * std::cos(mode_ * u[0]);
    case ModelKind::Cylinder: return 1.0 + a_ * std::cos(mode_ * u[0]);
    case ModelKind::Torus: return 1.0 + a_ * std::cos(mode_ * u[0]);
  }
  return 1.0;
}

double DensityModel::rho(const ManifoldModel& m, const Vec& z) const {
  if (kind_ == DensityKind::Uniform) return 1.0 / norm_;
  return rho_unnorm_chart(m, m.chart_inverse(z)) / norm_;
}

Vec DensityModel::grad_rho_frame(const ManifoldModel& m, const Vec& z,
                                 const Mat& frame) const {
  const int d = m.d();
  if (kind_ == DensityKind::Uniform) return Vec::Zero(d);
  Vec g_amb = Vec::Zero(m.p());
  switch (m.kind()) {
    case ModelKind::FlatDisk:
      g_amb[0] = -a_ * mode_ * std::sin(mode_ * z[0]);
      break;
    case ModelKind::Sphere:
    case ModelKind::Hemisphere: {
      // rho_unnorm = 1 + a T_k(x_p)
      double T, dT, ddT;
      cheb_eval(mode_, z[m.p() - 1], T, dT, ddT);
      g_amb[m.p() - 1] = a_ * dT;
      break;
    }
    case ModelKind::Cylinder: {
      double T, dT, ddT;
      cheb_eval(mode_, z[0], T, dT, ddT);
      g_amb[0] = a_ * dT;
      break;
    }
    case ModelKind::Torus: {
      const Vec u = m.chart_inverse(z);
      const double A = m.torus_major() + m.torus_minor() * std::cos(u[1]);
      const Mat E = m.tangent_frame(z);
      Vec g(d);
      g << -a_ * mode_ * std::sin(mode_ * u[0]) / A, 0.0;
      // rotate from canonical frame to supplied frame
      const Mat R = E.transpose() * frame;
      return (R.transpose() * g) / norm_;
    }
  }
  return (frame.transpose() * g_amb) / norm_;
}

}  // namespace hessfit
