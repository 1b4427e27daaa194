#ifndef HESSFIT_MANIFOLD_HPP
#define HESSFIT_MANIFOLD_HPP

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hessfit/common.hpp"
#include "hessfit/errors.hpp"

namespace hessfit {

enum class ModelKind { FlatDisk, Sphere, Hemisphere, Cylinder, Torus };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

// Extrinsic curvature data at a point, expressed in a given tangent frame.
// Used by the neighborhood moment oracles.
struct CurvatureData {
  double lambda = 0.0;       // (|H|^2 - 2|A|^2) / (8(d+2))
  Mat h_dot_ii;              // d x d, <H, II(e_i,e_j)>
  double norm_A_sq = 0.0;    // |A|^2
  double norm_H_sq = 0.0;    // |H|^2
};

// ---------------------------------------------------------------------------
// ManifoldModel
//
// A parametric embedded manifold with exact geometry: closed-form embedding,
// tangent frames, second fundamental form, geodesics, boundary distance and
// chart metric. Immutable after construction; all members are const-safe.
//
// Embeddings (see README for the full catalog):
//   FlatDisk(d,p):  u -> (u, 0,...,0), chart ||u|| <= radius
//   Sphere(d):      hyperspherical angles, last ambient coordinate is the pole
//   Hemisphere(d):  sphere chart restricted to polar angle < pi/2
//   Cylinder:       (theta,h) -> (cos theta, sin theta, h), |h| <= half_height
//   Torus:          (u,v) -> ((R + r cos v) cos u, (R + r cos v) sin u, r sin v)
// ---------------------------------------------------------------------------
class ManifoldModel {
public:
  static ManifoldModel flat_disk(int d, int p, double radius = 1.0);
  static ManifoldModel sphere(int d);
  static ManifoldModel hemisphere(int d);
  static ManifoldModel cylinder(double half_height = 1.0);
  static ManifoldModel torus(double major = 2.0, double minor = 1.0);

  ModelKind kind() const { return kind_; }
  int d() const { return d_; }
  int p() const { return p_; }
  double disk_radius() const { return radius_; }
  double cyl_half_height() const { return half_height_; }
  double torus_major() const { return major_; }
  double torus_minor() const { return minor_; }
  std::string id() const;

  // chart
  Vec chart_lo() const;
  Vec chart_hi() const;
  bool in_chart(const Vec& u) const;
  Vec embed(const Vec& u) const;             // OutOfChart
  double sqrt_metric_det(const Vec& u) const;
  Mat chart_metric(const Vec& u) const;      // d x d Gram of the chart map
  Vec chart_inverse(const Vec& z) const;     // NotOnManifold

  // ambient-point queries
  bool on_manifold(const Vec& z, double tol = 1e-9) const;
  void require_on_manifold(const Vec& z, double tol = 1e-9) const;
  Mat tangent_frame(const Vec& z) const;     // p x d, orthonormal
  double boundary_distance(const Vec& z) const;  // +inf for closed models

  // second fundamental form as an ambient vector, X and Y ambient tangent
  // vectors at z
  Vec ii_form(const Vec& z, const Vec& X, const Vec& Y) const;
  CurvatureData curvature(const Vec& z, const Mat& frame) const;

  // geodesic from z with unit ambient tangent direction w, arc length t.
  // Closed form except on the torus, where the geodesic ODE is integrated
  // (used only by ground-truth oracles, never by the estimator).
  Vec geodesic(const Vec& z, const Vec& w, double t) const;

  double volume() const;

private:
  ManifoldModel() = default;
  ModelKind kind_ = ModelKind::FlatDisk;
  int d_ = 2, p_ = 2;
  double radius_ = 1.0;       // FlatDisk
  double half_height_ = 1.0;  // Cylinder
  double major_ = 2.0, minor_ = 1.0;  // Torus
};

// ---------------------------------------------------------------------------
// ScalarField
//
// Test fields with hand-checked analytic derivatives. Two evaluation paths:
//  * ambient: f = F|_M for an ambient polynomial-like F with closed-form
//    ambient gradient/Hessian; the covariant Hessian follows from
//    Hess f(X,Y) = X^T HessF Y + <II(X,Y), gradF>.
//  * chart: f given in chart coordinates with closed-form partials; the
//    covariant Hessian uses the model's Christoffel symbols (flat charts
//    have none).
// ---------------------------------------------------------------------------
enum class FieldKind { AmbientLinear, ChartPolynomial, TrigField, Constant };

struct PolyTerm {
  double coeff = 0.0;
  std::vector<int> exps;  // one exponent per coordinate
};

class ScalarField {
public:
  static ScalarField constant(double c);
  static ScalarField ambient_linear(const Vec& c);
  // polynomial in the ambient coordinates (used by the sphere/cylinder/torus
  // catalogs; reported as TrigField where it encodes cos(k theta) etc.)
  static ScalarField ambient_polynomial(std::vector<PolyTerm> terms,
                                        const std::string& name,
                                        FieldKind reported = FieldKind::TrigField);
  // polynomial in chart coordinates (FlatDisk, Cylinder)
  static ScalarField chart_polynomial(std::vector<PolyTerm> terms,
                                      const std::string& name = "chart_polynomial");
  // torus chart trig field cos(k1 u) cos(k2 v)
  static ScalarField torus_trig(int k1, int k2);

  FieldKind kind() const { return kind_; }
  const std::string& name() const { return name_; }

  double value(const ManifoldModel& m, const Vec& z) const;
  Vec values(const ManifoldModel& m, const MatR& points) const;

  // (f, grad, hess) in the supplied tangent frame. Checks the frame is
  // orthonormal and tangent (FrameNotTangent otherwise).
  void true_derivatives(const ManifoldModel& m, const Vec& z, const Mat& frame,
                        double& f, Vec& grad, Mat& hess) const;

  double laplacian(const ManifoldModel& m, const Vec& z) const;

private:
  FieldKind kind_ = FieldKind::Constant;
  std::string name_ = "constant";
  bool chart_based_ = false;
  bool torus_trig_ = false;
  int k1_ = 0, k2_ = 0;
  double const_ = 0.0;
  std::vector<PolyTerm> terms_;  // ambient or chart polynomial terms

  void ambient_eval(const Vec& x, double& F, Vec& grad, Mat& hess) const;
  void chart_eval(const Vec& u, double& F, Vec& grad, Mat& hess) const;
};

// Fixed per-model catalog of three fields with documented derivatives.
std::vector<ScalarField> field_catalog(const ManifoldModel& m);
ScalarField field_by_name(const ManifoldModel& m, const std::string& name);

// ---------------------------------------------------------------------------
// DensityModel
// ---------------------------------------------------------------------------
enum class DensityKind { Uniform, SmoothBump };

class DensityModel {
public:
  static DensityModel uniform(const ManifoldModel& m);
  // rho ∝ 1 + a * bump_k(z) with |a| < 1; the bump depends on one chart
  // coordinate per model (see README).
  static DensityModel smooth_bump(const ManifoldModel& m, double a, int mode);

  DensityKind kind() const { return kind_; }
  double amplitude() const { return a_; }
  int mode() const { return mode_; }
  std::string id() const;

  double rho(const ManifoldModel& m, const Vec& z) const;    // normalized
  double rho_unnorm_chart(const ManifoldModel& m, const Vec& u) const;
  double normalization() const { return norm_; }             // integral of unnormalized rho
  double inf_bound() const { return (1.0 - std::abs(a_)) / norm_; }

  // gradient and Hessian data of the normalized density in the given frame
  // (closed form; needed by the interior Gram oracle)
  Vec grad_rho_frame(const ManifoldModel& m, const Vec& z, const Mat& frame) const;

private:
  DensityKind kind_ = DensityKind::Uniform;
  double a_ = 0.0;
  int mode_ = 1;
  double norm_ = 1.0;
};

// ---------------------------------------------------------------------------
// PointCloud
// ---------------------------------------------------------------------------
struct PointCloud {
  MatR points;  // n x p
  std::string model_id;
  std::string density_id;
  std::uint64_t seed = 0;
  long n() const { return points.rows(); }
  int p() const { return static_cast<int>(points.cols()); }
};

// n i.i.d. draws from rho dvol by rejection against the chart rectangle,
// deterministic under (model, density, n, seed). RejectionStall if the
// acceptance rate drops below 1e-4.
PointCloud sample(const ManifoldModel& m, const DensityModel& rho, long n,
                  std::uint64_t seed);

// Rejection-sampling core with an arbitrary chart weight, exposed for tests.
namespace detail {
MatR rejection_sample_chart(const Vec& lo, const Vec& hi,
                            const std::function<double(const Vec&)>& weight,
                            double weight_bound, long n, std::uint64_t key,
                            double stall_threshold = 1e-4);
}

}  // namespace hessfit

#endif
