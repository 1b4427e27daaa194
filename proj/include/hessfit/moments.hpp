#ifndef HESSFIT_MOMENTS_HPP
#define HESSFIT_MOMENTS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "hessfit/common.hpp"
#include "hessfit/errors.hpp"

namespace hessfit {

// volume of the unit ball in R^d
double unit_ball_volume(int d);

// exact even-power sphere surface moment: integral over S^{q-1} of
// prod_i (w_i)^{exps_i} dS (zero when any exponent is odd)
double sphere_surface_moment(int q, const std::vector<int>& exps);

// ---------------------------------------------------------------------------
// Named ball and sphere moments (closed forms) with a Monte Carlo oracle
// ---------------------------------------------------------------------------

enum class MomentDomain { Ball, Sphere };

struct BallMomentSpec {
  int d = 2;
  double r = 1.0;              // ball radius; ignored for Sphere
  std::vector<int> pattern;    // exponents of distinct coordinates, e.g. {4}, {2,2}
  MomentDomain domain = MomentDomain::Sphere;
};

// Closed forms: on the ball {4} and {2,2}; on the unit sphere {4}, {2,2},
// {6}, {4,2}, {2,2,2} and {4,4}. Any pattern with an odd exponent returns 0.
// UnsupportedPattern otherwise.
double ball_moment(const BallMomentSpec& spec);

struct McResult {
  double estimate = 0.0;
  double stderr_ = 0.0;
};

McResult mc_moment(const BallMomentSpec& spec, long n_samples, std::uint64_t seed);
// |B^d| estimated by the cube-indicator Monte Carlo
McResult mc_ball_volume(int d, long n_samples, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Truncated-ball constants C_{m,2k} and the Greeks
//
// C_{m,2k} = integral over B_{1,delta} of (x_d)^m (x_{d-1})^{2k} dx, where
// B_{1,delta} is the unit ball cut to x_d > -(1-delta). Computed by an exact
// radial integral and Gauss-Legendre in the polar angle. The distinguished
// pattern C_{0,2,2} = (x_{d-1})^2 (x_{d-2})^2 needs d >= 3.
// ---------------------------------------------------------------------------

double truncated_C(int d, double delta, int m, int k2);
double truncated_C022(int d, double delta);
McResult mc_truncated_C(int d, double delta, int m, int k2, long n, std::uint64_t seed);
McResult mc_truncated_C022(int d, double delta, long n, std::uint64_t seed);

struct GreekSet {
  int d = 2;
  double delta = 0.0;
  double eps = 1.0;
  double C00 = 0.0;
  double gamma1 = 0.0;
  double alpha1 = 0.0, alpha2 = 0.0;
  double mu1 = 0.0, mu2 = 0.0;
  double beta1 = 0.0, beta2 = 0.0, beta3 = 0.0, beta4 = 0.0;
  // raw unit-ball constants keyed by (m, 2k): C{m}{2k}
  double C10 = 0, C20 = 0, C02 = 0, C30 = 0, C12 = 0, C40 = 0, C22 = 0, C04 = 0,
         C022 = 0;
};

GreekSet greeks(int d, double delta, double eps);

// ---------------------------------------------------------------------------
// Leading Gram matrices L0
// ---------------------------------------------------------------------------

enum class GramVariant { TruncatedHeuristic, InteriorDirect };

struct GramOracle {
  GramVariant variant;
  int d = 2;
  double eps = 0.0;
  Mat matrix;  // (1 + 2d + d(d-1)/2)^2
};

GramOracle build_L0_truncated(const GreekSet& g);
GramOracle build_L0_interior(int d, double eps, double rho, const Vec& grad_rho);

// ---------------------------------------------------------------------------
// Integrals of symmetric tensors and second fundamental forms over the
// unit sphere (closed forms with Monte Carlo cross-checks)
// ---------------------------------------------------------------------------

enum class SphereTensorKind {
  TraceT,     // int T(theta,theta)
  TE1Sq,      // int T(theta,theta) <theta,e1>^2
  TE1E2,      // int T(theta,theta) <theta,e1><theta,e2>
  SffSq,      // int |II(theta,theta)|^2
  SffSqE1Sq,  // int |II(theta,theta)|^2 <theta,e1>^2
  SffSqE1E2,  // int |II(theta,theta)|^2 <theta,e1><theta,e2>
  AijCross    // int <II(theta,theta), II(theta,e_s)> <theta,e_l>
};

struct SphereTensorInputs {
  int d = 2;
  Mat T;                    // symmetric d x d (TraceT/TE1Sq/TE1E2)
  std::vector<Mat> II;      // one symmetric d x d matrix per codimension
  int s = 0, l = 1;         // indices for AijCross (0-based, distinct)
};

double sphere_tensor_integral(SphereTensorKind kind, const SphereTensorInputs& in);
McResult mc_sphere_tensor(SphereTensorKind kind, const SphereTensorInputs& in,
                          long n_samples, std::uint64_t seed);

// Gauss-Codazzi Ricci tensor of a submanifold from its second fundamental form
Mat gauss_codazzi_ricci(const std::vector<Mat>& II);

// ---------------------------------------------------------------------------
// Interior normalized-moment oracle (leading expansions over the metric ball)
// ---------------------------------------------------------------------------

struct FieldData {
  double f = 0.0;
  Vec grad;
  Mat hess;
  double lap = 0.0;
};

struct RhoData {
  double rho = 1.0;
  Vec grad;
  Mat hess;
  double lap = 0.0;
};

struct CurvatureInputs {
  double lambda = 0.0;
  Mat h_dot_ii;  // d x d
  bool present = false;
};

enum class InteriorMoment {
  MeanF,        // (i)    avg f
  LinF,         // (ii)   avg <x-z,e_j> f
  SqF,          // (iii)  avg <x-z,e_j>^2 f
  CrossF,       // (iv)   avg <x-z,e_s><x-z,e_l> f, s != l
  CubicMixed,   // (v)    avg <x-z,e_s><x-z,e_l>^2
  QuarticPair   // (vi)   avg <x-z,e_s>^2 <x-z,e_l>^2
};

double interior_moment_oracle(int d, double eps, const FieldData& f,
                              const RhoData& rho, const CurvatureInputs& curv,
                              InteriorMoment which, int j = 0, int l = 0);

}  // namespace hessfit

#endif
