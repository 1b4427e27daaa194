#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "hessfit/manifold.hpp"
#include "hessfit/moments.hpp"

using namespace hessfit;

namespace {

struct TestRng {
  CounterRng rng;
  std::uint64_t ctr = 0;
  explicit TestRng(std::uint64_t seed) : rng{stream_key(seed, "test", "moments")} {}
  double u() { return rng.u01(ctr++); }
  double uni(double a, double b) { return a + (b - a) * u(); }
};

bool agrees_4sigma(double closed, const McResult& mc) {
  return std::abs(closed - mc.estimate) <= 4.0 * mc.stderr_ + 1e-12;
}

Mat rand_sym(int d, TestRng& rng) {
  Mat T(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      T(i, j) = rng.uni(-1, 1);
      T(j, i) = T(i, j);
    }
  return T;
}

}  // namespace

TEST_CASE("unit ball volumes") {
  CHECK(unit_ball_volume(1) == doctest::Approx(2.0));
  CHECK(unit_ball_volume(2) == doctest::Approx(M_PI));
  CHECK(unit_ball_volume(3) == doctest::Approx(4.0 * M_PI / 3.0));
}

TEST_CASE("named moments: closed forms, explicit values, gamma route") {
  // II_S at d = 2 equals int_0^2pi cos^4 = 3 pi / 4
  BallMomentSpec s;
  s.d = 2;
  s.domain = MomentDomain::Sphere;
  s.pattern = {4};
  CHECK(ball_moment(s) == doctest::Approx(3 * M_PI / 4));
  CHECK(sphere_surface_moment(2, {4}) == doctest::Approx(3 * M_PI / 4));
  // JJII_S at d = 2: 9|B^2| / (4*6*8) = 3 pi / 64
  s.pattern = {4, 4};
  CHECK(ball_moment(s) == doctest::Approx(3 * M_PI / 64));
  CHECK(sphere_surface_moment(2, {4, 4}) == doctest::Approx(3 * M_PI / 64));
  // any odd exponent vanishes
  s.pattern = {3, 2};
  CHECK(ball_moment(s) == 0.0);
  CHECK(sphere_surface_moment(2, {3, 2}) == 0.0);
  // unsupported even pattern
  s.pattern = {8};
  CHECK_THROWS_AS(ball_moment(s), UnsupportedPattern);
}

TEST_CASE("every closed form agrees with the MC oracle at 4 sigma (d = 2,3,5)") {
  const long n = 200000;  // the acceptance suite reruns this at n = 1e6
  for (const int d : {2, 3, 5}) {
    const McResult vol = mc_ball_volume(d, n, 17);
    CHECK(agrees_4sigma(unit_ball_volume(d), vol));
    const std::vector<std::pair<MomentDomain, std::vector<int>>> cases = {
        {MomentDomain::Ball, {4}},      {MomentDomain::Ball, {2, 2}},
        {MomentDomain::Sphere, {4}},    {MomentDomain::Sphere, {2, 2}},
        {MomentDomain::Sphere, {6}},    {MomentDomain::Sphere, {4, 2}},
        {MomentDomain::Sphere, {2, 2, 2}}, {MomentDomain::Sphere, {4, 4}},
        {MomentDomain::Sphere, {3}},    {MomentDomain::Ball, {1, 2}},
    };
    for (const auto& [dom, pat] : cases) {
      if (static_cast<int>(pat.size()) > d) continue;
      BallMomentSpec spec;
      spec.d = d;
      spec.r = 1.0;
      spec.domain = dom;
      spec.pattern = pat;
      const double closed = ball_moment(spec);
      const McResult mc = mc_moment(spec, n, 23 + d);
      CHECK(agrees_4sigma(closed, mc));
      if (closed == 0.0) CHECK(std::abs(mc.estimate) < 4.0 * mc.stderr_ + 1e-12);
    }
  }
  // radius scaling of the ball forms
  BallMomentSpec spec;
  spec.d = 3;
  spec.r = 0.5;
  spec.domain = MomentDomain::Ball;
  spec.pattern = {4};
  const McResult mc = mc_moment(spec, n, 31);
  CHECK(agrees_4sigma(ball_moment(spec), mc));
}

TEST_CASE("truncated_C: full-ball limits and frozen closed forms") {
  for (const int d : {2, 3, 4}) {
    CHECK(truncated_C(d, 0.0, 0, 0) == doctest::Approx(unit_ball_volume(d)).epsilon(1e-12));
    CHECK(truncated_C(d, 0.0, 2, 0) ==
          doctest::Approx(unit_ball_volume(d) / (d + 2)).epsilon(1e-12));
    CHECK(truncated_C(d, 0.0, 0, 2) ==
          doctest::Approx(unit_ball_volume(d) / (d + 2)).epsilon(1e-12));
    CHECK(std::abs(truncated_C(d, 0.0, 1, 0)) < 1e-12);
    CHECK(std::abs(truncated_C(d, 0.0, 3, 0)) < 1e-12);
  }
  // hand-derived values at d = 2, delta = 0.5 (cap integrals in closed form)
  CHECK(truncated_C(2, 0.5, 1, 0) == doctest::Approx(std::sqrt(3.0) / 4.0).epsilon(1e-10));
  CHECK(truncated_C(2, 0.5, 0, 0) ==
        doctest::Approx(2.0 * M_PI / 3.0 + std::sqrt(3.0) / 4.0).epsilon(1e-10));
  // the removed mass sits below the cut, so the first depth moment is positive
  CHECK(truncated_C(2, 0.5, 1, 0) > 0.0);
}

TEST_CASE("truncated_C against the MC oracle") {
  const long n = 400000;
  for (const double delta : {0.1, 0.5, 0.9}) {
    for (const int d : {2, 3}) {
      CHECK(agrees_4sigma(truncated_C(d, delta, 1, 0), mc_truncated_C(d, delta, 1, 0, n, 5)));
      CHECK(agrees_4sigma(truncated_C(d, delta, 2, 0), mc_truncated_C(d, delta, 2, 0, n, 6)));
      CHECK(agrees_4sigma(truncated_C(d, delta, 0, 2), mc_truncated_C(d, delta, 0, 2, n, 7)));
      CHECK(agrees_4sigma(truncated_C(d, delta, 1, 2), mc_truncated_C(d, delta, 1, 2, n, 8)));
      CHECK(agrees_4sigma(truncated_C(d, delta, 4, 0), mc_truncated_C(d, delta, 4, 0, n, 9)));
    }
    CHECK(agrees_4sigma(truncated_C022(3, delta), mc_truncated_C022(3, delta, n, 10)));
  }
  // near-degenerate truncation exercises the adaptive angular quadrature
  CHECK(agrees_4sigma(truncated_C(2, 0.99, 1, 0), mc_truncated_C(2, 0.99, 1, 0, 2000000, 11)));
}

TEST_CASE("truncated_C is continuous in delta and converges to the full ball") {
  const int d = 2;
  double prev = truncated_C(d, 0.0, 1, 0);
  double max_jump = 0.0;
  for (int i = 1; i <= 40; ++i) {
    const double delta = 0.9 * i / 40.0;
    const double cur = truncated_C(d, delta, 1, 0);
    max_jump = std::max(max_jump, std::abs(cur - prev));
    prev = cur;
  }
  CHECK(max_jump < 0.1);  // Lipschitz-size steps on a 0.0225-grid
  CHECK(std::abs(truncated_C(d, 1e-9, 0, 0) - unit_ball_volume(d)) < 1e-6);
}

TEST_CASE("greeks: delta = 0 identities (paper constants)") {
  for (const int d : {2, 3, 4}) {
    const double eps = 0.1;
    const GreekSet g = greeks(d, 0.0, eps);
    const double e2 = eps * eps, e4 = e2 * e2;
    CHECK(std::abs(g.gamma1) < 1e-8);
    CHECK(std::abs(g.mu1) < 1e-8);
    CHECK(std::abs(g.mu2) < 1e-8);
    CHECK(g.alpha1 == doctest::Approx(e2 / (d + 2)).epsilon(1e-8));
    CHECK(g.alpha2 == doctest::Approx(e2 / (d + 2)).epsilon(1e-8));
    CHECK(g.beta1 == doctest::Approx(3 * e4 / ((d + 2) * (d + 4))).epsilon(1e-8));
    CHECK(g.beta3 == doctest::Approx(3 * e4 / ((d + 2) * (d + 4))).epsilon(1e-8));
    CHECK(g.beta2 == doctest::Approx(e4 / ((d + 2) * (d + 4))).epsilon(1e-8));
    CHECK(g.beta4 == doctest::Approx(e4 / ((d + 2) * (d + 4))).epsilon(1e-8));
  }
  // alpha1 = alpha2 = eps^2/(d+2) spot value from the worked example
  const GreekSet g = greeks(2, 0.0, 0.1);
  CHECK(g.alpha1 == doctest::Approx(2.5e-3).epsilon(1e-8));
}

TEST_CASE("greeks off the symmetric case") {
  // deep truncation keeps more mass on the interior side: gamma1 > 0 under
  // the convention B_{eps,delta} = B_eps cut to x_d > -(1-delta) eps
  const GreekSet g = greeks(2, 0.9, 0.1);
  CHECK(g.gamma1 > 0.0);
  CHECK(g.alpha1 < g.alpha2);  // the depth direction loses second moment
  // raw constants stay eps-independent
  const GreekSet g2 = greeks(2, 0.9, 0.37);
  CHECK(g.C10 == doctest::Approx(g2.C10).epsilon(1e-12));
  CHECK(g.C22 == doctest::Approx(g2.C22).epsilon(1e-12));
}

TEST_CASE("build_L0: truncated heuristic layout") {
  const double eps = 0.2;
  const GreekSet g = greeks(2, 0.0, eps);
  const GramOracle L = build_L0_truncated(g);
  REQUIRE(L.matrix.rows() == 6);
  CHECK(L.matrix(0, 0) == 1.0);
  CHECK((L.matrix - L.matrix.transpose()).norm() == 0.0);
  // delta = 0: the AB block vanishes, CC = beta [[3,1],[1,3]]
  CHECK(std::abs(L.matrix(0, 1)) < 1e-10);
  CHECK(std::abs(L.matrix(0, 2)) < 1e-10);
  const double beta = std::pow(eps, 4) / (4.0 * 6.0);
  CHECK(L.matrix(3, 3) == doctest::Approx(3 * beta).epsilon(1e-7));
  CHECK(L.matrix(3, 4) == doctest::Approx(beta).epsilon(1e-7));
  CHECK(L.matrix(4, 4) == doctest::Approx(3 * beta).epsilon(1e-7));
  // d = 3 truncated: mu2 sits at (row u_s, pair (s,d))
  const GreekSet g3 = greeks(3, 0.4, eps);
  const GramOracle L3 = build_L0_truncated(g3);
  REQUIRE(L3.matrix.rows() == 10);
  const long B = 1, D = 7;  // pairs (1,2),(1,3),(2,3)
  CHECK(L3.matrix(B + 0, D + 1) == doctest::Approx(g3.mu2));  // row u1, pair (1,3)
  CHECK(L3.matrix(B + 1, D + 2) == doctest::Approx(g3.mu2));  // row u2, pair (2,3)
  CHECK(L3.matrix(B + 0, D + 0) == 0.0);                      // pair (1,2) has no d
  CHECK(L3.matrix(B + 2, D + 0) == 0.0);                      // row u3 all zero
}

TEST_CASE("build_L0: interior variant and the shared-block agreement") {
  const int d = 3;
  const double eps = 0.15;
  const Vec zero_grad = Vec::Zero(d);
  const GramOracle interior = build_L0_interior(d, eps, 1.0, zero_grad);
  const GramOracle truncated = build_L0_truncated(greeks(d, 0.0, eps));
  CHECK((interior.matrix - truncated.matrix).lpNorm<Eigen::Infinity>() < 1e-10);
  // with a density gradient the BC block couples with the 3/1 pattern
  Vec gr(d);
  gr << 0.5, -0.2, 0.1;
  const GramOracle L = build_L0_interior(d, eps, 2.0, gr);
  const double beta = std::pow(eps, 4) / ((d + 2.0) * (d + 4.0));
  CHECK(L.matrix(1, 1 + d) == doctest::Approx(3 * beta * 0.25));
  CHECK(L.matrix(1, 2 + d) == doctest::Approx(beta * 0.25));
  CHECK(L.matrix(0, 1) == doctest::Approx(eps * eps / (d + 2.0) * 0.25));
  // D block stays beta I
  CHECK(L.matrix(1 + 2 * d, 1 + 2 * d) == doctest::Approx(beta));
  CHECK(L.matrix.rows() == design_cols(d));
}

TEST_CASE("sphere tensor integrals: identities and MC") {
  TestRng rng(3);
  {
    SphereTensorInputs in;
    in.d = 3;
    in.T = Mat::Identity(3, 3);
    CHECK(sphere_tensor_integral(SphereTensorKind::TraceT, in) ==
          doctest::Approx(unit_ball_volume(3) * 3));
    in.T = Mat::Zero(3, 3);
    in.T(0, 0) = 1.0;
    CHECK(sphere_tensor_integral(SphereTensorKind::TE1Sq, in) ==
          doctest::Approx(unit_ball_volume(3) * 3.0 / 5.0));
    Mat bad = Mat::Zero(3, 3);
    bad(0, 1) = 1.0;
    in.T = bad;
    CHECK_THROWS_AS(sphere_tensor_integral(SphereTensorKind::TraceT, in), NotSymmetric);
  }
  const long n = 200000;
  int trial_id = 0;
  for (const int d : {2, 3}) {
    for (const int codim : {1, 2}) {
      for (int rep = 0; rep < 5; ++rep) {
        SphereTensorInputs in;
        in.d = d;
        in.T = rand_sym(d, rng);
        in.II.clear();
        for (int c = 0; c < codim; ++c) in.II.push_back(rand_sym(d, rng));
        in.s = 0;
        in.l = 1;
        for (const auto kind :
             {SphereTensorKind::TraceT, SphereTensorKind::TE1Sq,
              SphereTensorKind::TE1E2, SphereTensorKind::SffSq,
              SphereTensorKind::SffSqE1Sq, SphereTensorKind::SffSqE1E2,
              SphereTensorKind::AijCross}) {
          const double closed = sphere_tensor_integral(kind, in);
          const McResult mc = mc_sphere_tensor(kind, in, n, 700 + trial_id);
          CHECK(agrees_4sigma(closed, mc));
          ++trial_id;
        }
      }
    }
  }
}

TEST_CASE("interior moment oracle: flat cases") {
  const int d = 2;
  const double eps = 0.1;
  const double alpha = eps * eps / (d + 2.0);
  const double beta = std::pow(eps, 4) / ((d + 2.0) * (d + 4.0));
  FieldData f;
  f.f = 2.0;
  f.grad = Vec(d);
  f.grad << 1.0, -0.5;
  f.hess = Mat::Identity(d, d) * 0.7;
  f.lap = 1.4;
  RhoData uni;
  uni.rho = 1.0;
  uni.grad = Vec::Zero(d);
  uni.hess = Mat::Zero(d, d);
  uni.lap = 0.0;
  CurvatureInputs flat;
  flat.lambda = 0.0;
  flat.h_dot_ii = Mat::Zero(d, d);
  flat.present = true;
  // (i) with uniform density: f + alpha lap / 2
  CHECK(interior_moment_oracle(d, eps, f, uni, flat, InteriorMoment::MeanF) ==
        doctest::Approx(2.0 + 0.5 * alpha * 1.4));
  // (ii): alpha grad_j with uniform density
  CHECK(interior_moment_oracle(d, eps, f, uni, flat, InteriorMoment::LinF, 0) ==
        doctest::Approx(alpha * 1.0));
  // (v): 3 beta grad_rho / rho on the diagonal, zero for uniform
  CHECK(interior_moment_oracle(d, eps, f, uni, flat, InteriorMoment::CubicMixed, 1, 1) ==
        doctest::Approx(0.0));
  // (vi): beta off-diagonal, 3 beta diagonal
  CHECK(interior_moment_oracle(d, eps, f, uni, flat, InteriorMoment::QuarticPair, 0, 1) ==
        doctest::Approx(beta));
  CHECK(interior_moment_oracle(d, eps, f, uni, flat, InteriorMoment::QuarticPair, 1, 1) ==
        doctest::Approx(3 * beta));
  // missing curvature data
  CurvatureInputs none;
  CHECK_THROWS_AS(
      interior_moment_oracle(d, eps, f, uni, none, InteriorMoment::SqF, 0, 0),
      MissingCurvatureData);
}

TEST_CASE("interior moment oracle matches sampled sphere-ball averages") {
  // item (iii) summed over j against a Monte Carlo neighborhood average;
  // residual must be O(eps^6)-small relative to the beta-level terms
  const auto m = ManifoldModel::sphere(2);
  const auto rho = DensityModel::uniform(m);
  const ScalarField field = field_by_name(m, "ambient_mixed");
  Vec u0(2);
  u0 << 1.2, 0.8;
  const Vec z = m.embed(u0);
  const Mat E = m.tangent_frame(z);
  FieldData f;
  field.true_derivatives(m, z, E, f.f, f.grad, f.hess);
  f.lap = f.hess.trace();
  RhoData rd;
  rd.rho = rho.rho(m, z);
  rd.grad = Vec::Zero(2);
  rd.hess = Mat::Zero(2, 2);
  rd.lap = 0.0;
  const CurvatureData cd = m.curvature(z, E);
  CurvatureInputs curv;
  curv.lambda = cd.lambda;
  curv.h_dot_ii = cd.h_dot_ii;
  curv.present = true;

  const PointCloud cloud = sample(m, rho, 4000000, 99);
  auto mc_item3_trace = [&](double eps) {
    double acc = 0;
    long count = 0;
    for (long i = 0; i < cloud.n(); ++i) {
      const Vec x = cloud.points.row(i).transpose();
      if ((x - z).norm() > eps) continue;
      const Vec q = E.transpose() * (x - z);
      acc += (q[0] * q[0] + q[1] * q[1]) * field.value(m, x);
      ++count;
    }
    return acc / count;
  };
  for (const double eps : {0.5, 0.3}) {
    const double oracle =
        interior_moment_oracle(2, eps, f, rd, curv, InteriorMoment::SqF, 0, 0) +
        interior_moment_oracle(2, eps, f, rd, curv, InteriorMoment::SqF, 1, 1);
    const double mc = mc_item3_trace(eps);
    CHECK(std::abs(mc - oracle) < 2.0 * std::pow(eps, 6) + 5e-5);
  }
}
