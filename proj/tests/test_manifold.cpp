#include <doctest.h>

#include <cmath>

#include "hessfit/manifold.hpp"

using namespace hessfit;

namespace {

// deterministic test rng
struct TestRng {
  CounterRng rng;
  std::uint64_t ctr = 0;
  explicit TestRng(std::uint64_t seed) : rng{stream_key(seed, "test", "manifold")} {}
  double u() { return rng.u01(ctr++); }
  double uni(double a, double b) { return a + (b - a) * u(); }
};

Vec random_chart_point(const ManifoldModel& m, TestRng& rng, double margin = 0.05) {
  const Vec lo = m.chart_lo(), hi = m.chart_hi();
  Vec u(m.d());
  for (;;) {
    for (int c = 0; c < m.d(); ++c)
      u[c] = lo[c] + (hi[c] - lo[c]) * rng.uni(margin, 1.0 - margin);
    if (m.kind() != ModelKind::FlatDisk || u.norm() < m.disk_radius() * (1 - margin))
      return u;
  }
}

Vec random_tangent_dir(const ManifoldModel& m, const Vec& z, TestRng& rng) {
  const Mat E = m.tangent_frame(z);
  Vec a(m.d());
  for (int i = 0; i < m.d(); ++i) a[i] = rng.uni(-1, 1);
  a /= a.norm();
  return E * a;
}

std::vector<ManifoldModel> all_models() {
  return {ManifoldModel::flat_disk(2, 3), ManifoldModel::sphere(2),
          ManifoldModel::hemisphere(2), ManifoldModel::cylinder(),
          ManifoldModel::torus()};
}

}  // namespace

TEST_CASE("embed closed forms") {
  {
    Vec u(2);
    u << 0.0, 0.0;
    const Vec x = ManifoldModel::sphere(2).embed(u);
    CHECK(x[0] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(x[1] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(x[2] == doctest::Approx(1.0));
  }
  {
    Vec u(2);
    u << 0.3, 0.4;
    const Vec x = ManifoldModel::flat_disk(2, 3).embed(u);
    CHECK(x[0] == 0.3);
    CHECK(x[1] == 0.4);
    CHECK(x[2] == 0.0);
  }
  {
    Vec u(2);
    u << M_PI / 2, 0.5;
    const Vec x = ManifoldModel::cylinder().embed(u);
    CHECK(x[0] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(x[1] == doctest::Approx(1.0));
    CHECK(x[2] == doctest::Approx(0.5));
  }
  {
    Vec u(3);
    u << 0.2, 0.2, 0.2;
    CHECK_THROWS_AS(ManifoldModel::sphere(2).embed(u), OutOfChart);
  }
  {
    Vec u(2);
    u << 1.4, 0.2;
    CHECK_THROWS_AS(ManifoldModel::flat_disk(2, 2).embed(u), OutOfChart);
  }
}

TEST_CASE("sphere embedding stays on the unit sphere") {
  TestRng rng(1);
  for (const int d : {1, 2, 3, 5}) {
    const auto m = ManifoldModel::sphere(d);
    for (int i = 0; i < 50; ++i) {
      const Vec u = random_chart_point(m, rng);
      CHECK(std::abs(m.embed(u).norm() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("tangent frames are orthonormal and match known projectors") {
  TestRng rng(2);
  for (const auto& m : all_models()) {
    for (int i = 0; i < 20; ++i) {
      const Vec z = m.embed(random_chart_point(m, rng));
      const Mat E = m.tangent_frame(z);
      CHECK((E.transpose() * E - Mat::Identity(m.d(), m.d())).norm() < 1e-12);
    }
  }
  {
    Vec z(3);
    z << 0, 0, 1;
    const Mat E = ManifoldModel::sphere(2).tangent_frame(z);
    Mat proj = E * E.transpose();
    Mat want = Mat::Zero(3, 3);
    want(0, 0) = want(1, 1) = 1.0;
    CHECK((proj - want).norm() < 1e-12);
  }
  {
    Vec z(3);
    z << 1, 0, 0.37;
    const Mat E = ManifoldModel::cylinder().tangent_frame(z);
    Mat want = Mat::Zero(3, 3);
    want(1, 1) = want(2, 2) = 1.0;
    CHECK((E * E.transpose() - want).norm() < 1e-12);
  }
  {
    Vec off(3);
    off << 0.5, 0.5, 0.5;
    CHECK_THROWS_AS(ManifoldModel::sphere(2).tangent_frame(off), NotOnManifold);
  }
}

TEST_CASE("metric consistency: finite-difference Jacobian Gram = chart metric") {
  TestRng rng(3);
  const double h = 1e-6;
  for (const auto& m : all_models()) {
    for (int trial = 0; trial < 100; ++trial) {
      const Vec u = random_chart_point(m, rng);
      Mat J(m.p(), m.d());
      for (int c = 0; c < m.d(); ++c) {
        Vec up = u, um = u;
        up[c] += h;
        um[c] -= h;
        J.col(c) = (m.embed(up) - m.embed(um)) / (2 * h);
      }
      CHECK((J.transpose() * J - m.chart_metric(u)).lpNorm<Eigen::Infinity>() < 1e-6);
    }
  }
}

TEST_CASE("true_derivatives against the geodesic finite-difference oracle") {
  TestRng rng(4);
  const double h = 1e-4;
  for (const auto& m : all_models()) {
    for (const auto& field : field_catalog(m)) {
      for (int trial = 0; trial < 20; ++trial) {
        const Vec z = m.embed(random_chart_point(m, rng, 0.1));
        const Mat E = m.tangent_frame(z);
        double f;
        Vec grad;
        Mat hess;
        field.true_derivatives(m, z, E, f, grad, hess);
        CHECK(f == doctest::Approx(field.value(m, z)).epsilon(1e-12));
        const Vec w = random_tangent_dir(m, z, rng);
        const Vec a = E.transpose() * w;
        const double fp = field.value(m, m.geodesic(z, w, h));
        const double fm = field.value(m, m.geodesic(z, w, -h));
        const double d1 = (fp - fm) / (2 * h);
        const double d2 = (fp - 2 * f + fm) / (h * h);
        const double scale = 1.0 + std::abs(d2);
        CHECK(std::abs(d1 - grad.dot(a)) < 1e-5 * (1.0 + std::abs(d1)));
        CHECK(std::abs(d2 - a.dot(hess * a)) < 1e-5 * scale);
      }
    }
  }
}

TEST_CASE("sphere ambient-linear identities") {
  TestRng rng(5);
  const auto m = ManifoldModel::sphere(2);
  const Vec z = m.embed(random_chart_point(m, rng));
  const Mat E = m.tangent_frame(z);
  // f = <x, c> with c = z: grad = 0, hess = -I
  const ScalarField f = ScalarField::ambient_linear(z);
  double fv;
  Vec g;
  Mat H;
  f.true_derivatives(m, z, E, fv, g, H);
  CHECK(fv == doctest::Approx(1.0));
  CHECK(g.norm() < 1e-12);
  CHECK((H + Mat::Identity(2, 2)).norm() < 1e-12);
  // constant field
  const ScalarField c = ScalarField::constant(3.5);
  c.true_derivatives(m, z, E, fv, g, H);
  CHECK(fv == 3.5);
  CHECK(g.norm() == 0.0);
  CHECK(H.norm() == 0.0);
}

TEST_CASE("flat disk chart polynomial derivatives") {
  const auto m = ManifoldModel::flat_disk(2, 3);
  const ScalarField f = ScalarField::chart_polynomial(
      {PolyTerm{1.0, {2, 0}}}, "usq");  // f = u1^2
  Vec z(3);
  z << 0.3, -0.2, 0.0;
  const Mat E = m.tangent_frame(z);
  double fv;
  Vec g;
  Mat H;
  f.true_derivatives(m, z, E, fv, g, H);
  CHECK(fv == doctest::Approx(0.09));
  CHECK(g[0] == doctest::Approx(0.6));
  CHECK(g[1] == doctest::Approx(0.0));
  CHECK(H(0, 0) == doctest::Approx(2.0));
  CHECK(H(1, 1) == doctest::Approx(0.0));
  CHECK(H(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("frame checks") {
  const auto m = ManifoldModel::sphere(2);
  Vec z(3);
  z << 0, 0, 1;
  Mat bad(3, 2);
  bad << 1, 0, 0, 0, 0, 1;  // second column is normal
  const ScalarField f = ScalarField::ambient_linear(Vec::Ones(3));
  double fv;
  Vec g;
  Mat H;
  CHECK_THROWS_AS(f.true_derivatives(m, z, bad, fv, g, H), FrameNotTangent);
}

TEST_CASE("boundary distances") {
  {
    Vec pole(3);
    pole << 0, 0, 1;
    CHECK(ManifoldModel::hemisphere(2).boundary_distance(pole) ==
          doctest::Approx(M_PI / 2));
    CHECK(std::isinf(ManifoldModel::sphere(2).boundary_distance(pole)));
  }
  {
    Vec z(2);
    z << 0.7, 0.0;
    CHECK(ManifoldModel::flat_disk(2, 2).boundary_distance(z) == doctest::Approx(0.3));
  }
  {
    Vec z(3);
    z << 1, 0, 0.2;
    CHECK(std::isinf(ManifoldModel::cylinder().boundary_distance(z)));
  }
}

TEST_CASE("sampler determinism and membership") {
  const auto m = ManifoldModel::sphere(2);
  const auto rho = DensityModel::uniform(m);
  const PointCloud a = sample(m, rho, 1, 42);
  const PointCloud b = sample(m, rho, 1, 42);
  CHECK(a.points == b.points);
  const PointCloud c = sample(m, rho, 200, 42);
  // the first draw of a longer run matches (counter-based streams)
  CHECK(c.points.row(0) == a.points.row(0));
  for (long i = 0; i < c.n(); ++i)
    CHECK(m.on_manifold(c.points.row(i).transpose(), 1e-12));
}

TEST_CASE("sampler law: mean, hemisphere support, torus membership") {
  {
    const auto m = ManifoldModel::sphere(2);
    const PointCloud c = sample(m, DensityModel::uniform(m), 10000, 7);
    Vec mean = c.points.colwise().mean().transpose();
    CHECK(mean.norm() < 0.05);
  }
  {
    const auto m = ManifoldModel::hemisphere(2);
    const PointCloud c = sample(m, DensityModel::uniform(m), 10000, 8);
    CHECK(c.points.col(2).minCoeff() >= 0.0);
  }
  {
    const auto m = ManifoldModel::torus();
    const PointCloud c = sample(m, DensityModel::uniform(m), 2000, 9);
    for (long i = 0; i < c.n(); ++i)
      CHECK(m.on_manifold(c.points.row(i).transpose(), 1e-12));
  }
}

namespace {

// chi-square GOF of sampled chart coordinates against the rho-weighted area
// measure. Expected bin masses via test-side Gauss-Legendre quadrature.
double chi2_statistic(const ManifoldModel& m, const DensityModel& rho, long n,
                      std::uint64_t seed, int bins_per_dim) {
  const PointCloud cloud = sample(m, rho, n, seed);
  const Vec lo = m.chart_lo(), hi = m.chart_hi();
  const int B = bins_per_dim;
  std::vector<double> expected(B * B, 0.0), observed(B * B, 0.0);
  const auto& xs = gl_nodes(16);
  const auto& ws = gl_weights(16);
  double total = 0;
  for (int bi = 0; bi < B; ++bi)
    for (int bj = 0; bj < B; ++bj) {
      const double a0 = lo[0] + (hi[0] - lo[0]) * bi / B;
      const double b0 = lo[0] + (hi[0] - lo[0]) * (bi + 1) / B;
      const double a1 = lo[1] + (hi[1] - lo[1]) * bj / B;
      const double b1 = lo[1] + (hi[1] - lo[1]) * (bj + 1) / B;
      double mass = 0;
      for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) {
          Vec u(2);
          u << 0.5 * (a0 + b0) + 0.5 * (b0 - a0) * xs[i],
              0.5 * (a1 + b1) + 0.5 * (b1 - a1) * xs[j];
          if (!m.in_chart(u)) continue;
          mass += ws[i] * ws[j] * m.sqrt_metric_det(u) * rho.rho_unnorm_chart(m, u);
        }
      mass *= 0.25 * (b0 - a0) * (b1 - a1);
      expected[bi * B + bj] = mass;
      total += mass;
    }
  for (long i = 0; i < cloud.n(); ++i) {
    const Vec u = m.chart_inverse(cloud.points.row(i).transpose());
    int bi = static_cast<int>((u[0] - lo[0]) / (hi[0] - lo[0]) * B);
    int bj = static_cast<int>((u[1] - lo[1]) / (hi[1] - lo[1]) * B);
    bi = std::min(std::max(bi, 0), B - 1);
    bj = std::min(std::max(bj, 0), B - 1);
    observed[bi * B + bj] += 1.0;
  }
  double chi2 = 0;
  for (int b = 0; b < B * B; ++b) {
    const double e = expected[b] / total * n;
    if (e < 1e-9) {
      chi2 += observed[b] > 0 ? 1e9 : 0.0;
      continue;
    }
    chi2 += (observed[b] - e) * (observed[b] - e) / e;
  }
  return chi2;
}

}  // namespace

TEST_CASE("sampler law: chi-square goodness of fit at significance 0.001") {
  // chi^2 critical value at 0.999, 63 dof
  const double crit63 = 103.44237731987324;
  {
    const auto m = ManifoldModel::sphere(2);
    CHECK(chi2_statistic(m, DensityModel::uniform(m), 100000, 11, 8) < crit63);
    CHECK(chi2_statistic(m, DensityModel::smooth_bump(m, 0.5, 1), 100000, 12, 8) < crit63);
  }
  {
    const auto m = ManifoldModel::flat_disk(2, 2);
    CHECK(chi2_statistic(m, DensityModel::smooth_bump(m, 0.7, 2), 100000, 13, 8) < crit63);
  }
  {
    const auto m = ManifoldModel::torus();
    CHECK(chi2_statistic(m, DensityModel::uniform(m), 100000, 14, 8) < crit63);
  }
}

TEST_CASE("density normalization and positivity") {
  TestRng rng(15);
  for (const auto& m : all_models()) {
    const auto bump = DensityModel::smooth_bump(m, 0.5, 1);
    // integral of normalized rho over the manifold via chart quadrature;
    // the disk chart is integrated in polar coordinates to keep the
    // integrand smooth
    const auto& xs = gl_nodes(64);
    const auto& ws = gl_weights(64);
    const bool polar = m.kind() == ModelKind::FlatDisk;
    Vec lo(2), hi(2);
    if (polar) {
      lo << 0.0, 0.0;
      hi << m.disk_radius(), 2 * M_PI;
    } else {
      lo = m.chart_lo();
      hi = m.chart_hi();
    }
    double integral = 0;
    for (int i = 0; i < 64; ++i)
      for (int j = 0; j < 64; ++j) {
        Vec v(2);
        v << 0.5 * (lo[0] + hi[0]) + 0.5 * (hi[0] - lo[0]) * xs[i],
            0.5 * (lo[1] + hi[1]) + 0.5 * (hi[1] - lo[1]) * xs[j];
        Vec u = v;
        double jac = 1.0;
        if (polar) {
          u << v[0] * std::cos(v[1]), v[0] * std::sin(v[1]);
          jac = v[0];
        }
        if (!m.in_chart(u)) continue;
        integral += ws[i] * ws[j] * jac * m.sqrt_metric_det(u) *
                    bump.rho_unnorm_chart(m, u) / bump.normalization();
      }
    integral *= 0.25 * (hi[0] - lo[0]) * (hi[1] - lo[1]);
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
    // positivity bound over random chart points
    double mn = std::numeric_limits<double>::infinity();
    for (int t = 0; t < 10000; ++t) {
      const Vec u = random_chart_point(m, rng, 0.001);
      mn = std::min(mn, bump.rho(m, m.embed(u)));
    }
    CHECK(mn >= bump.inf_bound() - 1e-12);
    CHECK(bump.inf_bound() > 0.0);
  }
  CHECK_THROWS_AS(DensityModel::smooth_bump(ManifoldModel::sphere(2), 1.0, 1),
                  ValidationError);
}

TEST_CASE("density gradient against finite differences along geodesics") {
  TestRng rng(16);
  for (const auto& m : all_models()) {
    const auto bump = DensityModel::smooth_bump(m, 0.4, 2);
    for (int t = 0; t < 10; ++t) {
      const Vec z = m.embed(random_chart_point(m, rng, 0.1));
      const Mat E = m.tangent_frame(z);
      const Vec g = bump.grad_rho_frame(m, z, E);
      const Vec w = random_tangent_dir(m, z, rng);
      const double h = 1e-5;
      const double d1 = (bump.rho(m, m.geodesic(z, w, h)) -
                         bump.rho(m, m.geodesic(z, w, -h))) /
                        (2 * h);
      CHECK(std::abs(d1 - g.dot(E.transpose() * w)) < 1e-6);
    }
  }
}

TEST_CASE("rejection sampler stall detection") {
  // a weight that is zero except on a sliver of relative measure < 1e-5
  Vec lo(1), hi(1);
  lo << 0.0;
  hi << 1.0;
  auto weight = [](const Vec& u) { return u[0] < 5e-6 ? 1.0 : 0.0; };
  CHECK_THROWS_AS(
      detail::rejection_sample_chart(lo, hi, weight, 1.0, 4, 123, 1e-4),
      RejectionStall);
}

TEST_CASE("curvature data sanity") {
  // unit sphere S^2: |H|^2 = 4, |A|^2 = 2, lambda = 0
  const auto m = ManifoldModel::sphere(2);
  Vec z(3);
  z << 0, 0, 1;
  const CurvatureData c = m.curvature(z, m.tangent_frame(z));
  CHECK(c.norm_H_sq == doctest::Approx(4.0));
  CHECK(c.norm_A_sq == doctest::Approx(2.0));
  CHECK(c.lambda == doctest::Approx(0.0));
  CHECK(c.h_dot_ii(0, 0) == doctest::Approx(2.0));
  CHECK(c.h_dot_ii(0, 1) == doctest::Approx(0.0));
  // cylinder: |H|^2 = |A|^2 = 1, lambda = -1/32
  const auto cyl = ManifoldModel::cylinder();
  Vec zc(3);
  zc << 1, 0, 0.1;
  const CurvatureData cc = cyl.curvature(zc, cyl.tangent_frame(zc));
  CHECK(cc.norm_H_sq == doctest::Approx(1.0));
  CHECK(cc.norm_A_sq == doctest::Approx(1.0));
  CHECK(cc.lambda == doctest::Approx(-1.0 / 32.0));
}
