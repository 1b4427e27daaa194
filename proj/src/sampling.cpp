#include <atomic>
#include <cmath>

#include "hessfit/manifold.hpp"

namespace hessfit {

namespace detail {

MatR rejection_sample_chart(const Vec& lo, const Vec& hi,
                            const std::function<double(const Vec&)>& weight,
                            double weight_bound, long n, std::uint64_t key,
                            double stall_threshold) {
  const int d = static_cast<int>(lo.size());
  if (weight_bound <= 0) throw RejectionStall("proposal weight bound is zero");
  MatR out(n, d);
  CounterRng rng{key};
  const Vec span = hi - lo;
  // Attempts of one draw live in a private counter block so parallel chunks
  // are reproducible regardless of scheduling.
  const std::uint64_t kBlock = 1ull << 21;
  const long max_attempts = 200000;
  std::atomic<bool> stalled{false};
  parallel_for(n, [&](std::int64_t i) {
    if (stalled.load(std::memory_order_relaxed)) return;
    Vec u(d);
    for (long j = 0; j < max_attempts; ++j) {
      const std::uint64_t base = static_cast<std::uint64_t>(i) * kBlock +
                                 static_cast<std::uint64_t>(j) * (d + 2);
      for (int c = 0; c < d; ++c) u[c] = lo[c] + span[c] * rng.u01(base + c);
      const double w = weight(u);
      if (w > weight_bound * (1.0 + 1e-9))
        throw Error("rejection proposal bound violated; bound=" +
                    format_g17(weight_bound) + " w=" + format_g17(w));
      if (rng.u01(base + d) * weight_bound <= w) {
        out.row(i) = u.transpose();
        return;
      }
      // 1/stall_threshold attempts without success implies the acceptance
      // rate is below the threshold with overwhelming probability.
      if (j + 1 >= static_cast<long>(10.0 / stall_threshold)) break;
    }
    stalled.store(true, std::memory_order_relaxed);
  });
  if (stalled.load())
    throw RejectionStall("acceptance rate below " + format_g17(stall_threshold));
  return out;
}

}  // namespace detail

PointCloud sample(const ManifoldModel& m, const DensityModel& rho, long n,
                  std::uint64_t seed) {
  if (n < 1) throw ValidationError("sample requires n >= 1");
  const int d = m.d();
  const Vec lo = m.chart_lo(), hi = m.chart_hi();
  auto weight = [&](const Vec& u) -> double {
    if (!m.in_chart(u)) return 0.0;  // disk chart is a ball inside the rectangle
    return m.sqrt_metric_det(u) * rho.rho_unnorm_chart(m, u);
  };
  // Proposal bound by dense grid search over the chart rectangle (512 points
  // per dimension for d <= 2, coarser grids above), plus 5% headroom. The
  // sampler re-checks the bound on every evaluation.
  const int res = d <= 2 ? 512 : (d == 3 ? 64 : 16);
  double wmax = 0.0;
  Vec u(d);
  std::vector<int> idx(d, 0);
  for (;;) {
    for (int c = 0; c < d; ++c)
      u[c] = lo[c] + (hi[c] - lo[c]) * (idx[c] + 0.5) / res;
    wmax = std::max(wmax, weight(u));
    int c = 0;
    for (; c < d; ++c) {
      if (++idx[c] < res) break;
      idx[c] = 0;
    }
    if (c == d) break;
  }
  // chart corners and center, in case the grid misses a ridge
  for (int mask = 0; mask < (1 << d); ++mask) {
    for (int c = 0; c < d; ++c) u[c] = (mask >> c & 1) ? hi[c] : lo[c];
    wmax = std::max(wmax, weight(u));
  }
  wmax *= 1.05;

  const std::uint64_t key =
      stream_key(seed, "manifold_models", "sample") ^ stable_hash(m.id() + "|" + rho.id());
  const MatR chart_pts = detail::rejection_sample_chart(lo, hi, weight, wmax, n, key);

  PointCloud cloud;
  cloud.points.resize(n, m.p());
  parallel_for(n, [&](std::int64_t i) {
    cloud.points.row(i) = m.embed(chart_pts.row(i).transpose()).transpose();
  });
  cloud.model_id = m.id();
  cloud.density_id = rho.id();
  cloud.seed = seed;
  return cloud;
}

}  // namespace hessfit
