#include "hessfit/common.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <thread>

#include "hessfit/errors.hpp"

namespace hessfit {

void CounterRng::normal_pair(std::uint64_t counter, double& n0, double& n1) const {
  double u1 = u01(counter);
  double u2 = u01(counter + 1);
  // guard against log(0)
  if (u1 <= 0) u1 = 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * M_PI * u2;
  n0 = r * std::cos(t);
  n1 = r * std::sin(t);
}

namespace {

struct GlRule {
  std::vector<double> x, w;
};

GlRule make_gl(int n) {
  GlRule rule;
  rule.x.resize(n);
  rule.w.resize(n);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    // Chebyshev initial guess, Newton on P_n
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.x[i] = -x;
    rule.x[n - 1 - i] = x;
    rule.w[i] = 2.0 / ((1.0 - x * x) * pp * pp);
    rule.w[n - 1 - i] = rule.w[i];
  }
  return rule;
}

std::map<int, GlRule>& gl_cache() {
  static std::map<int, GlRule> cache;
  return cache;
}
std::mutex gl_mutex;

const GlRule& gl_rule(int n) {
  std::lock_guard<std::mutex> lock(gl_mutex);
  auto it = gl_cache().find(n);
  if (it == gl_cache().end()) it = gl_cache().emplace(n, make_gl(n)).first;
  return it->second;
}

}  // namespace

const std::vector<double>& gl_nodes(int n) { return gl_rule(n).x; }
const std::vector<double>& gl_weights(int n) { return gl_rule(n).w; }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn,
                  int max_threads) {
  if (n <= 0) return;
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 2;
  int nthreads = max_threads > 0 ? std::min(max_threads, hw) : hw;
  nthreads = static_cast<int>(std::min<std::int64_t>(nthreads, n));
  if (nthreads <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex err_mutex;
  for (int t = 0; t < nthreads; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const std::int64_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!err) err = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

std::string format_g17(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x,
                                 std::chars_format::general, 17);
  (void)ec;
  return std::string(buf, ptr);
}

double parse_double(std::string_view s) {
  // trim spaces
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t'))
    s.remove_suffix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("bad float '" + std::string(s) + "'");
  return v;
}

}  // namespace hessfit
