#ifndef HESSFIT_EXPERIMENTS_HPP
#define HESSFIT_EXPERIMENTS_HPP

#include <optional>
#include <string>
#include <vector>

#include "hessfit/estimator.hpp"
#include "hessfit/manifold.hpp"
#include "hessfit/moments.hpp"

namespace hessfit {

// (1/k_z) Z^T Z at z, with Z from the local PCA fit.
Mat empirical_gram(const PointCloud& cloud, const Vec& z, double eps, int d,
                   const NeighborIndex* index = nullptr);

// ---------------------------------------------------------------------------
// n(eps) rule and query specification
// ---------------------------------------------------------------------------

struct NRule {
  double c = 8.0;   // exponent
  double A = 0.0;   // n = ceil(A * eps^-c); when A == 0 it is calibrated
  double n_at_eps_max = 2e4;  // so that n(eps_max) has this value
  long n_for(double eps, double eps_max) const;
};

enum class QueryType { InteriorPoints, BoundaryBandPoints, FixedPoints };

struct QuerySpec {
  QueryType type = QueryType::InteriorPoints;
  int count = 64;
  std::vector<Vec> fixed;  // FixedPoints
};

// Uniform-measure query points; interior means d(z, boundary) > sigma where a
// boundary exists, the band means d(z, boundary) <= sigma, sigma = sqrt(eps).
// interior_min_bd >= 0 overrides the sigma rule for interior draws.
std::vector<Vec> draw_query_points(const ManifoldModel& m, const QuerySpec& spec,
                                   double eps, std::uint64_t key,
                                   double interior_min_bd = -1.0);

// ---------------------------------------------------------------------------
// Rate regression
// ---------------------------------------------------------------------------

struct RegressResult {
  double slope = 0.0;
  double intercept = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool floored = false;     // some error was <= 0 and floored at 1e-15
  bool near_floor = false;  // a mean sits at the solver noise floor; the
                            // slope is not meaningful
};

// OLS of log(mean err per eps) on log(eps); the CI is a 1000-resample
// bootstrap over the point-level errors within each eps.
RegressResult rate_regress(const std::vector<std::pair<double, double>>& points,
                           int n_boot = 1000, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Convergence experiment
// ---------------------------------------------------------------------------

struct ConvergenceConfig {
  ManifoldModel model = ManifoldModel::sphere(2);
  DensityModel density = DensityModel::uniform(ManifoldModel::sphere(2));
  ScalarField field = ScalarField::constant(0.0);
  std::vector<double> eps_grid;  // strictly decreasing
  NRule n_rule;
  QuerySpec query;
  int repetitions = 3;
  std::uint64_t seed = 0;
  void validate() const;
};

struct PointErrRow {
  double eps = 0.0;
  long n = 0;
  int rep = 0;
  int point_id = 0;
  ErrorRecord err;
  long k_z = 0;
};

struct EpsSummary {
  double eps = 0.0;
  long n = 0;
  double mean_e_f = 0, mean_e_grad = 0, mean_e_hess = 0, mean_e_trace = 0;
  double p90_e_hess = 0;
  double k_min = 0, k_mean = 0, k_max = 0;
  int failures = 0;
};

struct ConvergenceReport {
  std::vector<PointErrRow> raw;
  std::vector<EpsSummary> per_eps;
  RegressResult slope_f, slope_grad, slope_hess, slope_trace;
  std::string region;  // "interior" | "boundary" | "fixed"
};

ConvergenceReport convergence_run(const ConvergenceConfig& config);

// ---------------------------------------------------------------------------
// Gram deviation experiment
// ---------------------------------------------------------------------------

struct GramConfig {
  ManifoldModel model = ManifoldModel::flat_disk(2, 2);
  DensityModel density = DensityModel::uniform(ManifoldModel::flat_disk(2, 2));
  std::vector<double> eps_grid;
  NRule n_rule;
  int repetitions = 2;
  int query_count = 4;
  std::uint64_t seed = 0;
  GramVariant variant = GramVariant::InteriorDirect;
};

struct GramBlockRow {
  std::string block;        // "AA".."DD"
  std::vector<double> dev;  // max-abs deviation per eps (mean over queries/reps)
  double w_order = 0;       // predicted bias power of eps
  double ld_order = 0;      // predicted eps power multiplying omega
  double ratio_obs = 0;     // dev(eps_max)/dev(eps_min)
  double ratio_pred = 0;
  double slope = 0;
  bool pass = false;
};

struct GramReport {
  std::vector<double> eps_grid;
  std::vector<long> n_grid;
  std::vector<GramBlockRow> blocks;
};

GramReport gram_deviation_experiment(const GramConfig& config);

// ---------------------------------------------------------------------------
// Discrete squared Hessian energy
// ---------------------------------------------------------------------------

// Monte Carlo discretization of the squared Hessian energy: the mean over
// query points of |Hess|_F^2 / rho(z). weights[j] must be 1/rho(z_j).
double hessian_energy(const PointCloud& cloud, const Vec& fvals, double eps, int d,
                      const std::vector<long>& query_idx, const Vec& weights,
                      const NeighborIndex* index = nullptr);

}  // namespace hessfit

#endif
