#ifndef HESSFIT_ESTIMATOR_HPP
#define HESSFIT_ESTIMATOR_HPP

#include <unordered_map>
#include <vector>

#include "hessfit/common.hpp"
#include "hessfit/errors.hpp"
#include "hessfit/manifold.hpp"

namespace hessfit {

// ---------------------------------------------------------------------------
// Neighbor queries
// ---------------------------------------------------------------------------

// Exactly the indices with ||x_i - z|| <= eps (closed ball), ascending.
std::vector<long> epsilon_neighbors(const PointCloud& cloud, const Vec& z, double eps);

// Uniform-grid accelerator with cell size eps. Returns the identical set as
// the brute-force scan (same distance arithmetic on candidates).
class NeighborIndex {
public:
  NeighborIndex(const PointCloud& cloud, double eps);
  std::vector<long> query(const Vec& z) const;
  double eps() const { return eps_; }

private:
  const PointCloud& cloud_;
  double eps_;
  std::unordered_map<std::uint64_t, std::pair<std::int64_t, std::int64_t>> cells_;
  std::vector<long> order_;  // point ids grouped by cell
  std::uint64_t cell_key(const Vec& z, const std::vector<int>& shift) const;
};

// ---------------------------------------------------------------------------
// Local quadratic fit
// ---------------------------------------------------------------------------

// Everything produced at one query point.
struct LocalFit {
  Vec z;
  double eps = 0.0;
  std::vector<long> neighbor_idx;
  Mat U;      // p x d orthonormal, local PCA basis
  Mat Q;      // k x d projected coordinates, row j = U^T (x_j - z)
  Mat Z;      // k x (1 + 2d + d(d-1)/2) design matrix
  double cond = 0.0;  // condition number estimate of Z^T Z
  int rank = 0;
  long k() const { return static_cast<long>(neighbor_idx.size()); }
};

struct HessianEstimate {
  double f0 = 0.0;
  Vec grad;      // d, in the basis U
  Mat hess;      // d x d symmetric, in the basis U
  Mat basis;     // p x d (U)
  long k_z = 0;
  double cond = 0.0;
};

// 1-based position of the pair (i,j), i<j, inside the d(d+1)/2-long
// quadratic coefficient block: diagonal first, then off-diagonal pairs in
// row-major upper-triangular order (1,2),(1,3),...,(d-1,d).
long hess_block_index(int i, int j, int d);

// Local PCA per Algorithm "run SVD on [x_{z,1}-z ... x_{z,k}-z]": the top d
// left singular vectors, no mean-centering. Deterministic sign convention:
// the entry of largest magnitude in each column is made positive.
// RankDeficient if sigma_d / sigma_1 < 1e-10.
Mat local_pca(const PointCloud& cloud, const std::vector<long>& neighbor_idx,
              const Vec& z, int d);

Mat project(const Mat& U, const PointCloud& cloud,
            const std::vector<long>& neighbor_idx, const Vec& z);

// Columns: [1 | q_1..q_d | q_1^2..q_d^2 | q_s q_t, s<t row-major].
Mat build_design_matrix(const Mat& Q);

// Least-squares minimizer of ||fvals - Z G|| by Householder QR (the normal
// equations are never formed). cond receives a cond(Z^T Z) estimate.
// TooFewNeighbors when k < 1 + d + d(d+1)/2; IllConditioned when
// cond(Z^T Z) > 1e12.
Vec solve_fit(const Mat& Z, const Vec& fvals, double* cond = nullptr,
              int* rank = nullptr);

// Unpack a coefficient vector into (f0, grad, hess).
HessianEstimate extract(const Vec& G, int d);

LocalFit build_local_fit(const PointCloud& cloud, const Vec& z, double eps, int d,
                         const NeighborIndex* index = nullptr);

HessianEstimate estimate_at(const PointCloud& cloud, const Vec& fvals, const Vec& z,
                            double eps, int d, const NeighborIndex* index = nullptr);

// Same pipeline with a caller-supplied projection basis (exact tangent plane
// experiments, basis-invariance tests).
HessianEstimate estimate_with_basis(const PointCloud& cloud, const Vec& fvals,
                                    const Vec& z, double eps, const Mat& U,
                                    const NeighborIndex* index = nullptr);

// Orthogonal Procrustes: argmin_R ||U R - E||_F over orthogonal R.
// DegenerateOverlap if sigma_min(U^T E) < 1e-8.
Mat align_frames(const Mat& U, const Mat& E);

struct ErrorRecord {
  double e_f = 0.0;
  double e_grad = 0.0;
  double e_hess_frob = 0.0;
  double e_trace = 0.0;
};

ErrorRecord estimate_error(const HessianEstimate& est, double f_true,
                           const Vec& grad_true, const Mat& hess_true, const Mat& R);

}  // namespace hessfit

#endif
