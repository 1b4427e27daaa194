#include "hessfit/estimator.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace hessfit {

std::vector<long> epsilon_neighbors(const PointCloud& cloud, const Vec& z, double eps) {
  if (!(eps > 0)) throw ValidationError("eps must be positive");
  if (cloud.p() != z.size()) throw DimensionMismatch("query dim != cloud dim");
  std::vector<long> out;
  const double e2 = eps * eps;
  const long n = cloud.n();
  for (long i = 0; i < n; ++i) {
    if ((cloud.points.row(i).transpose() - z).squaredNorm() <= e2) out.push_back(i);
  }
  return out;
}

NeighborIndex::NeighborIndex(const PointCloud& cloud, double eps)
    : cloud_(cloud), eps_(eps) {
  if (!(eps > 0)) throw ValidationError("eps must be positive");
  const long n = cloud.n();
  const int p = cloud.p();
  std::vector<std::uint64_t> keys(n);
  for (long i = 0; i < n; ++i) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int c = 0; c < p; ++c) {
      const auto cell = static_cast<std::int64_t>(std::floor(cloud.points(i, c) / eps));
      h = splitmix64(h ^ static_cast<std::uint64_t>(cell) ^ (0x100000001b3ULL * (c + 1)));
    }
    keys[i] = h;
    ++cells_[h].second;
  }
  std::int64_t off = 0;
  for (auto& [k, v] : cells_) {
    v.first = off;
    off += v.second;
    v.second = 0;  // reused as fill cursor
  }
  order_.resize(n);
  for (long i = 0; i < n; ++i) {
    auto& v = cells_[keys[i]];
    order_[v.first + v.second++] = i;
  }
}

std::uint64_t NeighborIndex::cell_key(const Vec& z, const std::vector<int>& shift) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int c = 0; c < z.size(); ++c) {
    const auto cell =
        static_cast<std::int64_t>(std::floor(z[c] / eps_)) + shift[c];
    h = splitmix64(h ^ static_cast<std::uint64_t>(cell) ^ (0x100000001b3ULL * (c + 1)));
  }
  return h;
}

std::vector<long> NeighborIndex::query(const Vec& z) const {
  const int p = cloud_.p();
  if (z.size() != p) throw DimensionMismatch("query dim != cloud dim");
  std::vector<long> out;
  const double e2 = eps_ * eps_;
  std::vector<int> shift(p, -1);
  for (;;) {
    auto it = cells_.find(cell_key(z, shift));
    if (it != cells_.end()) {
      const auto [start, count] = it->second;
      for (std::int64_t k = 0; k < count; ++k) {
        const long i = order_[start + k];
        if ((cloud_.points.row(i).transpose() - z).squaredNorm() <= e2) out.push_back(i);
      }
    }
    int c = 0;
    for (; c < p; ++c) {
      if (++shift[c] <= 1) break;
      shift[c] = -1;
    }
    if (c == p) break;
  }
  std::sort(out.begin(), out.end());
  // a 64-bit cell-hash collision between adjacent cells would scan a bucket
  // twice; dedup keeps the result identical to the brute-force scan
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

long hess_block_index(int i, int j, int d) {
  if (i == j) return i;  // 1-based diagonal slot
  if (i > j) std::swap(i, j);
  // pairs of row r occupy d - r slots after the diagonal block
  long pos = d;
  pos += static_cast<long>(i - 1) * d - static_cast<long>(i) * (i - 1) / 2;
  pos += j - i;
  return pos;
}

Mat local_pca(const PointCloud& cloud, const std::vector<long>& neighbor_idx,
              const Vec& z, int d) {
  const long k = static_cast<long>(neighbor_idx.size());
  const int p = cloud.p();
  if (k < d) throw RankDeficient("k_z < d neighbors for local PCA");
  // Top-d eigenvectors of sum (x-z)(x-z)^T equal the top-d left singular
  // vectors of [x_1 - z ... x_k - z].
  Mat M = Mat::Zero(p, p);
  Vec diff(p);
  for (long j = 0; j < k; ++j) {
    diff = cloud.points.row(neighbor_idx[j]).transpose() - z;
    M.selfadjointView<Eigen::Lower>().rankUpdate(diff);
  }
  M = M.selfadjointView<Eigen::Lower>();
  Eigen::SelfAdjointEigenSolver<Mat> es(M);
  if (es.info() != Eigen::Success) throw RankDeficient("eigensolver failed");
  const Vec evals = es.eigenvalues();  // ascending
  const double s1 = std::sqrt(std::max(0.0, evals[p - 1]));
  const double sd = std::sqrt(std::max(0.0, evals[p - d]));
  if (!(s1 > 0.0) || sd / s1 < 1e-10)
    throw RankDeficient("sigma_d / sigma_1 < 1e-10 in local PCA");
  Mat U(p, d);
  for (int c = 0; c < d; ++c) U.col(c) = es.eigenvectors().col(p - 1 - c);
  // sign convention: largest-magnitude entry positive
  for (int c = 0; c < d; ++c) {
    int arg = 0;
    U.col(c).cwiseAbs().maxCoeff(&arg);
    if (U(arg, c) < 0) U.col(c) = -U.col(c);
  }
  return U;
}

Mat project(const Mat& U, const PointCloud& cloud,
            const std::vector<long>& neighbor_idx, const Vec& z) {
  const long k = static_cast<long>(neighbor_idx.size());
  Mat Q(k, U.cols());
  for (long j = 0; j < k; ++j)
    Q.row(j) = (cloud.points.row(neighbor_idx[j]).transpose() - z).transpose() * U;
  return Q;
}

Mat build_design_matrix(const Mat& Q) {
  const long k = Q.rows();
  const int d = static_cast<int>(Q.cols());
  Mat Z(k, design_cols(d));
  Z.col(0).setOnes();
  Z.middleCols(1, d) = Q;
  Z.middleCols(1 + d, d) = Q.cwiseProduct(Q);
  long c = 1 + 2L * d;
  for (int s = 0; s < d; ++s)
    for (int t = s + 1; t < d; ++t) Z.col(c++) = Q.col(s).cwiseProduct(Q.col(t));
  return Z;
}

Vec solve_fit(const Mat& Z, const Vec& fvals, double* cond_out, int* rank_out) {
  const long k = Z.rows();
  const long mcols = Z.cols();
  // column count is 1 + 2d + d(d-1)/2 = 1 + d + d(d+1)/2
  if (k < mcols)
    throw TooFewNeighbors("k_z = " + std::to_string(k) + " < " +
                          std::to_string(mcols) + " required for the fit");
  if (fvals.size() != k) throw DimensionMismatch("fvals size != neighbor count");
  Eigen::HouseholderQR<Mat> qr(Z);
  const Mat R = qr.matrixQR().topRows(mcols).triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<Mat> svd(R);
  const double smax = svd.singularValues()[0];
  const double smin = svd.singularValues()[mcols - 1];
  const double cond_z = (smin > 0) ? smax / smin : std::numeric_limits<double>::infinity();
  if (cond_out) *cond_out = cond_z * cond_z;  // cond(Z^T Z)
  int rank = 0;
  for (long i = 0; i < mcols; ++i)
    if (svd.singularValues()[i] > 1e-10 * smax) ++rank;
  if (rank_out) *rank_out = rank;
  if (!(cond_z * cond_z <= 1e12))
    throw IllConditioned("cond(Z^T Z) = " + format_g17(cond_z * cond_z) + " > 1e12");
  return qr.solve(fvals);
}

HessianEstimate extract(const Vec& G, int d) {
  if (G.size() != design_cols(d))
    throw BadLength("coefficient vector has length " + std::to_string(G.size()) +
                    ", expected " + std::to_string(design_cols(d)));
  HessianEstimate est;
  est.f0 = G[0];
  est.grad = G.segment(1, d);
  est.hess = Mat::Zero(d, d);
  for (int i = 1; i <= d; ++i) est.hess(i - 1, i - 1) = 2.0 * G[d + i];
  for (int i = 1; i <= d; ++i)
    for (int j = i + 1; j <= d; ++j) {
      const double v = G[d + hess_block_index(i, j, d)];
      est.hess(i - 1, j - 1) = v;
      est.hess(j - 1, i - 1) = v;
    }
  return est;
}

LocalFit build_local_fit(const PointCloud& cloud, const Vec& z, double eps, int d,
                         const NeighborIndex* index) {
  LocalFit fit;
  fit.z = z;
  fit.eps = eps;
  fit.neighbor_idx = index ? index->query(z) : epsilon_neighbors(cloud, z, eps);
  if (fit.neighbor_idx.empty()) throw EmptyNeighborhood("no samples within eps of z");
  fit.U = local_pca(cloud, fit.neighbor_idx, z, d);
  fit.Q = project(fit.U, cloud, fit.neighbor_idx, z);
  fit.Z = build_design_matrix(fit.Q);
  return fit;
}


namespace {

HessianEstimate finish_fit(LocalFit& fit, const Vec& fvals) {
  Vec f(fit.k());
  for (long j = 0; j < fit.k(); ++j) f[j] = fvals[fit.neighbor_idx[j]];
  const Vec G = solve_fit(fit.Z, f, &fit.cond, &fit.rank);
  HessianEstimate est = extract(G, static_cast<int>(fit.U.cols()));
  est.basis = fit.U;
  est.k_z = fit.k();
  est.cond = fit.cond;
  return est;
}

}  // namespace

HessianEstimate estimate_at(const PointCloud& cloud, const Vec& fvals, const Vec& z,
                            double eps, int d, const NeighborIndex* index) {
  if (fvals.size() != cloud.n()) throw DimensionMismatch("fvals size != cloud size");
  LocalFit fit;
  fit.z = z;
  fit.eps = eps;
  fit.neighbor_idx = index ? index->query(z) : epsilon_neighbors(cloud, z, eps);
  if (fit.k() < min_neighbors(d))
    throw TooFewNeighbors("k_z = " + std::to_string(fit.k()) + " < " +
                          std::to_string(min_neighbors(d)));
  fit.U = local_pca(cloud, fit.neighbor_idx, z, d);
  fit.Q = project(fit.U, cloud, fit.neighbor_idx, z);
  fit.Z = build_design_matrix(fit.Q);
  return finish_fit(fit, fvals);
}

HessianEstimate estimate_with_basis(const PointCloud& cloud, const Vec& fvals,
                                    const Vec& z, double eps, const Mat& U,
                                    const NeighborIndex* index) {
  LocalFit fit;
  fit.z = z;
  fit.eps = eps;
  fit.neighbor_idx = index ? index->query(z) : epsilon_neighbors(cloud, z, eps);
  if (fit.neighbor_idx.empty()) throw EmptyNeighborhood("no samples within eps of z");
  fit.U = U;
  fit.Q = project(U, cloud, fit.neighbor_idx, z);
  fit.Z = build_design_matrix(fit.Q);
  return finish_fit(fit, fvals);
}

Mat align_frames(const Mat& U, const Mat& E) {
  if (U.rows() != E.rows() || U.cols() != E.cols())
    throw DimensionMismatch("frames must have equal shape");
  const Mat M = U.transpose() * E;
  Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()[M.cols() - 1] < 1e-8)
    throw DegenerateOverlap("sigma_min(U^T E) < 1e-8");
  return svd.matrixU() * svd.matrixV().transpose();
}

ErrorRecord estimate_error(const HessianEstimate& est, double f_true,
                           const Vec& grad_true, const Mat& hess_true, const Mat& R) {
  ErrorRecord rec;
  rec.e_f = std::abs(est.f0 - f_true);
  rec.e_grad = (R.transpose() * est.grad - grad_true).norm();
  rec.e_hess_frob = (R.transpose() * est.hess * R - hess_true).norm();
  rec.e_trace = std::abs(est.hess.trace() - hess_true.trace());
  return rec;
}

}  // namespace hessfit
