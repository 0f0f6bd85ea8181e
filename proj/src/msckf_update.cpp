#include "c2p/msckf_update.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>
#include <boost/math/distributions/chi_squared.hpp>

namespace c2p {

namespace {

template <typename Obs>
StackedPlaneObservations stack_impl(std::span<const Obs> obs, auto rows_of) {
  if (obs.empty()) return {};
  Eigen::Index rows = 0;
  const Eigen::Index cols = obs.front().H_x.cols();
  for (const Obs& o : obs) {
    if (o.H_x.cols() != cols) throw RejectedInput("observations disagree on state dimension");
    rows += rows_of(o);
  }
  StackedPlaneObservations s;
  s.residual.resize(rows);
  s.H_x.resize(rows, cols);
  s.H_pi.resize(rows, 3);
  Eigen::Index at = 0;
  for (const Obs& o : obs) {
    const Eigen::Index m = rows_of(o);
    s.residual.segment(at, m) = o.residual;
    s.H_x.middleRows(at, m) = o.H_x;
    s.H_pi.middleRows(at, m) = o.H_pi;
    at += m;
  }
  return s;
}

double chi2_threshold(Eigen::Index dof, double probability) {
  boost::math::chi_squared dist(static_cast<double>(dof));
  return boost::math::quantile(dist, probability);
}

}  // namespace

StackedPlaneObservations stack_plane_observations(std::span<const CompressedMeasurement> obs) {
  return stack_impl(obs, [](const CompressedMeasurement&) { return Eigen::Index{4}; });
}

StackedPlaneObservations stack_plane_observations(std::span<const PointMeasurements> obs) {
  return stack_impl(obs, [](const PointMeasurements& o) { return o.residual.size(); });
}

Eigen::MatrixXd left_nullspace(const Eigen::MatrixXd& H_pi) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(H_pi);
  const Eigen::Index rank = qr.rank();
  const Eigen::Index m = H_pi.rows();
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(m, m);
  return Q.rightCols(m - rank);
}

std::optional<ProjectedMeasurementBlock> nullspace_project(const Eigen::VectorXd& r,
                                                           const Eigen::MatrixXd& H_x,
                                                           const Eigen::MatrixXd& H_pi,
                                                           double noise_variance) {
  const Eigen::Index m = H_pi.rows();
  if (r.size() != m || H_x.rows() != m) throw RejectedInput("nullspace_project: row mismatch");
  if (!(noise_variance > 0.0)) throw RejectedInput("noise variance must be positive");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(H_pi);
  const Eigen::Index rank = qr.rank();
  if (m <= rank) return std::nullopt;

  // Apply Q^T to [r H_x H_pi] without forming Q; the trailing rows are N^T (.).
  Eigen::MatrixXd joint(m, 1 + H_x.cols() + H_pi.cols());
  joint << r, H_x, H_pi;
  joint.applyOnTheLeft(qr.householderQ().adjoint());

  ProjectedMeasurementBlock b;
  const Eigen::Index k = m - rank;
  b.residual = joint.col(0).tail(k);
  b.H_x = joint.block(rank, 1, k, H_x.cols());
  const double scale = std::max(H_pi.cwiseAbs().maxCoeff(), 1e-300);
  b.nullspace_error = joint.bottomRightCorner(k, H_pi.cols()).cwiseAbs().maxCoeff() / scale;
  b.noise_variance = noise_variance;
#ifndef NDEBUG
  if (b.nullspace_error > 1e-10) throw std::logic_error("null-space basis is not orthogonal to H_pi");
#endif
  return b;
}

FilterState ekf_update(const FilterState& state, std::span<const ProjectedMeasurementBlock> blocks,
                       const UpdateOptions& options, UpdateReport* report) {
  const Eigen::Index n = state.dim();
  const Eigen::MatrixXd& P = state.covariance;
  UpdateReport local;
  local.trace_before = P.trace();

  Eigen::MatrixXd Lambda = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (const ProjectedMeasurementBlock& blk : blocks) {
    if (blk.H_x.cols() != n || blk.H_x.rows() != blk.residual.size()) {
      throw RejectedInput("measurement block does not match the state dimension");
    }
    if (blk.rows() == 0) continue;
    if (options.chi2_gate) {
      Eigen::MatrixXd S = blk.H_x * P * blk.H_x.transpose();
      S.diagonal().array() += blk.noise_variance;
      const double d2 = blk.residual.dot(S.ldlt().solve(blk.residual));
      local.mahalanobis.push_back(d2);
      if (d2 > chi2_threshold(blk.rows(), options.chi2_probability)) {
        ++local.blocks_gated;
        continue;
      }
    }
    const double w = 1.0 / blk.noise_variance;
    Lambda.selfadjointView<Eigen::Lower>().rankUpdate(blk.H_x.transpose(), w);
    b.noalias() += w * blk.H_x.transpose() * blk.residual;
    local.rows += blk.rows();
    ++local.blocks_used;
  }

  if (local.blocks_used == 0) {
    local.trace_after = local.trace_before;
    if (report) *report = std::move(local);
    return state;
  }
  Lambda.triangularView<Eigen::StrictlyUpper>() = Lambda.transpose();

  Eigen::MatrixXd M = P * Lambda;
  M.diagonal().array() += 1.0;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14) || !std::isfinite(rcond)) {
    std::ostringstream msg;
    msg << "update system is singular (rcond " << rcond << ", dim " << n << ", rows "
        << local.rows << ")";
    throw SingularInformation(msg.str());
  }
  Eigen::MatrixXd P_post = lu.solve(P);
  symmetrize(P_post);
  const Eigen::VectorXd dx = P_post * b;

  FilterState out = apply_correction(state, dx);
  out.covariance = std::move(P_post);
  local.trace_after = out.covariance.trace();
  if (report) *report = std::move(local);
  return out;
}

Eigen::MatrixXd kalman_gain_information_form(const Eigen::MatrixXd& P, const Eigen::MatrixXd& H,
                                             const Eigen::MatrixXd& R) {
  const Eigen::MatrixXd Rinv = R.llt().solve(Eigen::MatrixXd::Identity(R.rows(), R.cols()));
  const Eigen::MatrixXd Pinv = P.llt().solve(Eigen::MatrixXd::Identity(P.rows(), P.cols()));
  const Eigen::MatrixXd info = Pinv + H.transpose() * Rinv * H;
  return info.llt().solve(H.transpose() * Rinv);
}

Eigen::MatrixXd kalman_gain_standard(const Eigen::MatrixXd& P, const Eigen::MatrixXd& H,
                                     const Eigen::MatrixXd& R) {
  const Eigen::MatrixXd S = H * P * H.transpose() + R;
  return S.llt().solve(H * P).transpose();
}

}  // namespace c2p
