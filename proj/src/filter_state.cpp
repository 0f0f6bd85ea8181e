#include "c2p/filter_state.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace c2p {

std::size_t FilterState::clone_index(FrameId id) const {
  for (std::size_t i = 0; i < clones.size(); ++i) {
    if (clones[i].frame_id == id) return i;
  }
  throw std::out_of_range("no clone for frame " + std::to_string(id));
}

double FilterState::symmetry_error() const {
  return (covariance - covariance.transpose()).cwiseAbs().maxCoeff();
}

double FilterState::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

void FilterState::audit(double symmetry_tol, double psd_tol) const {
  if (covariance.rows() != dim() || covariance.cols() != dim()) {
    throw std::logic_error("covariance dimension does not match 6*clones+15");
  }
  if (!covariance.allFinite()) throw std::logic_error("covariance has non-finite entries");
  if (symmetry_error() > symmetry_tol) throw std::logic_error("covariance not symmetric");
  if (min_eigenvalue() < psd_tol) throw std::logic_error("covariance not PSD");
  for (std::size_t i = 1; i < clones.size(); ++i) {
    if (!(clones[i].timestamp > clones[i - 1].timestamp)) {
      throw std::logic_error("clone timestamps not strictly increasing");
    }
  }
}

void symmetrize(Eigen::MatrixXd& P) {
  P = 0.5 * (P + P.transpose()).eval();
}

FilterState augment_clone(const FilterState& state, double t, FrameId frame_id) {
  if (!state.clones.empty() && !(t > state.clones.back().timestamp)) {
    throw RejectedInput("clone timestamp must be strictly increasing");
  }
  if (!std::isfinite(t)) throw RejectedInput("clone timestamp must be finite");

  const int n = state.dim();
  // J selects (dtheta, dp) of the IMU block, which occupy the first six rows.
  const Eigen::MatrixXd JP = state.covariance.topRows(kCloneErrorDim);

  FilterState out = state;
  out.covariance.resize(n + kCloneErrorDim, n + kCloneErrorDim);
  out.covariance.topLeftCorner(n, n) = state.covariance;
  out.covariance.bottomLeftCorner(kCloneErrorDim, n) = JP;
  out.covariance.topRightCorner(n, kCloneErrorDim) = JP.transpose();
  out.covariance.bottomRightCorner(kCloneErrorDim, kCloneErrorDim) =
      JP.leftCols(kCloneErrorDim);
  out.clones.push_back({t, frame_id, state.nav.pose()});
  return out;
}

FilterState marginalize_oldest(const FilterState& state) {
  if (state.clones.empty()) throw std::logic_error("marginalize_oldest on empty window");
  const int n = state.dim();
  const int keep_tail = n - kImuErrorDim - kCloneErrorDim;

  FilterState out;
  out.nav = state.nav;
  out.clones.assign(state.clones.begin() + 1, state.clones.end());
  out.covariance.resize(n - kCloneErrorDim, n - kCloneErrorDim);
  const int I = kImuErrorDim;
  const int tail0 = I + kCloneErrorDim;
  out.covariance.topLeftCorner(I, I) = state.covariance.topLeftCorner(I, I);
  out.covariance.block(0, I, I, keep_tail) = state.covariance.block(0, tail0, I, keep_tail);
  out.covariance.block(I, 0, keep_tail, I) = state.covariance.block(tail0, 0, keep_tail, I);
  out.covariance.block(I, I, keep_tail, keep_tail) =
      state.covariance.block(tail0, tail0, keep_tail, keep_tail);
  return out;
}

FilterState apply_correction(const FilterState& state, const Eigen::VectorXd& dx) {
  if (dx.size() != state.dim()) {
    throw RejectedInput("correction dimension " + std::to_string(dx.size()) +
                        " != state dimension " + std::to_string(state.dim()));
  }
  FilterState out = state;
  ImuNavState& nav = out.nav;
  nav.orientation = nav.orientation.boxplus(dx.segment<3>(kThetaIdx));
  nav.position += dx.segment<3>(kPosIdx);
  nav.velocity += dx.segment<3>(kVelIdx);
  nav.gyro_bias += dx.segment<3>(kBgIdx);
  nav.accel_bias += dx.segment<3>(kBaIdx);
  for (std::size_t i = 0; i < out.clones.size(); ++i) {
    const int o = FilterState::clone_offset(i);
    Pose& pose = out.clones[i].pose;
    pose.rotation = pose.rotation.boxplus(dx.segment<3>(o));
    pose.position += dx.segment<3>(o + 3);
  }
  return out;
}

const char* state_csv_header(bool with_cov_diagonal) {
  return with_cov_diagonal
             ? "t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,bgx,bgy,bgz,bax,bay,baz,"
               "var_thx,var_thy,var_thz,var_px,var_py,var_pz,var_vx,var_vy,var_vz,"
               "var_bgx,var_bgy,var_bgz,var_bax,var_bay,var_baz"
             : "t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,bgx,bgy,bgz,bax,bay,baz";
}

void write_state_row(std::ostream& os, const FilterState& state, bool with_cov_diagonal) {
  const ImuNavState& n = state.nav;
  const Eigen::Quaterniond& q = n.orientation.quaternion();
  std::ostringstream ss;
  ss.precision(17);
  ss << n.timestamp << ',' << n.position.x() << ',' << n.position.y() << ',' << n.position.z()
     << ',' << q.w() << ',' << q.x() << ',' << q.y() << ',' << q.z() << ',' << n.velocity.x()
     << ',' << n.velocity.y() << ',' << n.velocity.z() << ',' << n.gyro_bias.x() << ','
     << n.gyro_bias.y() << ',' << n.gyro_bias.z() << ',' << n.accel_bias.x() << ','
     << n.accel_bias.y() << ',' << n.accel_bias.z();
  if (with_cov_diagonal) {
    for (int i = 0; i < kImuErrorDim; ++i) ss << ',' << state.covariance(i, i);
  }
  os << ss.str() << '\n';
}

}  // namespace c2p
