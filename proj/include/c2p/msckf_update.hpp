#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "c2p/filter_state.hpp"
#include "c2p/measurement.hpp"

namespace c2p {

/// All observations of one plane, stacked in frame order.
struct StackedPlaneObservations {
  Eigen::VectorXd residual;
  Eigen::MatrixXd H_x;
  Eigen::MatrixXd H_pi;  // rows x 3
};

StackedPlaneObservations stack_plane_observations(std::span<const CompressedMeasurement> obs);
StackedPlaneObservations stack_plane_observations(std::span<const PointMeasurements> obs);

/// Residual and state Jacobian with the plane error projected out.
struct ProjectedMeasurementBlock {
  Eigen::VectorXd residual;
  Eigen::MatrixXd H_x;
  double noise_variance = 0.0;
  double nullspace_error = 0.0;  // max |N^T H_pi| of the basis used

  Eigen::Index rows() const { return residual.size(); }
};

/// Orthonormal basis of the left null space of H_pi (rows - rank columns).
Eigen::MatrixXd left_nullspace(const Eigen::MatrixXd& H_pi);

/// Projects (r, H_x) onto the left null space of H_pi. Returns nullopt when
/// rows <= rank(H_pi), i.e. the plane leaves no constraint on the state.
std::optional<ProjectedMeasurementBlock> nullspace_project(const Eigen::VectorXd& r,
                                                           const Eigen::MatrixXd& H_x,
                                                           const Eigen::MatrixXd& H_pi,
                                                           double noise_variance);

class SingularInformation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct UpdateOptions {
  bool chi2_gate = false;
  double chi2_probability = 0.95;
};

struct UpdateReport {
  Eigen::Index rows = 0;
  int blocks_used = 0;
  int blocks_gated = 0;
  double trace_before = 0.0;
  double trace_after = 0.0;
  std::vector<double> mahalanobis;  // one per input block; empty when gating is off
};

/// One EKF update with independent blocks. The gain is the information form
/// (P^-1 + H^T R^-1 H)^-1 H^T R^-1, evaluated as (I + P Lambda)^-1 P H^T R^-1
/// so that a singular prior (right after cloning) is handled.
FilterState ekf_update(const FilterState& state, std::span<const ProjectedMeasurementBlock> blocks,
                       const UpdateOptions& options = {}, UpdateReport* report = nullptr);

/// (P^-1 + H^T R^-1 H)^-1 H^T R^-1; P and R must be invertible.
Eigen::MatrixXd kalman_gain_information_form(const Eigen::MatrixXd& P, const Eigen::MatrixXd& H,
                                             const Eigen::MatrixXd& R);
/// P H^T (H P H^T + R)^-1
Eigen::MatrixXd kalman_gain_standard(const Eigen::MatrixXd& P, const Eigen::MatrixXd& H,
                                     const Eigen::MatrixXd& R);

}  // namespace c2p
