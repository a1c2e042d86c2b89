#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "mcs/mesh.hpp"

namespace mcs {

using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Axis-angle rotation. Exact for any magnitude; Taylor branch below 1e-8.
Matrix3d rodrigues(const Vec3& omega);

/// Partial derivatives dR/d(omega_a), a = 0..2, at the given omega.
std::array<Matrix3d, 3> rodrigues_jacobian(const Vec3& omega);

/// Articulated pose: one axis-angle 3-vector per joint (flattened,
/// joint-major) plus a global translation in meters.
struct Pose {
  VectorXd joint_rotations;  // 3K
  Vec3 translation = Vec3::Zero();

  int joint_count() const { return static_cast<int>(joint_rotations.size()) / 3; }
  Vec3 omega(int joint) const { return joint_rotations.segment<3>(3 * joint); }

  static Pose zero(int joint_count) {
    Pose p;
    p.joint_rotations = VectorXd::Zero(3 * joint_count);
    return p;
  }
};

/// Rest-pose template shared with the model topology (houses the estimated,
/// fused, per-frame-cloth, and ground-truth shapes).
using RestShape = std::vector<Vec3>;

/// Skinned parametric body. Flattened vertex arrays are vertex-major:
/// row 3i+c is coordinate c of vertex i. The pose basis column block for
/// joint m (m >= 1) is contracted with the column-major vec of (R_m - I);
/// the root joint drives no corrective offsets, hence 9(K-1) columns.
struct BodyModel {
  RestShape rest_template;                 // N
  std::vector<std::array<int, 3>> faces;
  MatrixXd shape_basis;                    // 3N x B
  MatrixXd pose_basis;                     // 3N x 9(K-1)
  MatrixXd joint_regressor;                // K x N, rows sum to 1
  MatrixXd skin_weights;                   // N x K, rows sum to 1, >= 0
  std::vector<int> kinematic_parents;      // K, parents[0] = -1
  VectorXd pose_prior_mean;                // 3K
  MatrixXd pose_prior_cov;                 // 3K x 3K, SPD
  std::vector<int> part_labels;            // N

  int vertex_count() const { return static_cast<int>(rest_template.size()); }
  int joint_count() const { return static_cast<int>(kinematic_parents.size()); }
  int shape_dim() const { return static_cast<int>(shape_basis.cols()); }

  /// 3 x B slice of the shape basis for one vertex.
  Eigen::Block<const MatrixXd> shape_rows(int vertex) const {
    return shape_basis.middleRows(3 * vertex, 3);
  }

  /// Throws std::runtime_error naming the offending array on any
  /// invariant violation (weight rows, tree structure, SPD prior, dims).
  void validate() const;
};

/// B_s(beta): per-vertex shape offsets, linear in beta.
std::vector<Vec3> shape_blendshape(const BodyModel& model, const VectorXd& beta);

/// B_p(theta): per-vertex corrective offsets from the vectorized (R_k - I),
/// k = 1..K-1. Zero pose gives exactly zero.
std::vector<Vec3> pose_blendshape(const BodyModel& model, const Pose& pose);

/// J = J_reg * rest_vertices.
std::vector<Vec3> regress_joints(const BodyModel& model, const RestShape& rest);

/// Linear blend skinning: world transform per joint by forward kinematics
/// (each joint rotates about its rest location), blended per vertex, plus t.
std::vector<Vec3> skin(const RestShape& rest_vertices,
                       const std::vector<Vec3>& joints, const Pose& pose,
                       const MatrixXd& weights,
                       const std::vector<int>& parents);

/// Full model evaluation: skin(rest + B_s(beta_extra) + B_p(pose), ...) with
/// joints regressed from the shaped rest vertices. rest = the model template
/// reproduces the standard shape-and-pose surface; rest = a free-form
/// template poses that template (pose correctives stay active).
TriMesh pose_model(const BodyModel& model, const RestShape& rest,
                   const VectorXd* beta_extra, const Pose& pose);

/// Forward kinematics with every intermediate cached, exposing analytic
/// derivatives of the posed vertices. Construction runs the forward pass.
class PosedBody {
 public:
  PosedBody(const BodyModel& model, const RestShape& rest,
            const VectorXd* beta_extra, const Pose& pose);

  const std::vector<Vec3>& vertices() const { return posed_; }
  const std::vector<Vec3>& rest_joints() const { return joints_; }
  const std::vector<Vec3>& shaped_rest() const { return x_; }
  TriMesh mesh() const;

  /// S_i = sum_k W_ik R_k (world rotations blended by skin weight).
  const Matrix3d& blend_rotation(int vertex) const { return blend_rot_[vertex]; }

  /// d(posed vertex)/d(theta): 3 x 3K, covering both the kinematic chain
  /// and the pose-corrective path. Root columns carry the chain part only.
  Eigen::Matrix<double, 3, Eigen::Dynamic> theta_jacobian(int vertex) const;

  /// Adjoint pass: scatter dE/d(posed vertex) into parameter gradients.
  /// Any output may be null. d_rest receives the full derivative including
  /// the joint-regressor path; d_beta is populated only when the body was
  /// built with beta offsets engaged (otherwise left untouched).
  void backward(const std::vector<Vec3>& grad_posed, std::vector<Vec3>* d_rest,
                VectorXd* d_beta, VectorXd* d_theta, Vec3* d_t) const;

  const BodyModel& model() const { return *model_; }

 private:
  Vec3 carried(int vertex, int joint) const;  // y_ik, world pos before t

  const BodyModel* model_;
  bool beta_engaged_;
  Vec3 translation_;
  std::vector<Vec3> x_;            // rest + B_s + B_p
  std::vector<Vec3> joints_;       // rest joints j_k
  std::vector<Matrix3d> world_rot_;      // R_k (accumulated)
  std::vector<Vec3> world_origin_;       // a_k
  std::vector<Matrix3d> local_drot_[3];  // dR_k/d(omega_a), local
  std::vector<Matrix3d> chain_drot_[3];  // D = R_parent dR R_k^T
  std::vector<Matrix3d> blend_rot_;      // S_i
  std::vector<Vec3> posed_;
  std::vector<int> topo_order_;          // parents before children
  std::vector<std::vector<bool>> in_subtree_;  // [m][k]
};

}  // namespace mcs
