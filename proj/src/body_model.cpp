#include "mcs/body_model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>
#include <string>

namespace mcs {

namespace {

inline Matrix3d skew(const Vec3& w) {
  Matrix3d s;
  s << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return s;
}

inline Eigen::Matrix<double, 9, 1> vec9(const Matrix3d& m) {
  return Eigen::Map<const Eigen::Matrix<double, 9, 1>>(m.data());
}

// Parents-before-children ordering of the kinematic tree.
std::vector<int> topological_order(const std::vector<int>& parents) {
  const int K = static_cast<int>(parents.size());
  std::vector<int> order;
  order.reserve(K);
  std::vector<bool> placed(K, false);
  while (static_cast<int>(order.size()) < K) {
    bool progress = false;
    for (int k = 0; k < K; ++k) {
      if (placed[k]) continue;
      if (parents[k] < 0 || placed[parents[k]]) {
        order.push_back(k);
        placed[k] = true;
        progress = true;
      }
    }
    if (!progress) throw std::runtime_error("kinematic_parents: cycle detected");
  }
  return order;
}

struct ForwardKinematics {
  std::vector<Matrix3d> rot;   // accumulated world rotation per joint
  std::vector<Vec3> origin;    // world origin a_k per joint
};

ForwardKinematics run_fk(const std::vector<Vec3>& joints, const Pose& pose,
                         const std::vector<int>& parents,
                         const std::vector<int>& topo) {
  const int K = static_cast<int>(parents.size());
  ForwardKinematics fk;
  fk.rot.resize(K);
  fk.origin.resize(K);
  for (int k : topo) {
    const Matrix3d local = rodrigues(pose.omega(k));
    if (parents[k] < 0) {
      fk.rot[k] = local;
      fk.origin[k] = joints[k];
    } else {
      const int p = parents[k];
      fk.rot[k] = fk.rot[p] * local;
      fk.origin[k] = fk.origin[p] + fk.rot[p] * (joints[k] - joints[p]);
    }
  }
  return fk;
}

}  // namespace

Matrix3d rodrigues(const Vec3& omega) {
  const double theta = omega.norm();
  const Matrix3d w = skew(omega);
  if (theta < 1e-8) {
    // I + [w] + [w]^2/2; error O(theta^3) is below double rounding here.
    return Matrix3d::Identity() + w + 0.5 * w * w;
  }
  const double s = std::sin(theta) / theta;
  const double c = (1.0 - std::cos(theta)) / (theta * theta);
  return Matrix3d::Identity() + s * w + c * w * w;
}

std::array<Matrix3d, 3> rodrigues_jacobian(const Vec3& omega) {
  const double theta_sq = omega.squaredNorm();
  std::array<Matrix3d, 3> jac;
  if (theta_sq < 1e-16) {
    for (int a = 0; a < 3; ++a) jac[a] = skew(Vec3::Unit(a));
    return jac;
  }
  // Gallego & Yezzi: dR/dw_a = (w_a [w] + [w x (I - R) e_a]) / |w|^2 * R.
  const Matrix3d r = rodrigues(omega);
  const Matrix3d i_minus_r = Matrix3d::Identity() - r;
  const Matrix3d w = skew(omega);
  for (int a = 0; a < 3; ++a) {
    const Vec3 v = omega.cross(i_minus_r.col(a));
    jac[a] = ((omega[a] * w + skew(v)) / theta_sq) * r;
  }
  return jac;
}

void BodyModel::validate() const {
  const int n = vertex_count(), k = joint_count(), b = shape_dim();
  if (n == 0) throw std::runtime_error("rest_template: empty");
  if (k == 0) throw std::runtime_error("kinematic_parents: empty");

  {
    TriMesh m;
    m.vertices = rest_template;
    m.faces = faces;
    validate_mesh(m);
  }

  if (skin_weights.rows() != n || skin_weights.cols() != k)
    throw std::runtime_error("skin_weights: expected " + std::to_string(n) +
                             "x" + std::to_string(k) + ", got " +
                             std::to_string(skin_weights.rows()) + "x" +
                             std::to_string(skin_weights.cols()));
  for (int i = 0; i < n; ++i) {
    if (skin_weights.row(i).minCoeff() < 0.0)
      throw std::runtime_error("skin_weights: row " + std::to_string(i) +
                               " has a negative entry");
    const double sum = skin_weights.row(i).sum();
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::runtime_error("skin_weights: row " + std::to_string(i) +
                               " sums to " + std::to_string(sum));
  }

  if (joint_regressor.rows() != k || joint_regressor.cols() != n)
    throw std::runtime_error("joint_regressor: expected " + std::to_string(k) +
                             "x" + std::to_string(n));
  for (int j = 0; j < k; ++j) {
    const double sum = joint_regressor.row(j).sum();
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::runtime_error("joint_regressor: row " + std::to_string(j) +
                               " sums to " + std::to_string(sum));
  }

  if (kinematic_parents[0] != -1)
    throw std::runtime_error("kinematic_parents: joint 0 must be the root");
  for (int j = 1; j < k; ++j)
    if (kinematic_parents[j] < 0 || kinematic_parents[j] >= k)
      throw std::runtime_error("kinematic_parents: joint " + std::to_string(j) +
                               " has out-of-range parent");
  topological_order(kinematic_parents);  // throws on cycles

  if (shape_basis.rows() != 3 * n || shape_basis.cols() != b)
    throw std::runtime_error("shape_basis: expected " + std::to_string(3 * n) +
                             " rows");
  if (pose_basis.rows() != 3 * n || pose_basis.cols() != 9 * (k - 1))
    throw std::runtime_error("pose_basis: expected " + std::to_string(3 * n) +
                             "x" + std::to_string(9 * (k - 1)));

  if (pose_prior_mean.size() != 3 * k)
    throw std::runtime_error("pose_prior_mean: expected length " +
                             std::to_string(3 * k));
  if (pose_prior_cov.rows() != 3 * k || pose_prior_cov.cols() != 3 * k)
    throw std::runtime_error("pose_prior_cov: expected " +
                             std::to_string(3 * k) + "x" + std::to_string(3 * k));
  if ((pose_prior_cov - pose_prior_cov.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw std::runtime_error("pose_prior_cov: not symmetric");
  Eigen::LLT<MatrixXd> llt(pose_prior_cov);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("pose_prior_cov: not positive definite");

  if (static_cast<int>(part_labels.size()) != n)
    throw std::runtime_error("part_labels: expected length " + std::to_string(n));
}

std::vector<Vec3> shape_blendshape(const BodyModel& model, const VectorXd& beta) {
  if (beta.size() != model.shape_dim())
    throw std::runtime_error("shape_blendshape: beta has length " +
                             std::to_string(beta.size()) + ", model expects " +
                             std::to_string(model.shape_dim()));
  const VectorXd flat = model.shape_basis * beta;
  std::vector<Vec3> offsets(model.vertex_count());
  for (int i = 0; i < model.vertex_count(); ++i)
    offsets[i] = flat.segment<3>(3 * i);
  return offsets;
}

std::vector<Vec3> pose_blendshape(const BodyModel& model, const Pose& pose) {
  const int k = model.joint_count();
  if (pose.joint_count() != k)
    throw std::runtime_error("pose_blendshape: pose has " +
                             std::to_string(pose.joint_count()) +
                             " joints, model expects " + std::to_string(k));
  VectorXd features(9 * (k - 1));
  for (int m = 1; m < k; ++m) {
    const Matrix3d r = rodrigues(pose.omega(m));
    features.segment<9>(9 * (m - 1)) = vec9(r - Matrix3d::Identity());
  }
  const VectorXd flat = model.pose_basis * features;
  std::vector<Vec3> offsets(model.vertex_count());
  for (int i = 0; i < model.vertex_count(); ++i)
    offsets[i] = flat.segment<3>(3 * i);
  return offsets;
}

std::vector<Vec3> regress_joints(const BodyModel& model, const RestShape& rest) {
  const int n = model.vertex_count();
  if (static_cast<int>(rest.size()) != n)
    throw std::runtime_error("regress_joints: vertex count mismatch");
  std::vector<Vec3> joints(model.joint_count(), Vec3::Zero());
  for (int j = 0; j < model.joint_count(); ++j) {
    Vec3 acc = Vec3::Zero();
    for (int i = 0; i < n; ++i) acc += model.joint_regressor(j, i) * rest[i];
    joints[j] = acc;
  }
  return joints;
}

std::vector<Vec3> skin(const RestShape& rest_vertices,
                       const std::vector<Vec3>& joints, const Pose& pose,
                       const MatrixXd& weights,
                       const std::vector<int>& parents) {
  const int n = static_cast<int>(rest_vertices.size());
  const int k = static_cast<int>(parents.size());
  if (weights.rows() != n || weights.cols() != k ||
      static_cast<int>(joints.size()) != k || pose.joint_count() != k)
    throw std::runtime_error("skin: dimension mismatch");

  const auto topo = topological_order(parents);
  const auto fk = run_fk(joints, pose, parents, topo);

  std::vector<Vec3> out(n);
  for (int i = 0; i < n; ++i) {
    Vec3 v = Vec3::Zero();
    for (int j = 0; j < k; ++j) {
      const double w = weights(i, j);
      if (w == 0.0) continue;
      v += w * (fk.rot[j] * (rest_vertices[i] - joints[j]) + fk.origin[j]);
    }
    out[i] = v + pose.translation;
  }
  return out;
}

TriMesh pose_model(const BodyModel& model, const RestShape& rest,
                   const VectorXd* beta_extra, const Pose& pose) {
  PosedBody body(model, rest, beta_extra, pose);
  return body.mesh();
}

PosedBody::PosedBody(const BodyModel& model, const RestShape& rest,
                     const VectorXd* beta_extra, const Pose& pose)
    : model_(&model),
      beta_engaged_(beta_extra != nullptr),
      translation_(pose.translation) {
  const int n = model.vertex_count();
  const int k = model.joint_count();
  if (static_cast<int>(rest.size()) != n)
    throw std::runtime_error("PosedBody: rest shape has " +
                             std::to_string(rest.size()) + " vertices, model " +
                             std::to_string(n));
  if (pose.joint_count() != k)
    throw std::runtime_error("PosedBody: pose joint count mismatch");

  // Shaped rest (joints regress from this), then pose correctives on top.
  RestShape shaped = rest;
  if (beta_extra) {
    const auto offsets = shape_blendshape(model, *beta_extra);
    for (int i = 0; i < n; ++i) shaped[i] += offsets[i];
  }
  joints_ = regress_joints(model, shaped);

  x_ = shaped;
  const auto corrective = pose_blendshape(model, pose);
  for (int i = 0; i < n; ++i) x_[i] += corrective[i];

  topo_order_ = topological_order(model.kinematic_parents);
  const auto fk = run_fk(joints_, pose, model.kinematic_parents, topo_order_);
  world_rot_ = fk.rot;
  world_origin_ = fk.origin;

  for (int a = 0; a < 3; ++a) {
    local_drot_[a].resize(k);
    chain_drot_[a].resize(k);
  }
  for (int m = 0; m < k; ++m) {
    const auto dr = rodrigues_jacobian(pose.omega(m));
    const int p = model.kinematic_parents[m];
    const Matrix3d parent_rot = p < 0 ? Matrix3d::Identity() : world_rot_[p];
    // D_ma = R_parent dR_m R_m_world^T: world-frame generator of the
    // subtree's rigid motion about a_m.
    for (int a = 0; a < 3; ++a) {
      local_drot_[a][m] = dr[a];
      chain_drot_[a][m] = parent_rot * dr[a] * world_rot_[m].transpose();
    }
  }

  in_subtree_.assign(k, std::vector<bool>(k, false));
  for (int j = 0; j < k; ++j) {
    int cur = j;
    while (cur >= 0) {
      in_subtree_[cur][j] = true;
      cur = model.kinematic_parents[cur];
    }
  }

  blend_rot_.assign(n, Matrix3d::Zero());
  posed_.resize(n);
  for (int i = 0; i < n; ++i) {
    Vec3 v = Vec3::Zero();
    for (int j = 0; j < k; ++j) {
      const double w = model.skin_weights(i, j);
      if (w == 0.0) continue;
      blend_rot_[i] += w * world_rot_[j];
      v += w * (world_rot_[j] * (x_[i] - joints_[j]) + world_origin_[j]);
    }
    posed_[i] = v + translation_;
  }
}

TriMesh PosedBody::mesh() const {
  TriMesh m;
  m.vertices = posed_;
  m.faces = model_->faces;
  return m;
}

Vec3 PosedBody::carried(int vertex, int joint) const {
  return world_rot_[joint] * (x_[vertex] - joints_[joint]) +
         world_origin_[joint];
}

Eigen::Matrix<double, 3, Eigen::Dynamic> PosedBody::theta_jacobian(
    int vertex) const {
  const int k = model_->joint_count();
  Eigen::Matrix<double, 3, Eigen::Dynamic> jac(3, 3 * k);
  jac.setZero();
  for (int m = 0; m < k; ++m) {
    // Kinematic-chain path: the subtree below m moves rigidly about a_m.
    Vec3 lever = Vec3::Zero();
    double total_w = 0.0;
    for (int j = 0; j < k; ++j) {
      if (!in_subtree_[m][j]) continue;
      const double w = model_->skin_weights(vertex, j);
      if (w == 0.0) continue;
      lever += w * carried(vertex, j);
      total_w += w;
    }
    for (int a = 0; a < 3; ++a) {
      Vec3 col = Vec3::Zero();
      if (total_w != 0.0)
        col = chain_drot_[a][m] * (lever - total_w * world_origin_[m]);
      // Pose-corrective path (root drives no correctives).
      if (m >= 1) {
        const auto basis = model_->pose_basis.block(3 * vertex, 9 * (m - 1), 3, 9);
        col += blend_rot_[vertex] *
               (basis * vec9(local_drot_[a][m])).eval();
      }
      jac.col(3 * m + a) = col;
    }
  }
  return jac;
}

void PosedBody::backward(const std::vector<Vec3>& grad_posed,
                         std::vector<Vec3>* d_rest, VectorXd* d_beta,
                         VectorXd* d_theta, Vec3* d_t) const {
  const int n = model_->vertex_count();
  const int k = model_->joint_count();
  if (static_cast<int>(grad_posed.size()) != n)
    throw std::runtime_error("backward: adjoint size mismatch");

  if (d_t) {
    Vec3 acc = Vec3::Zero();
    for (const auto& g : grad_posed) acc += g;
    *d_t += acc;
  }

  // Per-joint accumulators: z_j = sum_i W_ij g_i, M_j = sum_i W_ij g_i y_ij^T.
  std::vector<Vec3> z(k, Vec3::Zero());
  std::vector<Matrix3d> moment(k, Matrix3d::Zero());
  std::vector<Vec3> xbar(n);  // dE/dx_i through the blend
  for (int i = 0; i < n; ++i) {
    const Vec3& g = grad_posed[i];
    xbar[i] = blend_rot_[i].transpose() * g;
    for (int j = 0; j < k; ++j) {
      const double w = model_->skin_weights(i, j);
      if (w == 0.0) continue;
      z[j] += w * g;
      moment[j] += (w * g) * carried(i, j).transpose();
    }
  }

  // Suffix sums over the tree (children folded into parents).
  std::vector<Vec3> z_sub = z;
  std::vector<Matrix3d> moment_sub = moment;
  for (auto it = topo_order_.rbegin(); it != topo_order_.rend(); ++it) {
    const int j = *it;
    const int p = model_->kinematic_parents[j];
    if (p < 0) continue;
    z_sub[p] += z_sub[j];
    moment_sub[p] += moment_sub[j];
  }

  if (d_theta) {
    for (int m = 0; m < k; ++m) {
      const Matrix3d lever =
          moment_sub[m] - z_sub[m] * world_origin_[m].transpose();
      for (int a = 0; a < 3; ++a)
        (*d_theta)(3 * m + a) += chain_drot_[a][m].cwiseProduct(lever).sum();
    }
    // Pose-corrective path.
    VectorXd xbar_flat(3 * n);
    for (int i = 0; i < n; ++i) xbar_flat.segment<3>(3 * i) = xbar[i];
    for (int m = 1; m < k; ++m) {
      const Eigen::Matrix<double, 9, 1> c =
          model_->pose_basis.middleCols(9 * (m - 1), 9).transpose() * xbar_flat;
      for (int a = 0; a < 3; ++a)
        (*d_theta)(3 * m + a) += c.dot(vec9(local_drot_[a][m]));
    }
  }

  if (!d_rest && !d_beta) return;

  // Joint-location adjoint: dE/dj_m = (R_parent(m) - R_m)^T z_sub[m],
  // the telescoped chain-walk derivative (zero at the rest pose).
  std::vector<Vec3> d_joint(k);
  for (int m = 0; m < k; ++m) {
    const int p = model_->kinematic_parents[m];
    const Matrix3d parent_rot = p < 0 ? Matrix3d::Identity() : world_rot_[p];
    d_joint[m] = (parent_rot - world_rot_[m]).transpose() * z_sub[m];
  }

  // dE/d(shaped rest) = direct blend path + regressor path.
  std::vector<Vec3> d_shaped = xbar;
  for (int m = 0; m < k; ++m) {
    if (d_joint[m].isZero(0.0)) continue;
    for (int i = 0; i < n; ++i) {
      const double w = model_->joint_regressor(m, i);
      if (w != 0.0) d_shaped[i] += w * d_joint[m];
    }
  }

  if (d_rest)
    for (int i = 0; i < n; ++i) (*d_rest)[i] += d_shaped[i];
  if (d_beta && beta_engaged_) {
    VectorXd flat(3 * n);
    for (int i = 0; i < n; ++i) flat.segment<3>(3 * i) = d_shaped[i];
    *d_beta += model_->shape_basis.transpose() * flat;
  }
}

}  // namespace mcs
