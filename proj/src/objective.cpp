#include "mcs/objective.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mcs {

namespace {

// Robust weight for the residual-squared form: with s = d^2,
// rho(s) = sigma^2 s / (sigma^2 + s) and w = d rho / d s.
inline double gm_value_sq(double s, double sigma) {
  const double s2 = sigma * sigma;
  return s2 * s / (s2 + s);
}

inline double gm_weight_sq(double s, double sigma) {
  const double s2 = sigma * sigma;
  const double denom = s2 + s;
  return s2 * s2 / (denom * denom);
}

int nearest_vertex(const Vec3& p, const std::vector<Vec3>& vertices) {
  int best = 0;
  double best_sq = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(vertices.size()); ++i) {
    const double sq = (p - vertices[i]).squaredNorm();
    if (sq < best_sq) {
      best_sq = sq;
      best = i;
    }
  }
  return best;
}

}  // namespace

void Scan::validate() const {
  if (labels && static_cast<int>(labels->size()) != size())
    throw std::runtime_error("scan: " + std::to_string(labels->size()) +
                             " labels for " + std::to_string(size()) +
                             " points");
  if (skin_weights.size() != size())
    throw std::runtime_error("scan: " + std::to_string(skin_weights.size()) +
                             " skin weights for " + std::to_string(size()) +
                             " points");
  for (int i = 0; i < size(); ++i) {
    if (!points[i].allFinite())
      throw std::runtime_error("scan: point " + std::to_string(i) +
                               " is not finite");
    if (skin_weights[i] < 0.0 || skin_weights[i] > 1.0)
      throw std::runtime_error("scan: skin weight " + std::to_string(i) +
                               " outside [0,1]");
    if (!labels && skin_weights[i] != 0.0)
      throw std::runtime_error(
          "scan: unlabeled scans are all cloth and must carry zero skin "
          "weights (point " + std::to_string(i) + ")");
  }
}

double geman_mcclure(double r, double sigma) {
  if (sigma <= 0.0) throw std::runtime_error("geman_mcclure: sigma must be > 0");
  return gm_value_sq(r * r, sigma);
}

VectorXd vertex_skin_weights(const TriMesh& alignment,
                             const std::vector<PointLabel>& vertex_labels,
                             const ObjectiveConfig& cfg) {
  if (static_cast<int>(vertex_labels.size()) != alignment.vertex_count())
    throw std::runtime_error("vertex_skin_weights: label count mismatch");

  std::vector<int> cloth_seeds;
  for (int i = 0; i < alignment.vertex_count(); ++i)
    if (vertex_labels[i] == PointLabel::cloth) cloth_seeds.push_back(i);

  // Geodesic distance to the cloth region, squashed to (0,1). No cloth
  // anywhere means infinite distance and weight 1 at every vertex.
  VectorXd vertex_g(alignment.vertex_count());
  if (cloth_seeds.empty()) {
    vertex_g.setOnes();
  } else {
    const auto dist = geodesic_to_set(alignment, cloth_seeds);
    for (int i = 0; i < alignment.vertex_count(); ++i) {
      const double d = dist[i];
      vertex_g[i] = std::isinf(d)
                        ? 1.0
                        : 1.0 / (1.0 + std::exp(-cfg.logistic_k *
                                                (d - cfg.logistic_d0)));
    }
  }
  return vertex_g;
}

std::vector<PointLabel> transfer_labels(const TriMesh& alignment,
                                        const Scan& scan) {
  std::vector<PointLabel> labels(alignment.vertex_count(), PointLabel::cloth);
  if (scan.labels && scan.size() > 0) {
    for (int i = 0; i < alignment.vertex_count(); ++i)
      labels[i] = (*scan.labels)[nearest_vertex(alignment.vertices[i],
                                                scan.points)];
  }
  return labels;
}

VectorXd skin_weight_map(const TriMesh& alignment,
                         const std::vector<PointLabel>& vertex_labels,
                         const Scan& scan, const ObjectiveConfig& cfg) {
  const VectorXd vertex_g = vertex_skin_weights(alignment, vertex_labels, cfg);

  // Unlabeled scans are all cloth, so only explicit skin labels pick up a
  // transferred weight.
  VectorXd g = VectorXd::Zero(scan.size());
  for (int p = 0; p < scan.size(); ++p) {
    if (!scan.labels || (*scan.labels)[p] == PointLabel::cloth) continue;
    g[p] = vertex_g[nearest_vertex(scan.points[p], alignment.vertices)];
  }
  return g;
}

void GnSystem::add_vertex_block(int vi, int vj, const Matrix3d& block) {
  if (vi <= vj) {
    vertex_blocks.try_emplace({vi, vj}, Matrix3d::Zero()).first->second += block;
  } else {
    vertex_blocks.try_emplace({vj, vi}, Matrix3d::Zero()).first->second +=
        block.transpose();
  }
}

Eigen::SparseMatrix<double> GnSystem::assemble() const {
  const int rest_dim = active.rest ? 3 * n_vertices : 0;
  const int dim = rest_dim + corner;
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(vertex_blocks.size() * 18 + rest_dim * corner * 2 +
                   corner * corner);

  for (const auto& [key, block] : vertex_blocks) {
    const auto [vi, vj] = key;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        triplets.emplace_back(3 * vi + r, 3 * vj + c, block(r, c));
        if (vi != vj) triplets.emplace_back(3 * vj + c, 3 * vi + r, block(r, c));
      }
    }
  }
  for (int r = 0; r < rest_dim; ++r) {
    for (int c = 0; c < corner; ++c) {
      const double v = rest_corner(r, c);
      if (v != 0.0) {
        triplets.emplace_back(r, rest_dim + c, v);
        triplets.emplace_back(rest_dim + c, r, v);
      }
    }
  }
  for (int r = 0; r < corner; ++r)
    for (int c = 0; c < corner; ++c)
      if (corner_block(r, c) != 0.0)
        triplets.emplace_back(rest_dim + r, rest_dim + c, corner_block(r, c));

  Eigen::SparseMatrix<double> h(dim, dim);
  h.setFromTriplets(triplets.begin(), triplets.end());
  return h;
}

SingleFrameObjective::SingleFrameObjective(const BodyModel& model,
                                           const Scan& scan,
                                           const ObjectiveConfig& cfg,
                                           CouplingAnchor anchor,
                                           SkinWeightMode mode)
    : model_(&model), scan_(&scan), cfg_(cfg), anchor_(anchor), mode_(mode) {
  scan.validate();
  if (cfg_.sigma_skin <= 0.0 || cfg_.sigma_fit <= 0.0)
    throw std::runtime_error("objective: kernel widths must be positive");
  if (anchor_.kind == CouplingAnchor::Kind::fixed_rest) {
    if (!anchor_.fixed)
      throw std::runtime_error("objective: fixed anchor shape missing");
    if (anchor_.fixed->size() != model.rest_template.size())
      throw std::runtime_error("objective: anchor topology mismatch");
  }
  if (cfg_.coupling_weights.size() == 0)
    cfg_.coupling_weights = VectorXd::Ones(model.vertex_count());
  else if (cfg_.coupling_weights.size() != model.vertex_count())
    throw std::runtime_error("objective: coupling weight count mismatch");

  TriMesh shell;
  shell.vertices = model.rest_template;
  shell.faces = model.faces;
  edges_ = mesh_edges(shell);
  edge_weights_.resize(static_cast<int>(edges_.size()));
  for (int e = 0; e < static_cast<int>(edges_.size()); ++e)
    edge_weights_[e] = 0.5 * (cfg_.coupling_weights[edges_[e][0]] +
                              cfg_.coupling_weights[edges_[e][1]]);

  prior_llt_.compute(model.pose_prior_cov);
  if (prior_llt_.info() != Eigen::Success)
    throw std::runtime_error("objective: pose prior covariance not SPD");
  prior_inverse_ = prior_llt_.solve(
      MatrixXd::Identity(model.pose_prior_cov.rows(), model.pose_prior_cov.cols()));
}

void SingleFrameObjective::refresh(const FitState& state) {
  const PosedBody body(*model_, state.rest, nullptr, state.pose);
  const TriMesh posed = body.mesh();
  const SpatialIndex index(posed);
  const PseudoNormals normals(posed);
  const int m = scan_->size();

  frozen_.face.assign(m, -1);
  frozen_.barycentric.assign(m, Vec3::Zero());
  frozen_.normal.assign(m, Vec3::UnitZ());
  frozen_.skin_set.assign(m, 0);
  frozen_.inside.assign(m, 0);
  frozen_.g = VectorXd::Zero(m);

  switch (mode_) {
    case SkinWeightMode::all_skin:
      frozen_.g.setOnes();
      std::fill(frozen_.skin_set.begin(), frozen_.skin_set.end(), 1);
      break;
    case SkinWeightMode::stored:
      frozen_.g = scan_->skin_weights;
      for (int p = 0; p < m; ++p) frozen_.skin_set[p] = frozen_.g[p] >= 0.5;
      break;
    case SkinWeightMode::from_labels: {
      // Label alignment vertices from their nearest scan point, then run
      // the geodesic-logistic transfer back onto the scan.
      frozen_.g = skin_weight_map(posed, transfer_labels(posed, *scan_),
                                  *scan_, cfg_);
      for (int p = 0; p < m; ++p)
        frozen_.skin_set[p] =
            scan_->labels && (*scan_->labels)[p] == PointLabel::skin;
      break;
    }
  }

  for (int p = 0; p < m; ++p) {
    const auto cp = index.closest(scan_->points[p]);
    frozen_.face[p] = cp.face;
    frozen_.barycentric[p] = cp.barycentric;
    frozen_.normal[p] = normals.at(cp).normalized();
    if (!frozen_.skin_set[p])
      frozen_.inside[p] = is_inside(scan_->points[p], cp, normals);
  }
  refreshed_ = true;
}

EnergyReport SingleFrameObjective::evaluate(const FitState& state,
                                            GnSystem* gn,
                                            const ActiveBlocks* active) const {
  if (!refreshed_)
    throw std::runtime_error("objective: evaluate before refresh");
  const int n = model_->vertex_count();
  const int n_beta = model_->shape_dim();
  const int n_theta = 3 * model_->joint_count();

  EnergyReport report;
  report.d_rest.assign(n, Vec3::Zero());
  report.d_beta = VectorXd::Zero(n_beta);
  report.d_theta = VectorXd::Zero(n_theta);

  ActiveBlocks all;
  const ActiveBlocks& act = active ? *active : all;
  int beta_off = -1, theta_off = -1, t_off = -1;
  if (gn) {
    int cursor = 0;
    if (act.beta) { beta_off = cursor; cursor += n_beta; }
    if (act.theta) { theta_off = cursor; cursor += n_theta; }
    if (act.translation) { t_off = cursor; cursor += 3; }
    gn->active = act;
    gn->n_vertices = n;
    gn->corner = cursor;
    gn->vertex_blocks.clear();
    gn->rest_corner = MatrixXd::Zero(act.rest ? 3 * n : 0, cursor);
    gn->corner_block = MatrixXd::Zero(cursor, cursor);
  }

  const PosedBody body(*model_, state.rest, nullptr, state.pose);
  const auto& posed = body.vertices();

  // --- Data terms over scan points (correspondences frozen). -------------
  std::vector<Vec3> adjoint(n, Vec3::Zero());
  const bool need_theta_jac = gn && act.theta;
  for (int p = 0; p < scan_->size(); ++p) {
    const int f = frozen_.face[p];
    if (f < 0) continue;
    const bool skin_pt = frozen_.skin_set[p];
    const double g = frozen_.g[p];
    if (skin_pt && g == 0.0) continue;

    const auto& fc = model_->faces[f];
    const Vec3& b = frozen_.barycentric[p];
    const Vec3 foot =
        b[0] * posed[fc[0]] + b[1] * posed[fc[1]] + b[2] * posed[fc[2]];
    // Point-to-plane residual: the offset projected onto the frozen surface
    // pseudo-normal. Sliding along the frozen tangent plane is free, which
    // keeps the frozen energy close to the true point-to-surface distance
    // and spares the outer loop from fighting tangential drag.
    const Vec3& pn = frozen_.normal[p];
    const double rn = pn.dot(scan_->points[p] - foot);
    const double s = rn * rn;

    double kappa, weight;  // contribution = kappa * rho(s), weight = rho'(s)
    if (skin_pt) {
      report.e_skin += g * gm_value_sq(s, cfg_.sigma_skin);
      kappa = cfg_.lambda_skin * g;
      weight = gm_weight_sq(s, cfg_.sigma_skin);
    } else if (frozen_.inside[p]) {
      report.e_outside += s;
      kappa = cfg_.lambda_outside;
      weight = 1.0;
    } else {
      report.e_fit += gm_value_sq(s, cfg_.sigma_fit);
      kappa = cfg_.lambda_fit;
      weight = gm_weight_sq(s, cfg_.sigma_fit);
    }

    const double omega = 2.0 * kappa * weight;
    if (omega == 0.0) continue;
    const Vec3 dE_dfoot = -omega * rn * pn;
    for (int c = 0; c < 3; ++c) adjoint[fc[c]] += b[c] * dE_dfoot;

    if (!gn) continue;
    // Gauss-Newton blocks from the projected (scalar) residual rows. The
    // template Jacobian keeps the direct blend path only (the regressor
    // path stays in the gradient, not the curvature); theta and t are exact.
    Eigen::RowVectorXd theta_row;
    if (need_theta_jac) {
      Eigen::Matrix<double, 3, Eigen::Dynamic> theta_jac;
      theta_jac.setZero(3, n_theta);
      for (int c = 0; c < 3; ++c)
        theta_jac += b[c] * body.theta_jacobian(fc[c]);
      theta_row = pn.transpose() * theta_jac;
    }
    if (act.rest) {
      Vec3 row[3];  // (d rn / d T_corner)^T per corner
      for (int c = 0; c < 3; ++c)
        row[c] = b[c] * body.blend_rotation(fc[c]).transpose() * pn;
      for (int c1 = 0; c1 < 3; ++c1) {
        for (int c2 = c1; c2 < 3; ++c2)
          gn->add_vertex_block(fc[c1], fc[c2],
                               omega * row[c1] * row[c2].transpose());
        if (act.theta)
          gn->rest_corner.middleRows(3 * fc[c1], 3).middleCols(theta_off, n_theta) +=
              omega * row[c1] * theta_row;
        if (act.translation)
          gn->rest_corner.middleRows(3 * fc[c1], 3).middleCols(t_off, 3) +=
              omega * row[c1] * pn.transpose();
      }
    }
    if (act.theta) {
      gn->corner_block.block(theta_off, theta_off, n_theta, n_theta) +=
          omega * theta_row.transpose() * theta_row;
      if (act.translation)
        gn->corner_block.block(theta_off, t_off, n_theta, 3) +=
            omega * theta_row.transpose() * pn.transpose();
    }
    if (act.translation) {
      if (act.theta)
        gn->corner_block.block(t_off, theta_off, 3, n_theta) +=
            omega * pn * theta_row;
      gn->corner_block.block(t_off, t_off, 3, 3) += omega * pn * pn.transpose();
    }
  }
  body.backward(adjoint, &report.d_rest, nullptr, &report.d_theta, &report.d_t);

  // --- Edge coupling to the anchor shape. ---------------------------------
  const bool model_anchor = anchor_.kind == CouplingAnchor::Kind::model_space;
  RestShape anchor_shape;
  if (model_anchor) {
    // An empty beta block reads as all zeros.
    const VectorXd beta =
        state.beta.size() ? state.beta : VectorXd::Zero(n_beta);
    anchor_shape = model_->rest_template;
    const auto offsets = shape_blendshape(*model_, beta);
    for (int i = 0; i < n; ++i) anchor_shape[i] += offsets[i];
  }
  const RestShape& anchor = model_anchor ? anchor_shape : *anchor_.fixed;
  const double lam_cpl = cfg_.lambda_cpl;
  for (int e = 0; e < static_cast<int>(edges_.size()); ++e) {
    const int i = edges_[e][0], j = edges_[e][1];
    const double w = edge_weights_[e];
    const Vec3 resid =
        w * ((state.rest[i] - state.rest[j]) - (anchor[i] - anchor[j]));
    report.e_cpl += resid.squaredNorm();
    const Vec3 d = 2.0 * lam_cpl * w * resid;
    report.d_rest[i] += d;
    report.d_rest[j] -= d;
    MatrixXd delta_bs;
    if (model_anchor) {
      delta_bs = model_->shape_rows(i) - model_->shape_rows(j);
      report.d_beta -= delta_bs.transpose() * d;
    }
    if (gn && lam_cpl != 0.0) {
      const double s = 2.0 * lam_cpl * w * w;
      if (act.rest) {
        const Matrix3d blk = s * Matrix3d::Identity();
        gn->add_vertex_block(i, i, blk);
        gn->add_vertex_block(j, j, blk);
        gn->add_vertex_block(i, j, -blk);
      }
      if (model_anchor && act.beta) {
        gn->corner_block.block(beta_off, beta_off, n_beta, n_beta) +=
            s * delta_bs.transpose() * delta_bs;
        if (act.rest) {
          gn->rest_corner.middleRows(3 * i, 3).middleCols(beta_off, n_beta) -=
              s * delta_bs;
          gn->rest_corner.middleRows(3 * j, 3).middleCols(beta_off, n_beta) +=
              s * delta_bs;
        }
      }
    }
  }

  // --- Pose prior (translation excluded). ---------------------------------
  const VectorXd delta = state.pose.joint_rotations - model_->pose_prior_mean;
  const VectorXd solved = prior_llt_.solve(delta);
  report.e_prior = delta.dot(solved);
  report.d_theta += 2.0 * cfg_.lambda_prior * solved;
  if (gn && act.theta && cfg_.lambda_prior != 0.0)
    gn->corner_block.block(theta_off, theta_off, n_theta, n_theta) +=
        2.0 * cfg_.lambda_prior * prior_inverse_;

  report.total = cfg_.lambda_skin * report.e_skin +
                 cfg_.lambda_outside * report.e_outside +
                 cfg_.lambda_fit * report.e_fit + lam_cpl * report.e_cpl +
                 cfg_.lambda_prior * report.e_prior;
  return report;
}

namespace {

// Shared wrapper: isolate one term by zeroing every other weight, with the
// chosen term's weight set to 1 so total and gradients are the bare term.
EnergyReport isolated_term(const FitState& s, const Scan& scan,
                           const BodyModel& m, ObjectiveConfig cfg,
                           CouplingAnchor anchor, SkinWeightMode mode,
                           double ObjectiveConfig::*lambda) {
  cfg.lambda_skin = 0.0;
  cfg.lambda_outside = 0.0;
  cfg.lambda_fit = 0.0;
  cfg.lambda_cpl = 0.0;
  cfg.lambda_prior = 0.0;
  cfg.*lambda = 1.0;
  SingleFrameObjective objective(m, scan, cfg, anchor, mode);
  objective.refresh(s);
  return objective.evaluate(s);
}

}  // namespace

EnergyReport e_skin(const FitState& s, const Scan& scan, const BodyModel& m,
                    const ObjectiveConfig& cfg, SkinWeightMode mode) {
  return isolated_term(s, scan, m, cfg, CouplingAnchor::model_space(), mode,
                       &ObjectiveConfig::lambda_skin);
}

EnergyReport e_outside(const FitState& s, const Scan& scan, const BodyModel& m,
                       const ObjectiveConfig& cfg) {
  return isolated_term(s, scan, m, cfg, CouplingAnchor::model_space(),
                       SkinWeightMode::from_labels,
                       &ObjectiveConfig::lambda_outside);
}

EnergyReport e_fit(const FitState& s, const Scan& scan, const BodyModel& m,
                   const ObjectiveConfig& cfg) {
  return isolated_term(s, scan, m, cfg, CouplingAnchor::model_space(),
                       SkinWeightMode::from_labels, &ObjectiveConfig::lambda_fit);
}

EnergyReport e_cpl(const FitState& s, const BodyModel& m,
                   const ObjectiveConfig& cfg, const CouplingAnchor& anchor) {
  Scan empty;
  empty.skin_weights = VectorXd::Zero(0);
  return isolated_term(s, empty, m, cfg, anchor, SkinWeightMode::all_skin,
                       &ObjectiveConfig::lambda_cpl);
}

EnergyReport e_prior(const FitState& s, const BodyModel& m,
                     const ObjectiveConfig& cfg) {
  Scan empty;
  empty.skin_weights = VectorXd::Zero(0);
  return isolated_term(s, empty, m, cfg, CouplingAnchor::model_space(),
                       SkinWeightMode::all_skin, &ObjectiveConfig::lambda_prior);
}

EnergyReport single_frame_energy(const FitState& s, const Scan& scan,
                                 const BodyModel& m, const ObjectiveConfig& cfg,
                                 const CouplingAnchor& anchor,
                                 SkinWeightMode mode) {
  SingleFrameObjective objective(m, scan, cfg, anchor, mode);
  objective.refresh(s);
  return objective.evaluate(s);
}

}  // namespace mcs
