#include "mcs/synthetic.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

namespace mcs {

namespace {

constexpr int kFrequency = 10;  // geodesic subdivision: N = 10 f^2 + 2 = 1002

struct Lobe {
  Vec3 dir;
  double reach;
  double sigma;  // angular width (radians)
};

const Vec3 kArmDirL = Vec3(-0.94, 0.34, 0).normalized();
const Vec3 kArmDirR = Vec3(0.94, 0.34, 0).normalized();
const Vec3 kLegDirL = Vec3(-0.38, -0.92, 0).normalized();
const Vec3 kLegDirR = Vec3(0.38, -0.92, 0).normalized();

// Primary limb lobes plus asymmetric feature lobes (nose, elbows, knees,
// belly, shoulder blade). The features give every joint rotation — twists
// about limb axes in particular — a macroscopic surface signature, so
// closest-point registration can observe all pose directions.
const std::array<Lobe, 12> kLobes = {{
    {Vec3(0, 1, 0), 0.32, 0.40},  // head
    {kArmDirL, 0.42, 0.30},
    {kArmDirR, 0.42, 0.30},
    {kLegDirL, 0.52, 0.35},
    {kLegDirR, 0.52, 0.35},
    {Vec3(0.12, 1.0, 0.38).normalized(), 0.27, 0.12},            // nose
    {(kArmDirL + Vec3(0, -0.25, 0.18)).normalized(), 0.30, 0.15},  // elbow L
    {(kArmDirR + Vec3(0, -0.25, -0.15)).normalized(), 0.30, 0.15},  // elbow R
    {(kLegDirL + Vec3(0, 0, 0.30)).normalized(), 0.40, 0.15},    // knee L
    {(kLegDirR + Vec3(0, 0, 0.26)).normalized(), 0.40, 0.15},    // knee R
    {Vec3(0.2, 0.05, 0.95).normalized(), 0.17, 0.25},            // belly
    {Vec3(-0.15, 0.25, -0.9).normalized(), 0.18, 0.30},          // back
}};

// Star-shaped radial profile: smooth max (8-norm) of a torso ball and
// Gaussian lobes for head and limbs. Chord-based angle^2 keeps it analytic.
// The sinusoidal modulation, sampled at the unmodulated surface position,
// sprinkles ~10 cm-wavelength features over every body part so no rotation
// slides the surface along itself (closest-point registration would
// otherwise be blind to twists about the near-symmetric limb, head, and
// torso axes).
double body_radius(const Vec3& unit_dir) {
  constexpr double q = 8.0;
  double acc = std::pow(0.15, q);  // torso
  for (const auto& lobe : kLobes) {
    const double angle_sq = 2.0 * (1.0 - unit_dir.dot(lobe.dir));
    const double r = lobe.reach * std::exp(-angle_sq / (2.0 * lobe.sigma * lobe.sigma));
    acc += std::pow(r, q);
  }
  const double base = std::pow(acc, 1.0 / q);
  const Vec3 p = base * unit_dir;
  const double bumps = std::sin(60.0 * p.x() + 1.3) *
                       std::sin(55.0 * p.y() + 0.7) *
                       std::sin(50.0 * p.z() + 2.1);
  return base * (1.0 + 0.025 * bumps);
}

// Geodesic subdivision of an icosahedron with exact shared-vertex indexing
// (corners, edge lattices, face interiors), so the result is watertight.
TriMesh geodesic_sphere(int f) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> corners = {
      {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& c : corners) c.normalize();
  std::vector<std::array<int, 3>> base = {
      {0, 11, 5},  {0, 5, 1},   {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},   {5, 11, 4},  {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},   {3, 4, 2},   {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},   {2, 4, 11},  {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  // Normalize orientation: every face normal must point away from the origin.
  for (auto& face : base) {
    const Vec3 n = (corners[face[1]] - corners[face[0]])
                       .cross(corners[face[2]] - corners[face[0]]);
    const Vec3 centroid =
        (corners[face[0]] + corners[face[1]] + corners[face[2]]) / 3.0;
    if (n.dot(centroid) < 0.0) std::swap(face[1], face[2]);
  }

  TriMesh mesh;
  mesh.vertices = corners;
  std::map<std::tuple<int, int, int>, int> edge_points;  // (lo, hi, step)
  std::map<std::tuple<int, int, int>, int> interior;     // (face, i, j)

  auto edge_point = [&](int ga, int gb, int step, const Vec3& pos) {
    // Canonical direction: steps count from the lower global corner id.
    const auto key = ga < gb ? std::make_tuple(ga, gb, step)
                             : std::make_tuple(gb, ga, f - step);
    auto it = edge_points.find(key);
    if (it != edge_points.end()) return it->second;
    mesh.vertices.push_back(pos);
    const int id = static_cast<int>(mesh.vertices.size()) - 1;
    edge_points.emplace(key, id);
    return id;
  };

  for (int face_idx = 0; face_idx < static_cast<int>(base.size()); ++face_idx) {
    const auto [ga, gb, gc] = std::tuple(base[face_idx][0], base[face_idx][1],
                                         base[face_idx][2]);
    const Vec3 a = corners[ga], b = corners[gb], c = corners[gc];
    auto lattice_id = [&](int i, int j) {
      const int k = f - i - j;  // weight on corner a
      const Vec3 pos = ((k * a + i * b + j * c) / f).normalized();
      if (k == f) return ga;
      if (i == f) return gb;
      if (j == f) return gc;
      if (j == 0) return edge_point(ga, gb, i, pos);                 // a-b
      if (k == 0) return edge_point(gb, gc, j, pos);                 // b-c
      if (i == 0) return edge_point(gc, ga, k, pos);                 // c-a
      const auto key = std::make_tuple(face_idx, i, j);
      auto it = interior.find(key);
      if (it != interior.end()) return it->second;
      mesh.vertices.push_back(pos);
      const int id = static_cast<int>(mesh.vertices.size()) - 1;
      interior.emplace(key, id);
      return id;
    };
    for (int i = 0; i < f; ++i) {
      for (int j = 0; j < f - i; ++j) {
        mesh.faces.push_back(
            {lattice_id(i, j), lattice_id(i + 1, j), lattice_id(i, j + 1)});
        if (i + j < f - 1)
          mesh.faces.push_back({lattice_id(i + 1, j), lattice_id(i + 1, j + 1),
                                lattice_id(i, j + 1)});
      }
    }
  }
  return mesh;
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double t = std::clamp(ab.dot(p - a) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

}  // namespace

std::vector<int> torso_parts() { return {0, 1, 2}; }

VectorXd coupling_weights_from_parts(const std::vector<int>& part_labels,
                                     double strong_factor) {
  VectorXd w = VectorXd::Ones(static_cast<int>(part_labels.size()));
  for (int i = 0; i < w.size(); ++i)
    if (part_labels[i] >= 8) w[i] = strong_factor;
  return w;
}

BodyModel make_humanoid_model() {
  constexpr int K = 8, B = 4;

  TriMesh sphere = geodesic_sphere(kFrequency);
  const int n = sphere.vertex_count();

  BodyModel model;
  model.rest_template.resize(n);
  for (int i = 0; i < n; ++i) {
    const Vec3 d = sphere.vertices[i];  // already unit
    model.rest_template[i] = body_radius(d) * d;
  }
  model.faces = sphere.faces;

  // Skeleton: pelvis root, spine chain to the head, arms off the chest,
  // legs off the pelvis.
  model.kinematic_parents = {-1, 0, 1, 2, 2, 2, 0, 0};
  const std::array<Vec3, K> joint_pos = {{
      {0, -0.06, 0},            // 0 pelvis
      {0, 0.04, 0},             // 1 spine
      {0, 0.13, 0},             // 2 chest
      {0, 0.24, 0},             // 3 head
      0.18 * kArmDirL,          // 4 left arm
      0.18 * kArmDirR,          // 5 right arm
      0.20 * kLegDirL,          // 6 left leg
      0.20 * kLegDirR,          // 7 right leg
  }};
  const std::array<std::pair<Vec3, Vec3>, K> bones = {{
      {joint_pos[0], joint_pos[1]},
      {joint_pos[1], joint_pos[2]},
      {joint_pos[2], joint_pos[3]},
      {joint_pos[3], Vec3(0, 0.30, 0)},
      {joint_pos[4], 0.40 * kArmDirL},
      {joint_pos[5], 0.40 * kArmDirR},
      {joint_pos[6], 0.50 * kLegDirL},
      {joint_pos[7], 0.50 * kLegDirR},
  }};

  // Skin weights: Gaussian falloff from bone segments, top-3, normalized.
  model.skin_weights = MatrixXd::Zero(n, K);
  constexpr double s = 0.07;
  for (int i = 0; i < n; ++i) {
    const Vec3& v = model.rest_template[i];
    std::array<double, K> w;
    for (int k = 0; k < K; ++k) {
      const double d = point_segment_distance(v, bones[k].first, bones[k].second);
      w[k] = std::exp(-d * d / (s * s));
    }
    std::array<int, K> order;
    for (int k = 0; k < K; ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](int x, int y) {
      if (w[x] != w[y]) return w[x] > w[y];
      return x < y;
    });
    double sum = 0.0;
    for (int r = 0; r < 3; ++r) sum += w[order[r]];
    for (int r = 0; r < 3; ++r) model.skin_weights(i, order[r]) = w[order[r]] / sum;
    // Pin the row sum to exactly 1 (validation allows 1e-9; be exact).
    model.skin_weights(i, order[0]) += 1.0 - model.skin_weights.row(i).sum();
  }

  // Joint regressor: per joint, minimum-deviation-from-uniform weights over
  // the 16 nearest template vertices reproducing the joint location, with
  // the affine constraint sum(w) = 1 (negatives allowed).
  model.joint_regressor = MatrixXd::Zero(K, n);
  for (int k = 0; k < K; ++k) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::partial_sort(idx.begin(), idx.begin() + 16, idx.end(), [&](int x, int y) {
      const double dx = (model.rest_template[x] - joint_pos[k]).squaredNorm();
      const double dy = (model.rest_template[y] - joint_pos[k]).squaredNorm();
      if (dx != dy) return dx < dy;
      return x < y;
    });
    Eigen::Matrix<double, 4, 16> a;
    for (int c = 0; c < 16; ++c) {
      a.block<3, 1>(0, c) = model.rest_template[idx[c]];
      a(3, c) = 1.0;
    }
    Eigen::Vector4d target;
    target << joint_pos[k], 1.0;
    const Eigen::Matrix<double, 16, 1> w0 =
        Eigen::Matrix<double, 16, 1>::Constant(1.0 / 16.0);
    const Eigen::Matrix<double, 16, 1> w =
        w0 + a.transpose() * (a * a.transpose()).ldlt().solve(target - a * w0);
    for (int c = 0; c < 16; ++c) model.joint_regressor(k, idx[c]) = w[c];
    const double rowsum = model.joint_regressor.row(k).sum();
    model.joint_regressor(k, idx[0]) += 1.0 - rowsum;
  }

  // Shape basis: scale, torso girth, height, limb thickness.
  model.shape_basis = MatrixXd::Zero(3 * n, B);
  for (int i = 0; i < n; ++i) {
    const Vec3& v = model.rest_template[i];
    const Vec3 d = v.normalized();
    model.shape_basis.block<3, 1>(3 * i, 0) = 0.10 * v;
    const double torso = std::exp(-(v.y() / 0.10) * (v.y() / 0.10));
    model.shape_basis.block<3, 1>(3 * i, 1) = 0.06 * torso * Vec3(v.x(), 0, v.z());
    model.shape_basis.block<3, 1>(3 * i, 2) = Vec3(0, 0.10 * v.y(), 0);
    Vec3 limb = Vec3::Zero();
    for (const Vec3& u : {kArmDirL, kArmDirR, kLegDirL, kLegDirR}) {
      const double angle_sq = 2.0 * (1.0 - d.dot(u));
      const double w = std::exp(-angle_sq / (2.0 * 0.3 * 0.3));
      limb += w * (v - v.dot(u) * u);
    }
    model.shape_basis.block<3, 1>(3 * i, 3) = 0.05 * limb;
  }

  // Pose-corrective basis: small smooth deterministic fields (max offset a
  // couple of millimeters at plausible poses).
  model.pose_basis = MatrixXd::Zero(3 * n, 9 * (K - 1));
  for (int i = 0; i < n; ++i) {
    const Vec3& v = model.rest_template[i];
    for (int m = 1; m < K; ++m) {
      for (int e = 0; e < 9; ++e) {
        for (int r = 0; r < 3; ++r) {
          const double phase = 7.1 * v.x() + 5.3 * v.y() + 3.7 * v.z() +
                               1.3 * m + 0.61 * e + 0.37 * r;
          model.pose_basis(3 * i + r, 9 * (m - 1) + e) =
              (0.002 / 9.0) * std::sin(phase);
        }
      }
    }
  }

  // Pose prior: zero mean, tridiagonal SPD covariance (~0.3 rad scale,
  // diagonally dominant).
  model.pose_prior_mean = VectorXd::Zero(3 * K);
  model.pose_prior_cov = MatrixXd::Zero(3 * K, 3 * K);
  for (int i = 0; i < 3 * K; ++i) {
    model.pose_prior_cov(i, i) = 0.09;
    if (i + 1 < 3 * K) {
      model.pose_prior_cov(i, i + 1) = 0.02;
      model.pose_prior_cov(i + 1, i) = 0.02;
    }
  }

  // Part labels: dominant skin weight, then tip overrides for hands/feet.
  model.part_labels.resize(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    model.skin_weights.row(i).maxCoeff(&best);
    const Vec3& v = model.rest_template[i];
    const Vec3 d = v.normalized();
    auto near_tip = [&](const Vec3& u, double min_norm) {
      return 2.0 * (1.0 - d.dot(u)) < 0.03 && v.norm() > min_norm;
    };
    if (near_tip(kArmDirL, 0.30)) best = 8;
    else if (near_tip(kArmDirR, 0.30)) best = 9;
    else if (near_tip(kLegDirL, 0.40)) best = 10;
    else if (near_tip(kLegDirR, 0.40)) best = 11;
    model.part_labels[i] = best;
  }

  model.validate();
  return model;
}

}  // namespace mcs
