#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/SparseCore>

#include "mcs/body_model.hpp"
#include "mcs/mesh.hpp"

namespace mcs {

enum class PointLabel : std::uint8_t { skin, cloth };

/// Scan point cloud. Absent labels mean all points are cloth, in which case
/// every stored skin weight must be zero.
struct Scan {
  std::vector<Vec3> points;
  std::optional<std::vector<PointLabel>> labels;
  VectorXd skin_weights;  // per point, in [0,1]

  int size() const { return static_cast<int>(points.size()); }
  void validate() const;  // throws on size/range violations
};

struct ObjectiveConfig {
  double lambda_skin = 100.0;
  double lambda_outside = 100.0;
  double lambda_fit = 3.0;
  double lambda_cpl = 1.0;
  double lambda_prior = 1e-3;
  double sigma_skin = 0.01;  // meters
  double sigma_fit = 0.02;   // meters
  double logistic_k = 150.0;  // 1/m
  double logistic_d0 = 0.02;  // m
  VectorXd coupling_weights;  // per vertex; empty = all ones
};

/// Bounded robust penalty sigma^2 r^2 / (sigma^2 + r^2).
double geman_mcclure(double r, double sigma);

/// How scan points acquire their skin weight g when correspondences refresh.
enum class SkinWeightMode {
  all_skin,     // every point is skin with g = 1 (registration, GT fitting)
  from_labels,  // geodesic-logistic transfer from the posed alignment
  stored,       // use scan.skin_weights; g >= 0.5 is the skin set (fusion)
};

/// Per-vertex skin weight on a labeled alignment: logistic(k (d - d0)) of the
/// geodesic distance d to the cloth region. No cloth anywhere means weight 1
/// at every vertex.
VectorXd vertex_skin_weights(const TriMesh& alignment,
                             const std::vector<PointLabel>& vertex_labels,
                             const ObjectiveConfig& cfg);

/// Alignment vertex labels copied from each vertex's nearest scan point.
/// Unlabeled scans are all cloth.
std::vector<PointLabel> transfer_labels(const TriMesh& alignment,
                                        const Scan& scan);

/// Geodesic-to-cloth skin weighting: logistic(k (d - d0)) evaluated at each
/// alignment vertex, propagated to scan points by nearest vertex.
/// Cloth-labeled scan points get 0.
VectorXd skin_weight_map(const TriMesh& alignment,
                         const std::vector<PointLabel>& vertex_labels,
                         const Scan& scan, const ObjectiveConfig& cfg);

/// Correspondences and switches frozen for one inner solve: closest face and
/// barycentric foot point per scan point, the surface pseudo-normal at that
/// foot (data residuals are measured along it, point-to-plane style), inside
/// flags for cloth points, and the g weight the skin term uses. skin_set
/// marks membership of the skin term (complement = cloth terms).
struct FrozenAssignments {
  std::vector<int> face;
  std::vector<Vec3> barycentric;
  std::vector<Vec3> normal;
  std::vector<std::uint8_t> skin_set;
  std::vector<std::uint8_t> inside;
  VectorXd g;
};

/// Coupling anchor: either the model shape space T_mu + B_s(beta), through
/// which the beta gradient flows, or a fixed rest shape (tracking).
struct CouplingAnchor {
  enum class Kind { model_space, fixed_rest };
  Kind kind = Kind::model_space;
  const RestShape* fixed = nullptr;

  static CouplingAnchor model_space() { return {Kind::model_space, nullptr}; }
  static CouplingAnchor fixed_rest(const RestShape& rest) {
    return {Kind::fixed_rest, &rest};
  }
};

/// Current values of all optimizable blocks.
struct FitState {
  RestShape rest;   // T_Est
  VectorXd beta;
  Pose pose;        // theta and t
};

struct EnergyReport {
  double total = 0.0;
  double e_skin = 0.0, e_outside = 0.0, e_fit = 0.0, e_cpl = 0.0, e_prior = 0.0;
  std::vector<Vec3> d_rest;
  VectorXd d_beta;
  VectorXd d_theta;
  Vec3 d_t = Vec3::Zero();
};

/// Which parameter blocks a Gauss-Newton system covers, and their offsets in
/// the flat vector [T | beta | theta | t] (inactive blocks are skipped).
struct ActiveBlocks {
  bool rest = true, beta = true, theta = true, translation = true;

  int rest_dim(const BodyModel& m) const { return rest ? 3 * m.vertex_count() : 0; }
  int corner_dim(const BodyModel& m) const {
    return (beta ? m.shape_dim() : 0) + (theta ? 3 * m.joint_count() : 0) +
           (translation ? 3 : 0);
  }
  int total_dim(const BodyModel& m) const { return rest_dim(m) + corner_dim(m); }
};

/// Gauss-Newton curvature in block form: sparse 3x3 vertex-pair blocks for
/// the template, a dense strip coupling the template to the small blocks,
/// and a dense core. Deterministic assembly (ordered block map).
struct GnSystem {
  ActiveBlocks active;
  int n_vertices = 0;
  int corner = 0;  // active beta + theta + t size
  std::map<std::pair<int, int>, Matrix3d> vertex_blocks;  // key i <= j
  MatrixXd rest_corner;   // 3N x corner
  MatrixXd corner_block;  // corner x corner

  void add_vertex_block(int vi, int vj, const Matrix3d& block);
  Eigen::SparseMatrix<double> assemble() const;
};

/// Single-frame energy with frozen-correspondence evaluation. refresh()
/// recomputes closest points, inside flags, and skin weights at a state;
/// evaluate() is then smooth in the state and exactly matches the gradients.
class SingleFrameObjective {
 public:
  SingleFrameObjective(const BodyModel& model, const Scan& scan,
                       const ObjectiveConfig& cfg, CouplingAnchor anchor,
                       SkinWeightMode mode);

  void refresh(const FitState& state);
  bool refreshed() const { return refreshed_; }

  /// Value + gradients at a state under the current assignments. When gn is
  /// non-null it is filled with the Gauss-Newton curvature for the blocks
  /// marked active (the gradient blocks are always all computed).
  EnergyReport evaluate(const FitState& state, GnSystem* gn = nullptr,
                        const ActiveBlocks* active = nullptr) const;

  const FrozenAssignments& assignments() const { return frozen_; }
  const BodyModel& model() const { return *model_; }
  const Scan& scan() const { return *scan_; }
  const ObjectiveConfig& config() const { return cfg_; }

 private:
  const BodyModel* model_;
  const Scan* scan_;
  ObjectiveConfig cfg_;
  CouplingAnchor anchor_;
  SkinWeightMode mode_;
  std::vector<std::array<int, 2>> edges_;
  VectorXd edge_weights_;             // w_e = mean endpoint coupling weight
  Eigen::LLT<MatrixXd> prior_llt_;
  MatrixXd prior_inverse_;            // Sigma^-1 (for the GN block)
  FrozenAssignments frozen_;
  bool refreshed_ = false;
};

/// Free-standing term evaluations (value + gradient blocks) that compute
/// their own correspondences at the given state. Convenience wrappers over
/// SingleFrameObjective used by tests and diagnostics; per-term values are
/// unweighted.
EnergyReport e_skin(const FitState& s, const Scan& scan, const BodyModel& m,
                    const ObjectiveConfig& cfg, SkinWeightMode mode);
EnergyReport e_outside(const FitState& s, const Scan& scan, const BodyModel& m,
                       const ObjectiveConfig& cfg);
EnergyReport e_fit(const FitState& s, const Scan& scan, const BodyModel& m,
                   const ObjectiveConfig& cfg);
EnergyReport e_cpl(const FitState& s, const BodyModel& m,
                   const ObjectiveConfig& cfg, const CouplingAnchor& anchor);
EnergyReport e_prior(const FitState& s, const BodyModel& m,
                     const ObjectiveConfig& cfg);

/// Full weighted energy with freshly computed correspondences at s.
EnergyReport single_frame_energy(const FitState& s, const Scan& scan,
                                 const BodyModel& m, const ObjectiveConfig& cfg,
                                 const CouplingAnchor& anchor,
                                 SkinWeightMode mode = SkinWeightMode::from_labels);

}  // namespace mcs
