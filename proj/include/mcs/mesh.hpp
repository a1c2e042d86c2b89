#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace mcs {

using Vec3 = Eigen::Vector3d;

/// Triangle mesh (or triangle soup). Vertices in meters.
/// Manifoldness is not required; closedness only where an operation needs it.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int face_count() const { return static_cast<int>(faces.size()); }
};

/// Throws std::runtime_error on out-of-range indices, repeated indices within
/// a face, or triangle area <= 1e-12 m^2. Call once at load; queries assume a
/// valid mesh.
void validate_mesh(const TriMesh& mesh);

enum class ClosestPrimitive { face_interior, edge, vertex };

struct ClosestPointResult {
  Vec3 point = Vec3::Zero();
  int face = -1;
  ClosestPrimitive primitive = ClosestPrimitive::vertex;
  Vec3 barycentric = Vec3::Zero();  // w.r.t. the face's corners, sums to 1
  double distance = 0.0;            // meters, >= 0
};

/// Closest point on a single triangle. The primitive class is derived from the
/// zero pattern of the clamped barycentric coordinates: face_interior iff all
/// three are positive. Throws on degenerate triangles (area <= 1e-12 m^2).
ClosestPointResult closest_point_on_triangle(const Vec3& p, const Vec3& a,
                                             const Vec3& b, const Vec3& c);

/// Bounding-volume hierarchy over a mesh. Results are identical to a
/// brute-force scan over all faces, with ties broken by lowest face index.
/// The mesh must outlive the index.
class SpatialIndex {
 public:
  explicit SpatialIndex(const TriMesh& mesh);

  ClosestPointResult closest(const Vec3& p) const;
  const TriMesh& mesh() const { return *mesh_; }

 private:
  struct Node {
    Vec3 box_min, box_max;
    int left = -1, right = -1;  // children; -1 for leaves
    int first = 0, count = 0;   // face range into order_ for leaves
  };

  int build(int first, int count, std::vector<Vec3>& centroids);

  const TriMesh* mesh_;
  std::vector<Node> nodes_;
  std::vector<int> order_;  // face indices, permuted by the build
};

/// Globally closest point over all faces via the index.
ClosestPointResult point_to_surface(const Vec3& p, const TriMesh& mesh,
                                    const SpatialIndex& index);

/// Area-weighted vertex normals, unit length; zero vector for isolated
/// vertices.
std::vector<Vec3> vertex_normals(const TriMesh& mesh);

/// Angle-weighted pseudo-normals for face, edge and vertex primitives.
/// Needed by the inside/outside classification of closed meshes.
class PseudoNormals {
 public:
  explicit PseudoNormals(const TriMesh& mesh);

  /// Pseudo-normal of the primitive identified by a closest-point result.
  Vec3 at(const ClosestPointResult& cp) const;

 private:
  const TriMesh* mesh_;
  std::vector<Vec3> face_normals_;
  std::vector<Vec3> vertex_normals_;  // angle-weighted
  std::unordered_map<std::uint64_t, Vec3> edge_normals_;
};

/// True iff p lies strictly inside the closed mesh, judged by the sign of
/// dot(pseudo-normal, p - closest point). On-surface and ambiguous points
/// (|dot| <= 1e-9) classify as outside.
bool is_inside(const Vec3& p, const ClosestPointResult& cp,
               const PseudoNormals& normals);

/// Convenience overload building the pseudo-normal cache ad hoc.
bool is_inside(const Vec3& p, const ClosestPointResult& cp,
               const TriMesh& mesh);

/// Shortest-path distance over the edge graph (Euclidean edge lengths) from a
/// nonempty seed set. Unreachable vertices map to +infinity.
std::vector<double> geodesic_to_set(const TriMesh& mesh,
                                    const std::vector<int>& seeds);

/// Unique undirected edges (i < j) of the face set.
std::vector<std::array<int, 2>> mesh_edges(const TriMesh& mesh);

}  // namespace mcs
