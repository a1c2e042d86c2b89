#include "mcs/mesh.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>

namespace mcs {

namespace {

constexpr double kDegenerateArea = 1e-12;  // m^2

inline std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

}  // namespace

void validate_mesh(const TriMesh& mesh) {
  const int nv = mesh.vertex_count();
  for (int f = 0; f < mesh.face_count(); ++f) {
    const auto& face = mesh.faces[f];
    for (int c = 0; c < 3; ++c) {
      if (face[c] < 0 || face[c] >= nv)
        throw std::runtime_error("mesh: face " + std::to_string(f) +
                                 " references vertex " + std::to_string(face[c]) +
                                 " outside [0," + std::to_string(nv) + ")");
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2])
      throw std::runtime_error("mesh: face " + std::to_string(f) +
                               " has repeated vertex indices");
    const double area = triangle_area(mesh.vertices[face[0]],
                                      mesh.vertices[face[1]],
                                      mesh.vertices[face[2]]);
    if (!(area > kDegenerateArea))
      throw std::runtime_error("mesh: face " + std::to_string(f) +
                               " is degenerate (area <= 1e-12 m^2)");
  }
}

ClosestPointResult closest_point_on_triangle(const Vec3& p, const Vec3& a,
                                             const Vec3& b, const Vec3& c) {
  if (!(triangle_area(a, b, c) > kDegenerateArea))
    throw std::runtime_error("closest_point_on_triangle: degenerate triangle");

  // Region classification after Ericson, expressed through barycentric
  // coordinates so the primitive class falls out of the zero pattern.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  Vec3 bary;

  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) {
    bary = Vec3(1, 0, 0);
  } else {
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) {
      bary = Vec3(0, 1, 0);
    } else {
      const double vc = d1 * d4 - d3 * d2;
      if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        bary = Vec3(1.0 - v, v, 0);
      } else {
        const Vec3 cp = p - c;
        const double d5 = ab.dot(cp), d6 = ac.dot(cp);
        if (d6 >= 0.0 && d5 <= d6) {
          bary = Vec3(0, 0, 1);
        } else {
          const double vb = d5 * d2 - d1 * d6;
          if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
            const double w = d2 / (d2 - d6);
            bary = Vec3(1.0 - w, 0, w);
          } else {
            const double va = d3 * d6 - d5 * d4;
            if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
              const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
              bary = Vec3(0, 1.0 - w, w);
            } else {
              const double denom = 1.0 / (va + vb + vc);
              const double v = vb * denom, w = vc * denom;
              bary = Vec3(1.0 - v - w, v, w);
            }
          }
        }
      }
    }
  }

  // Clamp float dust so the zero pattern is exact, then renormalize.
  for (int i = 0; i < 3; ++i)
    if (bary[i] < 1e-14) bary[i] = 0.0;
  bary /= bary.sum();

  ClosestPointResult out;
  out.barycentric = bary;
  out.point = bary[0] * a + bary[1] * b + bary[2] * c;
  out.distance = (p - out.point).norm();
  const int zeros = (bary[0] == 0.0) + (bary[1] == 0.0) + (bary[2] == 0.0);
  out.primitive = zeros == 0 ? ClosestPrimitive::face_interior
                : zeros == 1 ? ClosestPrimitive::edge
                             : ClosestPrimitive::vertex;
  return out;
}

SpatialIndex::SpatialIndex(const TriMesh& mesh) : mesh_(&mesh) {
  if (mesh.face_count() == 0)
    throw std::runtime_error("SpatialIndex: empty mesh");
  order_.resize(mesh.face_count());
  for (int f = 0; f < mesh.face_count(); ++f) order_[f] = f;
  std::vector<Vec3> centroids(mesh.face_count());
  for (int f = 0; f < mesh.face_count(); ++f) {
    const auto& fc = mesh.faces[f];
    centroids[f] = (mesh.vertices[fc[0]] + mesh.vertices[fc[1]] +
                    mesh.vertices[fc[2]]) / 3.0;
  }
  nodes_.reserve(2 * mesh.face_count());
  build(0, mesh.face_count(), centroids);
}

int SpatialIndex::build(int first, int count, std::vector<Vec3>& centroids) {
  const int node_index = static_cast<int>(nodes_.size());
  nodes_.emplace_back();

  Vec3 bmin = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 bmax = -bmin;
  Vec3 cmin = bmin, cmax = bmax;
  for (int k = first; k < first + count; ++k) {
    const auto& fc = mesh_->faces[order_[k]];
    for (int c = 0; c < 3; ++c) {
      bmin = bmin.cwiseMin(mesh_->vertices[fc[c]]);
      bmax = bmax.cwiseMax(mesh_->vertices[fc[c]]);
    }
    cmin = cmin.cwiseMin(centroids[order_[k]]);
    cmax = cmax.cwiseMax(centroids[order_[k]]);
  }
  nodes_[node_index].box_min = bmin;
  nodes_[node_index].box_max = bmax;

  if (count <= 4) {
    nodes_[node_index].first = first;
    nodes_[node_index].count = count;
    return node_index;
  }

  int axis;
  (cmax - cmin).maxCoeff(&axis);
  const int mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid,
                   order_.begin() + first + count, [&](int fa, int fb) {
                     if (centroids[fa][axis] != centroids[fb][axis])
                       return centroids[fa][axis] < centroids[fb][axis];
                     return fa < fb;  // strict order keeps builds deterministic
                   });

  const int left = build(first, mid - first, centroids);
  const int right = build(mid, first + count - mid, centroids);
  nodes_[node_index].left = left;
  nodes_[node_index].right = right;
  return node_index;
}

namespace {

inline double box_sq_distance(const Vec3& p, const Vec3& bmin, const Vec3& bmax) {
  double sq = 0.0;
  for (int i = 0; i < 3; ++i) {
    double d = 0.0;
    if (p[i] < bmin[i]) d = bmin[i] - p[i];
    else if (p[i] > bmax[i]) d = p[i] - bmax[i];
    sq += d * d;
  }
  return sq;
}

}  // namespace

ClosestPointResult SpatialIndex::closest(const Vec3& p) const {
  ClosestPointResult best;
  best.face = -1;
  double best_sq = std::numeric_limits<double>::infinity();

  int stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    // Ties must stay explorable: a box at exactly best_sq can still hold an
    // equal-distance face with a lower index.
    if (box_sq_distance(p, node.box_min, node.box_max) > best_sq) continue;
    if (node.left < 0) {
      for (int k = node.first; k < node.first + node.count; ++k) {
        const int f = order_[k];
        const auto& fc = mesh_->faces[f];
        ClosestPointResult cp = closest_point_on_triangle(
            p, mesh_->vertices[fc[0]], mesh_->vertices[fc[1]],
            mesh_->vertices[fc[2]]);
        const double sq = (p - cp.point).squaredNorm();
        if (sq < best_sq || (sq == best_sq && f < best.face)) {
          best = cp;
          best.face = f;
          best_sq = sq;
        }
      }
      continue;
    }
    const double dl = box_sq_distance(p, nodes_[node.left].box_min,
                                      nodes_[node.left].box_max);
    const double dr = box_sq_distance(p, nodes_[node.right].box_min,
                                      nodes_[node.right].box_max);
    // Push the farther child first so the nearer one is visited next.
    if (dl <= dr) {
      stack[top++] = node.right;
      stack[top++] = node.left;
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return best;
}

ClosestPointResult point_to_surface(const Vec3& p, const TriMesh& mesh,
                                    const SpatialIndex& index) {
  if (mesh.face_count() == 0)
    throw std::runtime_error("point_to_surface: empty mesh");
  return index.closest(p);
}

std::vector<Vec3> vertex_normals(const TriMesh& mesh) {
  std::vector<Vec3> normals(mesh.vertex_count(), Vec3::Zero());
  for (const auto& fc : mesh.faces) {
    // Cross product carries twice the face area: area weighting for free.
    const Vec3 n = (mesh.vertices[fc[1]] - mesh.vertices[fc[0]])
                       .cross(mesh.vertices[fc[2]] - mesh.vertices[fc[0]]);
    for (int c = 0; c < 3; ++c) normals[fc[c]] += n;
  }
  for (auto& n : normals) {
    const double len = n.norm();
    if (len > 0.0) n /= len;
  }
  return normals;
}

PseudoNormals::PseudoNormals(const TriMesh& mesh) : mesh_(&mesh) {
  face_normals_.resize(mesh.face_count());
  vertex_normals_.assign(mesh.vertex_count(), Vec3::Zero());
  for (int f = 0; f < mesh.face_count(); ++f) {
    const auto& fc = mesh.faces[f];
    const Vec3& a = mesh.vertices[fc[0]];
    const Vec3& b = mesh.vertices[fc[1]];
    const Vec3& c = mesh.vertices[fc[2]];
    Vec3 n = (b - a).cross(c - a);
    const double len = n.norm();
    if (len > 0.0) n /= len;
    face_normals_[f] = n;

    for (int corner = 0; corner < 3; ++corner) {
      const Vec3& v0 = mesh.vertices[fc[corner]];
      const Vec3 e1 = (mesh.vertices[fc[(corner + 1) % 3]] - v0).normalized();
      const Vec3 e2 = (mesh.vertices[fc[(corner + 2) % 3]] - v0).normalized();
      const double angle = std::acos(std::clamp(e1.dot(e2), -1.0, 1.0));
      vertex_normals_[fc[corner]] += angle * n;
    }
    for (int corner = 0; corner < 3; ++corner) {
      const auto key = edge_key(fc[corner], fc[(corner + 1) % 3]);
      // try_emplace: Eigen's default constructor leaves coefficients
      // uninitialized, so operator[] would accumulate onto garbage.
      edge_normals_.try_emplace(key, Vec3::Zero()).first->second += n;
    }
  }
  for (auto& n : vertex_normals_) {
    const double len = n.norm();
    if (len > 0.0) n /= len;
  }
  for (auto& [key, n] : edge_normals_) {
    const double len = n.norm();
    if (len > 0.0) n /= len;
  }
}

Vec3 PseudoNormals::at(const ClosestPointResult& cp) const {
  const auto& fc = mesh_->faces[cp.face];
  switch (cp.primitive) {
    case ClosestPrimitive::face_interior:
      return face_normals_[cp.face];
    case ClosestPrimitive::edge: {
      int e0 = -1, e1 = -1;
      for (int c = 0; c < 3; ++c) {
        if (cp.barycentric[c] > 0.0) (e0 < 0 ? e0 : e1) = fc[c];
      }
      return edge_normals_.at(edge_key(e0, e1));
    }
    case ClosestPrimitive::vertex: {
      for (int c = 0; c < 3; ++c)
        if (cp.barycentric[c] > 0.0) return vertex_normals_[fc[c]];
      return vertex_normals_[fc[0]];
    }
  }
  return Vec3::Zero();
}

bool is_inside(const Vec3& p, const ClosestPointResult& cp,
               const PseudoNormals& normals) {
  return normals.at(cp).dot(p - cp.point) < -1e-9;
}

bool is_inside(const Vec3& p, const ClosestPointResult& cp,
               const TriMesh& mesh) {
  return is_inside(p, cp, PseudoNormals(mesh));
}

std::vector<double> geodesic_to_set(const TriMesh& mesh,
                                    const std::vector<int>& seeds) {
  if (seeds.empty())
    throw std::runtime_error("geodesic_to_set: empty seed set");
  const int nv = mesh.vertex_count();
  for (int s : seeds)
    if (s < 0 || s >= nv)
      throw std::runtime_error("geodesic_to_set: seed out of range");

  // Adjacency with Euclidean edge lengths.
  std::vector<std::vector<std::pair<int, double>>> adj(nv);
  for (const auto& e : mesh_edges(mesh)) {
    const double len = (mesh.vertices[e[0]] - mesh.vertices[e[1]]).norm();
    adj[e[0]].emplace_back(e[1], len);
    adj[e[1]].emplace_back(e[0], len);
  }

  std::vector<double> dist(nv, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  for (int s : seeds) {
    if (dist[s] > 0.0) {
      dist[s] = 0.0;
      heap.emplace(0.0, s);
    }
  }
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[u]) continue;
    for (const auto& [v, len] : adj[u]) {
      const double nd = d + len;
      if (nd < dist[v]) {
        dist[v] = nd;
        heap.emplace(nd, v);
      }
    }
  }
  return dist;
}

std::vector<std::array<int, 2>> mesh_edges(const TriMesh& mesh) {
  std::vector<std::array<int, 2>> edges;
  edges.reserve(mesh.face_count() * 3 / 2);
  for (const auto& fc : mesh.faces) {
    for (int c = 0; c < 3; ++c) {
      int a = fc[c], b = fc[(c + 1) % 3];
      if (a > b) std::swap(a, b);
      edges.push_back({a, b});
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

}  // namespace mcs
