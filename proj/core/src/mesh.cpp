#include "llhom/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "llhom/error.hpp"

namespace llhom {

namespace {

// Triangulates an n x n lattice of squares with the lower-left to upper-right
// diagonal. Triangle 2*s is the lower-right half of square s, 2*s+1 the upper-left.
void lattice_triangulation(int n, std::vector<Point2>& nodes, std::vector<Triangle>& tris) {
  const int side = n + 1;
  nodes.resize(static_cast<std::size_t>(side) * side);
  for (int iy = 0; iy <= n; ++iy)
    for (int ix = 0; ix <= n; ++ix)
      nodes[iy * side + ix] = {static_cast<double>(ix) / n, static_cast<double>(iy) / n};

  tris.clear();
  tris.reserve(2 * static_cast<std::size_t>(n) * n);
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const int ll = iy * side + ix;
      const int lr = ll + 1;
      const int ul = ll + side;
      const int ur = ul + 1;
      tris.push_back({ll, lr, ur});
      tris.push_back({ll, ur, ul});
    }
  }
}

std::int64_t edge_key(int a, int b, int num_nodes) {
  if (a > b) std::swap(a, b);
  return static_cast<std::int64_t>(a) * num_nodes + b;
}

// Enumerates edges in first-seen order over the triangle list.
void collect_edges(const std::vector<Triangle>& tris, int num_nodes, std::vector<Segment>& edges,
                   std::vector<std::array<int, 2>>& edge_tris,
                   std::unordered_map<std::int64_t, int>& index) {
  edges.clear();
  edge_tris.clear();
  index.clear();
  index.reserve(tris.size() * 2);
  for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
    for (int k = 0; k < 3; ++k) {
      const int a = tris[t][k];
      const int b = tris[t][(k + 1) % 3];
      auto [it, inserted] = index.try_emplace(edge_key(a, b, num_nodes), static_cast<int>(edges.size()));
      if (inserted) {
        edges.push_back({std::min(a, b), std::max(a, b)});
        edge_tris.push_back({t, -1});
      } else {
        edge_tris[it->second][1] = t;
      }
    }
  }
}

}  // namespace

double triangle_area(const Point2& a, const Point2& b, const Point2& c) {
  return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
}

int HierMesh::num_measurements(MeasurementKind kind) const {
  switch (kind) {
    case MeasurementKind::edge:
      return num_coarse_edges();
    case MeasurementKind::volume:
      return num_coarse_triangles();
    case MeasurementKind::nodal:
      return num_fine_nodes();
  }
  return 0;
}

HierMesh build_hier_mesh(int coarse_divisions, int refinement_levels) {
  if (coarse_divisions < 1) throw Error("build_hier_mesh: coarse_divisions must be >= 1");
  if (refinement_levels < 0) throw Error("build_hier_mesh: refinement_levels must be >= 0");
  if (refinement_levels > 12) throw Error("build_hier_mesh: refinement_levels too large");

  HierMesh mesh;
  mesh.coarse_divisions = coarse_divisions;
  mesh.refinement_levels = refinement_levels;
  const int nc = coarse_divisions;
  const int nf = mesh.fine_per_side();
  const int scale = 1 << refinement_levels;

  lattice_triangulation(nc, mesh.coarse_nodes, mesh.coarse_triangles);
  lattice_triangulation(nf, mesh.fine_nodes, mesh.fine_triangles);

  const int num_fine = mesh.num_fine_nodes();
  std::unordered_map<std::int64_t, int> fine_edge_index;
  std::vector<std::array<int, 2>> fine_edge_tris;
  collect_edges(mesh.fine_triangles, num_fine, mesh.fine_edges, fine_edge_tris, fine_edge_index);
  mesh.fine_boundary_edge.resize(mesh.fine_edges.size());
  for (std::size_t e = 0; e < mesh.fine_edges.size(); ++e)
    mesh.fine_boundary_edge[e] = fine_edge_tris[e][1] < 0;

  mesh.fine_boundary_node.assign(num_fine, 0);
  for (int iy = 0; iy <= nf; ++iy)
    for (int ix = 0; ix <= nf; ++ix)
      if (ix == 0 || iy == 0 || ix == nf || iy == nf) mesh.fine_boundary_node[iy * (nf + 1) + ix] = 1;

  std::unordered_map<std::int64_t, int> coarse_edge_index;
  collect_edges(mesh.coarse_triangles, static_cast<int>(mesh.coarse_nodes.size()), mesh.coarse_edges,
                mesh.coarse_edge_triangles, coarse_edge_index);
  mesh.coarse_boundary_edge.resize(mesh.coarse_edges.size());
  for (std::size_t e = 0; e < mesh.coarse_edges.size(); ++e)
    mesh.coarse_boundary_edge[e] = mesh.coarse_edge_triangles[e][1] < 0;

  // Parent lookup with exact integer arithmetic on centroids (scaled by 3).
  mesh.parent.resize(mesh.fine_triangles.size());
  mesh.child_map.assign(mesh.coarse_triangles.size(), {});
  for (int fy = 0; fy < nf; ++fy) {
    for (int fx = 0; fx < nf; ++fx) {
      const int cx = fx / scale;
      const int cy = fy / scale;
      const int a = fx - cx * scale;
      const int b = fy - cy * scale;
      const int square = cy * nc + cx;
      const int fine_square = fy * nf + fx;
      // Lower-right fine triangle: centroid (a+2/3, b+1/3); upper-left: (a+1/3, b+2/3).
      const int lr_parent = 2 * square + ((3 * a + 2 > 3 * b + 1) ? 0 : 1);
      const int ul_parent = 2 * square + ((3 * a + 1 > 3 * b + 2) ? 0 : 1);
      mesh.parent[2 * fine_square] = lr_parent;
      mesh.parent[2 * fine_square + 1] = ul_parent;
    }
  }
  for (int t = 0; t < mesh.num_fine_triangles(); ++t) mesh.child_map[mesh.parent[t]].push_back(t);

  mesh.fine_node_triangles.assign(num_fine, {});
  for (int t = 0; t < mesh.num_fine_triangles(); ++t)
    for (int v : mesh.fine_triangles[t]) mesh.fine_node_triangles[v].push_back(t);
  mesh.coarse_node_triangles.assign(mesh.coarse_nodes.size(), {});
  for (int t = 0; t < mesh.num_coarse_triangles(); ++t)
    for (int v : mesh.coarse_triangles[t]) mesh.coarse_node_triangles[v].push_back(t);

  // Fine edges along each coarse edge: walk the fine lattice between the endpoints.
  mesh.coarse_edge_fine_edges.resize(mesh.coarse_edges.size());
  for (std::size_t e = 0; e < mesh.coarse_edges.size(); ++e) {
    const auto [p, q] = mesh.coarse_edges[e];
    const int px = (p % (nc + 1)) * scale, py = (p / (nc + 1)) * scale;
    const int qx = (q % (nc + 1)) * scale, qy = (q / (nc + 1)) * scale;
    const int dx = (qx - px) / scale, dy = (qy - py) / scale;
    auto& list = mesh.coarse_edge_fine_edges[e];
    for (int s = 0; s < scale; ++s) {
      const int a = (py + s * dy) * (nf + 1) + px + s * dx;
      const int b = (py + (s + 1) * dy) * (nf + 1) + px + (s + 1) * dx;
      list.push_back(fine_edge_index.at(edge_key(a, b, num_fine)));
    }
  }
  return mesh;
}

namespace {

std::vector<int> initial_elements(const HierMesh& mesh, int center, MeasurementKind kind) {
  switch (kind) {
    case MeasurementKind::volume:
      if (center < 0 || center >= mesh.num_coarse_triangles())
        throw Error("build_patch: volume index " + std::to_string(center) + " out of range");
      return {center};
    case MeasurementKind::edge: {
      if (center < 0 || center >= mesh.num_coarse_edges())
        throw Error("build_patch: edge index " + std::to_string(center) + " out of range");
      std::vector<int> out;
      for (int t : mesh.coarse_edge_triangles[center])
        if (t >= 0) out.push_back(t);
      std::sort(out.begin(), out.end());
      return out;
    }
    case MeasurementKind::nodal:
      break;
  }
  throw Error("build_patch: nodal measurements have no coarse patch");
}

// One vertex-adjacency growth step; `member` mirrors `elements`.
void grow(const HierMesh& mesh, std::vector<int>& elements, std::vector<char>& member) {
  std::vector<int> added;
  for (int t : elements)
    for (int v : mesh.coarse_triangles[t])
      for (int nb : mesh.coarse_node_triangles[v])
        if (!member[nb]) {
          member[nb] = 1;
          added.push_back(nb);
        }
  elements.insert(elements.end(), added.begin(), added.end());
  std::sort(elements.begin(), elements.end());
}

}  // namespace

Patch build_patch(const HierMesh& mesh, int center, MeasurementKind kind, int layer) {
  if (layer < 0) throw Error("build_patch: negative layer");
  Patch patch;
  patch.center = center;
  patch.layer = layer;
  patch.kind = kind;
  patch.coarse_elements = initial_elements(mesh, center, kind);

  std::vector<char> member(mesh.coarse_triangles.size(), 0);
  for (int t : patch.coarse_elements) member[t] = 1;
  for (int l = 0; l < layer && patch.coarse_elements.size() < mesh.coarse_triangles.size(); ++l)
    grow(mesh, patch.coarse_elements, member);
  patch.saturated = patch.coarse_elements.size() == mesh.coarse_triangles.size();

  std::vector<char> seen(mesh.fine_nodes.size(), 0);
  for (int t : patch.coarse_elements) {
    for (int ft : mesh.child_map[t]) {
      for (int v : mesh.fine_triangles[ft]) {
        if (seen[v]) continue;
        seen[v] = 1;
        const bool inside = std::all_of(mesh.fine_node_triangles[v].begin(), mesh.fine_node_triangles[v].end(),
                                        [&](int nt) { return member[mesh.parent[nt]] != 0; });
        (inside ? patch.fine_interior_nodes : patch.dirichlet_nodes).push_back(v);
      }
    }
  }
  std::sort(patch.fine_interior_nodes.begin(), patch.fine_interior_nodes.end());
  std::sort(patch.dirichlet_nodes.begin(), patch.dirichlet_nodes.end());
  return patch;
}

int saturation_layer(const HierMesh& mesh) {
  int worst = 0;
  const int total = mesh.num_coarse_triangles();
  std::vector<char> member(total);
  for (int t = 0; t < total; ++t) {
    std::fill(member.begin(), member.end(), 0);
    std::vector<int> elements{t};
    member[t] = 1;
    int layers = 0;
    while (static_cast<int>(elements.size()) < total) {
      grow(mesh, elements, member);
      ++layers;
    }
    worst = std::max(worst, layers);
  }
  return worst;
}

std::vector<int> measurements_in_patch(const HierMesh& mesh, const Patch& patch) {
  std::vector<char> member(mesh.coarse_triangles.size(), 0);
  for (int t : patch.coarse_elements) member[t] = 1;
  std::vector<int> out;
  if (patch.kind == MeasurementKind::volume) {
    out = patch.coarse_elements;
  } else {
    for (int e = 0; e < mesh.num_coarse_edges(); ++e) {
      const auto& adj = mesh.coarse_edge_triangles[e];
      bool inside = member[adj[0]] != 0;
      if (adj[1] >= 0) inside = inside && member[adj[1]] != 0;
      if (inside) out.push_back(e);
    }
  }
  return out;
}

}  // namespace llhom
