#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace llhom {

using Point2 = std::array<double, 2>;
using Triangle = std::array<int, 3>;
using Segment = std::array<int, 2>;

enum class MeasurementKind : std::uint32_t { edge = 0, volume = 1, nodal = 2 };

/// Two-level structured triangulation of the unit square.
///
/// The coarse level is an N_c x N_c grid of squares, each split along the
/// lower-left to upper-right diagonal. The fine level is the result of J
/// uniform midpoint refinements, which for this grid family coincides with the
/// (N_c 2^J)-lattice using the same diagonal. Nodes are numbered row-major on
/// their lattice; triangles are numbered per square (lower-right first), so
/// two builds with equal (N_c, J) are bit-identical.
struct HierMesh {
  int coarse_divisions = 0;   // N_c
  int refinement_levels = 0;  // J

  std::vector<Point2> fine_nodes;
  std::vector<Triangle> fine_triangles;  // counterclockwise
  std::vector<Segment> fine_edges;       // sorted endpoints
  std::vector<char> fine_boundary_node;
  std::vector<char> fine_boundary_edge;

  std::vector<Point2> coarse_nodes;
  std::vector<Triangle> coarse_triangles;
  std::vector<Segment> coarse_edges;
  std::vector<char> coarse_boundary_edge;

  std::vector<std::vector<int>> child_map;    // coarse triangle -> fine triangles
  std::vector<int> parent;                    // fine triangle -> coarse triangle
  std::vector<std::vector<int>> fine_node_triangles;
  std::vector<std::vector<int>> coarse_node_triangles;
  std::vector<std::array<int, 2>> coarse_edge_triangles;  // -1 on the boundary
  std::vector<std::vector<int>> coarse_edge_fine_edges;   // fine edges along the coarse edge

  int fine_per_side() const { return coarse_divisions << refinement_levels; }
  double coarse_size() const { return 1.0 / coarse_divisions; }  // H
  double fine_size() const { return 1.0 / fine_per_side(); }     // h
  int num_fine_nodes() const { return static_cast<int>(fine_nodes.size()); }
  int num_fine_triangles() const { return static_cast<int>(fine_triangles.size()); }
  int num_coarse_triangles() const { return static_cast<int>(coarse_triangles.size()); }
  int num_coarse_edges() const { return static_cast<int>(coarse_edges.size()); }

  /// Number of measurement functionals of the given kind.
  int num_measurements(MeasurementKind kind) const;
};

/// Throws llhom::Error when N_c < 1 or J < 0.
HierMesh build_hier_mesh(int coarse_divisions, int refinement_levels);

double triangle_area(const Point2& a, const Point2& b, const Point2& c);

/// Localization patch Omega_i^l around one measurement.
struct Patch {
  int center = 0;
  int layer = 0;
  MeasurementKind kind = MeasurementKind::volume;
  std::vector<int> coarse_elements;      // sorted
  std::vector<int> fine_interior_nodes;  // free nodes (inside, or on the outer boundary)
  std::vector<int> dirichlet_nodes;      // on the patch boundary away from the outer boundary
  bool saturated = false;                // covers the whole domain
};

/// Layer-0 patch is the measurement support (one coarse triangle, or the one or
/// two triangles sharing a coarse edge); each further layer adds every coarse
/// triangle that shares a vertex with the current patch. A fine node is free iff
/// every fine triangle touching it lies in the patch.
Patch build_patch(const HierMesh& mesh, int center, MeasurementKind kind, int layer);

/// Smallest layer at which every patch of the mesh covers the whole domain.
int saturation_layer(const HierMesh& mesh);

/// Coarse entities (triangles for volume, edges for edge) whose support lies in
/// the closed patch such that the functional sees at least one free node.
std::vector<int> measurements_in_patch(const HierMesh& mesh, const Patch& patch);

}  // namespace llhom
