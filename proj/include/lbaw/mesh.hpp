#pragma once

#include <array>
#include <string>
#include <vector>

namespace lbaw {

/// Cross-section of one electrical period of the resonator: a piezoelectric
/// film of thickness t_film with two electrodes of alternating polarity
/// recessed t_recess deep from the top surface. w_p is the piezoelectric gap
/// between adjacent electrode edges, w_m the electrode width.
struct UnitCellGeometry {
  double t_film = 0.0;
  double t_recess = 0.0;
  double w_p = 0.0;
  double w_m = 0.0;

  double period() const { return 2.0 * (w_p + w_m); }
};

enum class Region { Piezo, ElectrodeA, ElectrodeB, Air };

std::string region_name(Region r);

/// Structured quadrilateral mesh of the unit cell. Nodes are laid out
/// column-major on a tensor-product grid (xs, zs); right-edge nodes share
/// the z grid of the left edge exactly. Optional exterior vacuum layers
/// (Region::Air) carry the fringing electric field only.
struct Mesh {
  std::vector<std::array<double, 2>> nodes;        // (x, z), meters
  std::vector<std::array<int, 4>> elements;        // CCW node indices
  std::vector<Region> region;                      // per element
  std::vector<int> left_edge;                      // node ids, ascending z
  std::vector<int> right_edge;                     // node ids, ascending z
  std::array<std::vector<int>, 2> electrode_nodes; // per net, sorted

  // Grid bookkeeping (structured meshes only).
  std::vector<double> xs;
  std::vector<double> zs;
  int nx = 0;
  int nz = 0;               // total element rows, including air
  double z_solid_min = 0.0; // film occupies [z_solid_min, z_solid_max]
  double z_solid_max = 0.0;

  int node_id(int ix, int iz) const { return ix * (nz + 1) + iz; }
  double element_area(int e) const;
};

struct MeshQuality {
  double min_jacobian;     // min corner Jacobian over all elements
  double max_aspect_ratio; // max edge-length ratio
};

/// Builds the unit-cell mesh. nx_per_micron sets the in-plane resolution
/// (elements per micron, per segment with mandatory grid lines at electrode
/// edges); nz is the number of layers through the thickness, split at the
/// recess depth. With air_extent > 0, geometrically graded vacuum layers
/// are added above and below the film so the solver can carry the exterior
/// fringing field; air elements have no mechanical content. Throws
/// DegenerateGeometry or ResolutionTooCoarse.
Mesh build_unit_cell(const UnitCellGeometry& geom, double nx_per_micron,
                     int nz, double air_extent = 0.0, int air_layers = 12);

MeshQuality mesh_quality(const Mesh& mesh);

/// Nodes and elements as CSV for external visualization (see README for
/// columns).
std::string mesh_to_csv(const Mesh& mesh);

}  // namespace lbaw
