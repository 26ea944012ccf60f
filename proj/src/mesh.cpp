#include "lbaw/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "lbaw/errors.hpp"

namespace lbaw {

namespace {

// Corner Jacobians of a bilinear quad (areal, per unit reference area).
std::array<double, 4> corner_jacobians(const Mesh& m, int e) {
  const auto& el = m.elements[e];
  double x[4], z[4];
  for (int a = 0; a < 4; ++a) {
    x[a] = m.nodes[el[a]][0];
    z[a] = m.nodes[el[a]][1];
  }
  const double xi[4] = {-1, 1, 1, -1};
  const double eta[4] = {-1, -1, 1, 1};
  std::array<double, 4> jac;
  for (int c = 0; c < 4; ++c) {
    double dxdxi = 0, dxdeta = 0, dzdxi = 0, dzdeta = 0;
    for (int a = 0; a < 4; ++a) {
      const double dna_dxi = 0.25 * xi[a] * (1.0 + eta[a] * eta[c]);
      const double dna_deta = 0.25 * eta[a] * (1.0 + xi[a] * xi[c]);
      dxdxi += dna_dxi * x[a];
      dxdeta += dna_deta * x[a];
      dzdxi += dna_dxi * z[a];
      dzdeta += dna_deta * z[a];
    }
    jac[c] = dxdxi * dzdeta - dxdeta * dzdxi;
  }
  return jac;
}

int segment_count(double length_m, double nx_per_micron) {
  const double n = length_m * 1e6 * nx_per_micron;
  return std::max(1, static_cast<int>(std::ceil(n - 1e-9)));
}

void append_grid(std::vector<double>& grid, double from, double to, int n) {
  for (int i = 1; i <= n; ++i) grid.push_back(from + (to - from) * i / n);
}

}  // namespace

std::string region_name(Region r) {
  switch (r) {
    case Region::Piezo: return "Piezo";
    case Region::ElectrodeA: return "ElectrodeA";
    case Region::ElectrodeB: return "ElectrodeB";
    case Region::Air: return "Air";
  }
  return "?";
}

double Mesh::element_area(int e) const {
  const auto& el = elements[e];
  double area = 0.0;
  for (int a = 0; a < 4; ++a) {
    const auto& p = nodes[el[a]];
    const auto& q = nodes[el[(a + 1) % 4]];
    area += p[0] * q[1] - q[0] * p[1];
  }
  return 0.5 * area;
}

Mesh build_unit_cell(const UnitCellGeometry& geom, double nx_per_micron,
                     int nz, double air_extent, int air_layers) {
  if (!(geom.t_film > 0) || !(geom.t_recess > 0) ||
      geom.t_recess >= geom.t_film || !(geom.w_p > 0) || geom.w_m < 0)
    throw DegenerateGeometry(
        "unit cell requires 0 < t_recess < t_film, w_p > 0, w_m >= 0");
  if (nz < 5) throw ResolutionTooCoarse("nz must be at least 5");
  if (!(nx_per_micron > 0))
    throw ResolutionTooCoarse("nx_per_micron must be positive");
  if (air_extent < 0 || (air_extent > 0 && air_layers < 2))
    throw DegenerateGeometry("air mesh needs extent >= 0 and >= 2 layers");

  const double period = geom.period();

  // In-plane segments with mandatory grid lines at electrode edges. The two
  // electrodes sit symmetrically: half a gap, electrode A, full gap,
  // electrode B, half a gap.
  std::vector<double> xs{0.0};
  std::vector<int> elem_per_segment;
  std::vector<bool> segment_is_electrode;
  std::vector<int> segment_net;
  if (geom.w_m > 0) {
    const double half_gap = 0.5 * geom.w_p;
    const double breaks[6] = {0.0,
                              half_gap,
                              half_gap + geom.w_m,
                              half_gap + geom.w_m + geom.w_p,
                              half_gap + 2.0 * geom.w_m + geom.w_p,
                              period};
    const bool is_metal[5] = {false, true, false, true, false};
    const int net[5] = {-1, 0, -1, 1, -1};
    for (int s = 0; s < 5; ++s) {
      const int n = segment_count(breaks[s + 1] - breaks[s], nx_per_micron);
      elem_per_segment.push_back(n);
      segment_is_electrode.push_back(is_metal[s]);
      segment_net.push_back(net[s]);
      append_grid(xs, breaks[s], breaks[s + 1], n);
    }
    const int across_wm = elem_per_segment[1];
    const int across_wp = elem_per_segment[2];
    const int across_min = geom.w_m <= geom.w_p ? across_wm : across_wp;
    if (across_min < 4)
      throw ResolutionTooCoarse(
          "need >= 4 elements across min(w_m, w_p); got " +
          std::to_string(across_min));
  } else {
    const int n = segment_count(period, nx_per_micron);
    elem_per_segment.push_back(n);
    segment_is_electrode.push_back(false);
    segment_net.push_back(-1);
    append_grid(xs, 0.0, period, n);
  }
  xs.back() = period;  // exact

  // Thickness grid split exactly at the recess depth.
  const double z_if = geom.t_film - geom.t_recess;
  int nz_lower = static_cast<int>(std::lround(nz * z_if / geom.t_film));
  nz_lower = std::clamp(nz_lower, 1, nz - 1);
  std::vector<double> zs{0.0};
  append_grid(zs, 0.0, z_if, nz_lower);
  append_grid(zs, z_if, geom.t_film, nz - nz_lower);
  zs[nz_lower] = z_if;
  zs.back() = geom.t_film;

  // Geometrically graded vacuum layers carrying the fringing field.
  int n_air = 0;
  if (air_extent > 0.0) {
    n_air = air_layers;
    const double growth = 1.35;
    std::vector<double> steps(n_air);
    double total = 0.0, step = 1.0;
    for (int i = 0; i < n_air; ++i) {
      steps[i] = step;
      total += step;
      step *= growth;
    }
    for (auto& s : steps) s *= air_extent / total;
    std::vector<double> zall;
    // Below the film: fine layers at the surface, coarsening outward.
    double z = 0.0;
    std::vector<double> below;
    for (int i = 0; i < n_air; ++i) {
      z -= steps[i];
      below.push_back(z);
    }
    zall.assign(below.rbegin(), below.rend());
    zall.insert(zall.end(), zs.begin(), zs.end());
    z = geom.t_film;
    for (int i = 0; i < n_air; ++i) {
      z += steps[i];
      zall.push_back(z);
    }
    zs = std::move(zall);
  }

  Mesh m;
  m.xs = xs;
  m.zs = zs;
  m.nx = static_cast<int>(xs.size()) - 1;
  m.nz = nz + 2 * n_air;
  m.z_solid_min = 0.0;
  m.z_solid_max = geom.t_film;
  m.nodes.reserve((m.nx + 1) * (m.nz + 1));
  for (int ix = 0; ix <= m.nx; ++ix)
    for (int iz = 0; iz <= m.nz; ++iz) m.nodes.push_back({xs[ix], zs[iz]});

  // Element column -> segment lookup.
  std::vector<int> column_segment(m.nx);
  {
    int col = 0;
    for (size_t s = 0; s < elem_per_segment.size(); ++s)
      for (int i = 0; i < elem_per_segment[s]; ++i) column_segment[col++] = s;
  }

  std::array<std::set<int>, 2> electrode_node_sets;
  for (int ix = 0; ix < m.nx; ++ix) {
    const int seg = column_segment[ix];
    for (int iz = 0; iz < m.nz; ++iz) {
      m.elements.push_back({m.node_id(ix, iz), m.node_id(ix + 1, iz),
                            m.node_id(ix + 1, iz + 1), m.node_id(ix, iz + 1)});
      Region r;
      const int iz_solid = iz - n_air;  // row index within the film
      if (iz_solid < 0 || iz_solid >= nz) {
        r = Region::Air;
      } else if (segment_is_electrode[seg] && iz_solid >= nz_lower) {
        r = segment_net[seg] == 0 ? Region::ElectrodeA : Region::ElectrodeB;
        for (const int n : m.elements.back())
          electrode_node_sets[segment_net[seg]].insert(n);
      } else {
        r = Region::Piezo;
      }
      m.region.push_back(r);
    }
  }
  for (int net = 0; net < 2; ++net)
    m.electrode_nodes[net].assign(electrode_node_sets[net].begin(),
                                  electrode_node_sets[net].end());

  for (int iz = 0; iz <= m.nz; ++iz) {
    m.left_edge.push_back(m.node_id(0, iz));
    m.right_edge.push_back(m.node_id(m.nx, iz));
  }
  return m;
}

MeshQuality mesh_quality(const Mesh& mesh) {
  MeshQuality q{std::numeric_limits<double>::max(), 0.0};
  for (size_t e = 0; e < mesh.elements.size(); ++e) {
    const auto jac = corner_jacobians(mesh, static_cast<int>(e));
    for (const double j : jac) q.min_jacobian = std::min(q.min_jacobian, j);

    const auto& el = mesh.elements[e];
    double emin = std::numeric_limits<double>::max(), emax = 0.0;
    for (int a = 0; a < 4; ++a) {
      const auto& p = mesh.nodes[el[a]];
      const auto& r = mesh.nodes[el[(a + 1) % 4]];
      const double len = std::hypot(r[0] - p[0], r[1] - p[1]);
      emin = std::min(emin, len);
      emax = std::max(emax, len);
    }
    if (emin > 0) q.max_aspect_ratio = std::max(q.max_aspect_ratio, emax / emin);
  }
  return q;
}

std::string mesh_to_csv(const Mesh& mesh) {
  std::ostringstream out;
  char buf[64];
  out << "kind,id,a,b,c,d,region\n";
  for (size_t n = 0; n < mesh.nodes.size(); ++n) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g", mesh.nodes[n][0],
                  mesh.nodes[n][1]);
    out << "node," << n << "," << buf << ",,\n";
  }
  for (size_t e = 0; e < mesh.elements.size(); ++e) {
    const auto& el = mesh.elements[e];
    out << "element," << e << "," << el[0] << "," << el[1] << "," << el[2]
        << "," << el[3] << "," << region_name(mesh.region[e]) << "\n";
  }
  return out.str();
}

}  // namespace lbaw
