#include "lbaw/fem.hpp"

#include <cmath>

#include "doctest.h"
#include "lbaw/errors.hpp"
#include "lbaw/materials.hpp"
#include "lbaw/mesh.hpp"

#ifndef LBAW_DATA_DIR
#define LBAW_DATA_DIR "data"
#endif

using namespace lbaw;

namespace {

const std::map<std::string, MaterialTensors>& material_db() {
  static const auto db =
      load_material_file(std::string(LBAW_DATA_DIR) + "/materials.txt");
  return db;
}

std::map<Region, MaterialTensors> uniform_materials(
    const MaterialTensors& m) {
  return {{Region::Piezo, m},
          {Region::ElectrodeA, m},
          {Region::ElectrodeB, m}};
}

std::map<Region, MaterialTensors> paper_materials(const EulerAngles& euler) {
  const auto& db = material_db();
  return {{Region::Piezo, rotate_tensors(db.at("linbo3"), euler)},
          {Region::ElectrodeA, db.at("alsicu")},
          {Region::ElectrodeB, db.at("alsicu")}};
}

// Independent shape-function evaluation for the patch-test stress check.
void shape_derivs(const double x[4], const double z[4], double xi, double eta,
                  double dndx[4], double dndz[4]) {
  const double xin[4] = {-1, 1, 1, -1};
  const double etan[4] = {-1, -1, 1, 1};
  double dxdxi = 0, dxdeta = 0, dzdxi = 0, dzdeta = 0;
  double dndxi[4], dndeta[4];
  for (int a = 0; a < 4; ++a) {
    dndxi[a] = 0.25 * xin[a] * (1 + etan[a] * eta);
    dndeta[a] = 0.25 * etan[a] * (1 + xin[a] * xi);
    dxdxi += dndxi[a] * x[a];
    dxdeta += dndeta[a] * x[a];
    dzdxi += dndxi[a] * z[a];
    dzdeta += dndeta[a] * z[a];
  }
  const double det = dxdxi * dzdeta - dxdeta * dzdxi;
  for (int a = 0; a < 4; ++a) {
    dndx[a] = (dzdeta * dndxi[a] - dzdxi * dndeta[a]) / det;
    dndz[a] = (-dxdeta * dndxi[a] + dxdxi * dndeta[a]) / det;
  }
}

}  // namespace

TEST_CASE("patch test: uniform strain on a distorted patch") {
  // 3x3 nodes, center node displaced off the regular grid.
  Mesh mesh;
  mesh.nodes = {{0, 0},     {0, 0.4},     {0, 1},   {0.5, 0}, {0.45, 0.55},
                {0.6, 1},   {1, 0},       {1, 0.5}, {1, 1}};
  mesh.elements = {{0, 3, 4, 1}, {3, 6, 7, 4}, {1, 4, 5, 2}, {4, 7, 8, 5}};
  mesh.region.assign(4, Region::Piezo);
  mesh.xs = {0, 0.5, 1};
  mesh.zs = {0, 0.5, 1};
  mesh.nx = 2;
  mesh.nz = 2;

  const auto mat =
      rotate_tensors(material_db().at("linbo3"), {-90, -90, 30});
  const auto sys = assemble(mesh, uniform_materials(mat));
  CHECK(sys.n_mech == 27);
  CHECK(sys.n_phi == 9);

  // Affine displacement field -> uniform strain.
  const double exx = 1e-3, ezz = -2e-3, gxz = 5e-4, gxy = 3e-4, gyz = -7e-4;
  Eigen::VectorXd u(sys.n_mech);
  for (int n = 0; n < 9; ++n) {
    const double x = mesh.nodes[n][0], z = mesh.nodes[n][1];
    u[sys.mech_dof(n, 0)] = exx * x + 0.25 * gxz * z;
    u[sys.mech_dof(n, 1)] = gxy * x + gyz * z;
    u[sys.mech_dof(n, 2)] = ezz * z + 0.75 * gxz * x;
  }
  Eigen::Matrix<double, 6, 1> strain;
  strain << exx, 0.0, ezz, gyz, gxz, gxy;
  const Eigen::Matrix<double, 6, 1> stress = mat.c_E * strain;

  // Interior node (4) carries no net force under uniform stress.
  const Eigen::VectorXd f = sys.K_uu * u;
  const double scale = f.cwiseAbs().maxCoeff();
  for (int c = 0; c < 3; ++c)
    CHECK(std::abs(f[sys.mech_dof(4, c)]) < 1e-9 * scale);

  // Stress from the affine field is exactly uniform at the Gauss points.
  const double gp = 1.0 / std::sqrt(3.0);
  for (int e = 0; e < 4; ++e) {
    double x[4], z[4];
    for (int a = 0; a < 4; ++a) {
      x[a] = mesh.nodes[mesh.elements[e][a]][0];
      z[a] = mesh.nodes[mesh.elements[e][a]][1];
    }
    for (const double xi : {-gp, gp})
      for (const double eta : {-gp, gp}) {
        double dndx[4], dndz[4];
        shape_derivs(x, z, xi, eta, dndx, dndz);
        Eigen::Matrix<double, 6, 1> eps = Eigen::Matrix<double, 6, 1>::Zero();
        for (int a = 0; a < 4; ++a) {
          const int n = mesh.elements[e][a];
          eps[0] += dndx[a] * u[sys.mech_dof(n, 0)];
          eps[2] += dndz[a] * u[sys.mech_dof(n, 2)];
          eps[3] += dndz[a] * u[sys.mech_dof(n, 1)];
          eps[4] += dndz[a] * u[sys.mech_dof(n, 0)] +
                    dndx[a] * u[sys.mech_dof(n, 2)];
          eps[5] += dndx[a] * u[sys.mech_dof(n, 1)];
        }
        const Eigen::Matrix<double, 6, 1> sg = mat.c_E * eps;
        for (int i = 0; i < 6; ++i)
          CHECK(sg[i] ==
                doctest::Approx(stress[i]).epsilon(1e-9).scale(
                    stress.cwiseAbs().maxCoeff()));
      }
  }
}

TEST_CASE("assembly invariants on the paper cell") {
  const UnitCellGeometry geom{100e-9, 80e-9, 2e-6, 0.2e-6};
  const auto mesh = build_unit_cell(geom, 24.0, 6);
  const auto mats = paper_materials({-90, -90, -10});
  const auto sys = assemble(mesh, mats);

  // Periodic ties drop one column of nodes (4 DOFs per edge node).
  const int n_nodes = static_cast<int>(mesh.nodes.size());
  const int n_edge = static_cast<int>(mesh.right_edge.size());
  const int n_elec = static_cast<int>(mesh.electrode_nodes[0].size() +
                                      mesh.electrode_nodes[1].size());
  CHECK(sys.n_mech == 3 * (n_nodes - n_edge));
  CHECK(sys.n_phi == (n_nodes - n_edge - n_elec) + 2);
  CHECK(sys.net_master[0] >= 0);
  CHECK(sys.net_master[1] >= 0);

  // Symmetry.
  CHECK((Eigen::MatrixXd(sys.K_uu) - Eigen::MatrixXd(sys.K_uu).transpose())
            .cwiseAbs()
            .maxCoeff() < 1e-6 * Eigen::MatrixXd(sys.K_uu).cwiseAbs().maxCoeff());
  CHECK((Eigen::MatrixXd(sys.M) - Eigen::MatrixXd(sys.M).transpose())
            .cwiseAbs()
            .maxCoeff() < 1e-14 * Eigen::MatrixXd(sys.M).cwiseAbs().maxCoeff());

  // Total mass per unit depth: translation quadratic form.
  Eigen::VectorXd tx = Eigen::VectorXd::Zero(sys.n_mech);
  for (int i = 0; i < sys.n_mech; i += 3) tx[i] = 1.0;
  const double elec_area = 2.0 * geom.w_m * geom.t_recess;
  const double expected =
      mats.at(Region::Piezo).rho * (geom.period() * geom.t_film - elec_area) +
      mats.at(Region::ElectrodeA).rho * elec_area;
  CHECK(tx.dot(sys.M * tx) == doctest::Approx(expected).epsilon(1e-10));

  // K_phiphi positive semi-definite in the documented convention, with the
  // constant-potential vector as its only kernel; grounding one master
  // makes it definite.
  {
    const Eigen::MatrixXd kpp(sys.K_phiphi);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(kpp);
    const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
    CHECK(es.eigenvalues().minCoeff() > -1e-12 * scale);
    int null_dim = 0;
    for (int i = 0; i < sys.n_phi; ++i)
      if (std::abs(es.eigenvalues()[i]) < 1e-9 * scale) ++null_dim;
    CHECK(null_dim == 1);

    const int drop = sys.net_master[1];
    Eigen::MatrixXd grounded(sys.n_phi - 1, sys.n_phi - 1);
    for (int i = 0, gi = 0; i < sys.n_phi; ++i) {
      if (i == drop) continue;
      for (int j = 0, gj = 0; j < sys.n_phi; ++j) {
        if (j == drop) continue;
        grounded(gi, gj++) = kpp(i, j);
      }
      ++gi;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(grounded);
    CHECK(es2.eigenvalues().minCoeff() > 0.0);
  }

  // Missing material throws.
  std::map<Region, MaterialTensors> incomplete{
      {Region::Piezo, mats.at(Region::Piezo)}};
  CHECK_THROWS_AS(assemble(mesh, incomplete), MissingMaterial);
}

TEST_CASE("zero piezo coupling gives zero K_uphi") {
  const auto mesh = build_unit_cell({100e-9, 80e-9, 2e-6, 0.6e-6}, 8.0, 5);
  auto mat = material_db().at("linbo3");
  mat.e.setZero();
  const auto sys = assemble(mesh, uniform_materials(mat));
  CHECK(sys.K_uphi.nonZeros() == 0);
}

TEST_CASE("analytic plate waves of a uniform isotropic periodic cell") {
  // Electrode-free cell, period 4 um of AlSiCu-like isotropic material.
  const UnitCellGeometry geom{100e-9, 80e-9, 2e-6, 0.0};
  const auto mesh = build_unit_cell(geom, 12.0, 10);
  const auto& mat = material_db().at("alsicu");
  const auto sys = assemble(mesh, uniform_materials(mat));

  const double lambda_l = mat.c_E(0, 1), mu = mat.c_E(3, 3);
  const double rho = mat.rho;
  const double youngs = mu * (3 * lambda_l + 2 * mu) / (lambda_l + mu);
  const double nu = lambda_l / (2 * (lambda_l + mu));
  const double v_s0 = std::sqrt(youngs / (rho * (1 - nu * nu)));
  const double v_sh0 = std::sqrt(mu / rho);
  const double period = geom.period();

  const auto modes = solve_modes(sys, ElectricalBC::Short, {50e6, 2.5e9}, 40,
                                 EigMethod::Dense);
  REQUIRE(!modes.empty());

  // No rigid modes leak through the 1 MHz filter...
  for (const auto& m : modes) CHECK(m.f > 1e6);

  // ...but exactly 3 of them exist in the raw spectrum, below 1 MHz.
  {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(
        Eigen::MatrixXd(sys.K_uu), Eigen::MatrixXd(sys.M));
    int n_rigid = 0;
    const double lim = std::pow(2 * M_PI * 1e6, 2);
    for (int i = 0; i < sys.n_mech; ++i)
      if (std::abs(ges.eigenvalues()[i]) < lim) ++n_rigid;
    CHECK(n_rigid == 3);
  }

  double f_s0 = 0, f_sh0 = 0;
  for (const auto& m : modes) {
    if (f_s0 == 0 && m.label.type == ModeType::S0) f_s0 = m.f;
    if (f_sh0 == 0 && m.label.type == ModeType::SH0) f_sh0 = m.f;
    CHECK(m.p_x + m.p_y + m.p_z == doctest::Approx(1.0).epsilon(1e-9));
    // Mass normalization.
    CHECK(m.u_reduced.dot(sys.M * m.u_reduced) ==
          doctest::Approx(1.0).epsilon(1e-9));
  }
  REQUIRE(f_s0 > 0);
  REQUIRE(f_sh0 > 0);
  CHECK(f_s0 == doctest::Approx(v_s0 / period).epsilon(0.01));
  CHECK(f_sh0 == doctest::Approx(v_sh0 / period).epsilon(0.01));
}

TEST_CASE("classification of synthetic fields") {
  ModeSolution m;
  m.p_x = 0.05;
  m.p_y = 0.9;
  m.p_z = 0.05;
  CHECK(classify(m).type == ModeType::SH0);

  m.p_y = 0.1;
  m.p_z = 0.85;
  m.p_x = 0.05;
  CHECK(classify(m).type == ModeType::Flexural);

  m.p_x = 0.8;
  m.p_y = 0.1;
  m.p_z = 0.1;
  CHECK(classify(m).type == ModeType::S0);

  m.p_x = 0.4;
  m.p_y = 0.3;
  m.p_z = 0.3;
  CHECK(classify(m).type == ModeType::Other);

  // Overtone order from midline sign changes with a noise floor.
  m.midline_sigma_xx = {1, 1, -1, -1, 1, 1, -1, -1, 1, 1, -1, -1};
  CHECK(classify(m).order == 3);  // 5+ sign changes
  m.midline_sigma_xx = {1e-9, 1, 1, 1e-9, -1, -1, 1e-9};
  CHECK(classify(m).order == 1);  // tiny samples discarded, 1 change
}

TEST_CASE("zero-coupling degeneracy: short equals float") {
  auto mat = material_db().at("linbo3");
  mat.e.setZero();
  const auto mesh = build_unit_cell({100e-9, 80e-9, 2e-6, 0.6e-6}, 8.0, 5);
  std::map<Region, MaterialTensors> mats{
      {Region::Piezo, mat},
      {Region::ElectrodeA, material_db().at("alsicu")},
      {Region::ElectrodeB, material_db().at("alsicu")}};
  // Electrode alloy carries no coupling in the db; zero the piezo too.
  for (auto& [r, mm] : mats) mm.e.setZero();

  const auto sys = assemble(mesh, mats);
  const auto window = std::make_pair(50e6, 3e9);
  const auto shorts = solve_modes(sys, ElectricalBC::Short, window, 24);
  const auto floats = solve_modes(sys, ElectricalBC::Float, window, 24);
  REQUIRE(shorts.size() == floats.size());
  REQUIRE(shorts.size() > 8);
  for (size_t i = 0; i < shorts.size(); ++i)
    CHECK(std::abs(shorts[i].f - floats[i].f) < 1e-10 * shorts[i].f);

  const auto pairing = pair_modes(shorts, floats, sys);
  CHECK(pairing.pairs.size() == shorts.size());
  for (const auto& p : pairing.pairs) {
    CHECK(p.mac > 1.0 - 1e-9);
    CHECK(std::abs(p.fp - p.fs) < 1e-10 * p.fs);
  }
}

TEST_CASE("disjoint synthetic mode shapes stay unpaired") {
  SystemMatrices sys;
  sys.n_mech = 3;
  sys.M.resize(3, 3);
  sys.M.setIdentity();
  ModeSolution a, b, c;
  a.f = 1e9;
  a.u_reduced = Eigen::Vector3d(1, 0, 0);
  b.f = 1.1e9;
  b.u_reduced = Eigen::Vector3d(0, 1, 0);
  c.f = 1.2e9;
  c.u_reduced = Eigen::Vector3d(0, 0, 1);
  const auto res = pair_modes({a, b}, {c}, sys);
  CHECK(res.pairs.empty());
  CHECK(res.unpaired_short.size() == 2);
  CHECK(res.unpaired_float.size() == 1);
}

TEST_CASE("piezoelectric stiffening: SH0 pairs with fp > fs") {
  const UnitCellGeometry geom{100e-9, 80e-9, 2e-6, 0.1125 * 2e-6};
  const auto mesh = build_unit_cell(geom, 18.0, 6);
  const auto sys = assemble(mesh, paper_materials({-90, -90, -10}));
  const auto window = std::make_pair(100e6, 2e9);
  const auto shorts = solve_modes(sys, ElectricalBC::Short, window, 32);
  const auto floats = solve_modes(sys, ElectricalBC::Float, window, 32);
  const auto pairing = pair_modes(shorts, floats, sys);
  REQUIRE(!pairing.pairs.empty());

  bool found_sh0 = false;
  for (const auto& p : pairing.pairs) {
    CHECK(p.fp >= p.fs * (1.0 - 1e-9));
    const auto& mode = shorts[p.short_index];
    if (mode.label.type == ModeType::SH0 && mode.label.order == 1 &&
        p.fp > p.fs * 1.01) {
      found_sh0 = true;
    }
  }
  CHECK(found_sh0);
}

TEST_CASE("dense and shift-invert solvers agree") {
  const UnitCellGeometry geom{100e-9, 80e-9, 2e-6, 1e-6};
  const auto mesh = build_unit_cell(geom, 6.0, 5);
  const auto sys = assemble(mesh, paper_materials({-90, -90, 30}));
  const auto window = std::make_pair(100e6, 2.5e9);
  const auto dense =
      solve_modes(sys, ElectricalBC::Short, window, 16, EigMethod::Dense);
  const auto lanczos = solve_modes(sys, ElectricalBC::Short, window, 16,
                                   EigMethod::ShiftInvert);
  REQUIRE(dense.size() >= 8);
  REQUIRE(lanczos.size() == dense.size());
  for (size_t i = 0; i < dense.size(); ++i) {
    CHECK(lanczos[i].f == doctest::Approx(dense[i].f).epsilon(1e-7));
    CHECK(modal_assurance(lanczos[i].u_reduced, dense[i].u_reduced, sys.M) >
          1.0 - 1e-6);
  }
}

TEST_CASE("energy partition") {
  SUBCASE("no electrodes -> eta = 1 exactly") {
    const auto mesh = build_unit_cell({100e-9, 80e-9, 2e-6, 0.0}, 10.0, 5);
    const auto& mat = material_db().at("alsicu");
    const auto sys = assemble(mesh, uniform_materials(mat));
    const auto modes =
        solve_modes(sys, ElectricalBC::Short, {50e6, 2e9}, 4);
    REQUIRE(!modes.empty());
    CHECK(energy_partition(modes[0], mesh, uniform_materials(mat)) == 1.0);
  }

  SUBCASE("uniform material: eta = 1 - r against element-wise oracle") {
    // Electrode regions carry the piezo's elastic constants, so eta must
    // equal the geometric strain-energy split 1 - r.
    const auto mesh =
        build_unit_cell({100e-9, 80e-9, 2e-6, 0.6e-6}, 10.0, 5);
    const auto mat = rotate_tensors(material_db().at("linbo3"),
                                    {-90, -90, -10});
    const auto mats = uniform_materials(mat);
    const auto sys = assemble(mesh, mats);
    const auto modes =
        solve_modes(sys, ElectricalBC::Short, {50e6, 2e9}, 6);
    REQUIRE(!modes.empty());
    const auto& mode = modes[0];

    // Oracle: per-element strain energy with an independent 3x3 Gauss rule.
    const double gpts[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
    const double gwts[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    double u_total = 0, u_elec = 0;
    for (size_t e = 0; e < mesh.elements.size(); ++e) {
      double x[4], z[4];
      for (int a = 0; a < 4; ++a) {
        x[a] = mesh.nodes[mesh.elements[e][a]][0];
        z[a] = mesh.nodes[mesh.elements[e][a]][1];
      }
      double u_el = 0;
      for (int gi = 0; gi < 3; ++gi)
        for (int gj = 0; gj < 3; ++gj) {
          double dndx[4], dndz[4];
          shape_derivs(x, z, gpts[gi], gpts[gj], dndx, dndz);
          // Rectangular elements: detJ = dx*dz/4.
          const double detj = (x[1] - x[0]) * (z[3] - z[0]) / 4.0;
          Eigen::Matrix<double, 6, 1> eps =
              Eigen::Matrix<double, 6, 1>::Zero();
          for (int a = 0; a < 4; ++a) {
            const int n = mesh.elements[e][a];
            eps[0] += dndx[a] * mode.u_nodes(n, 0);
            eps[2] += dndz[a] * mode.u_nodes(n, 2);
            eps[3] += dndz[a] * mode.u_nodes(n, 1);
            eps[4] += dndz[a] * mode.u_nodes(n, 0) +
                      dndx[a] * mode.u_nodes(n, 2);
            eps[5] += dndx[a] * mode.u_nodes(n, 1);
          }
          u_el += 0.5 * eps.dot(mat.c_E * eps) * detj * gwts[gi] * gwts[gj];
        }
      u_total += u_el;
      if (mesh.region[e] != Region::Piezo) u_elec += u_el;
    }
    const double r = u_elec / u_total;
    const double eta = energy_partition(mode, mesh, mats);
    CHECK(eta == doctest::Approx(1.0 - r).epsilon(1e-9));
    CHECK(eta >= 0.0);
    CHECK(eta <= 1.0);
  }
}

TEST_CASE("overtone pattern: midline sign changes at large vs small ratio") {
  const auto run_count = [&](double ratio, ModeType want, int min_order) {
    const UnitCellGeometry geom{100e-9, 80e-9, 2e-6, ratio * 2e-6};
    const double res = std::max(8.0, std::ceil(4.0 / (geom.w_m * 1e6)));
    const auto mesh = build_unit_cell(geom, res, 6);
    const auto sys = assemble(mesh, paper_materials({-90, -90, 30}));
    const auto modes =
        solve_modes(sys, ElectricalBC::Short, {100e6, 3e9}, 48);
    int best_order = 0;
    for (const auto& m : modes)
      if (m.label.type == want)
        best_order = std::max(best_order, m.label.order);
    return best_order >= min_order;
  };

  // LOBAW geometry supports an S0 overtone family (>= 5 sign changes);
  // the small-ratio cell keeps the fundamental pattern (<= 2 changes).
  CHECK(run_count(1.0, ModeType::S0, 3));

  const UnitCellGeometry geom{100e-9, 80e-9, 2e-6, 0.2e-6};
  const auto mesh = build_unit_cell(geom, 20.0, 6);
  const auto sys = assemble(mesh, paper_materials({-90, -90, 30}));
  const auto modes = solve_modes(sys, ElectricalBC::Short, {100e6, 1.8e9}, 24);
  bool found_fundamental_s0 = false;
  for (const auto& m : modes)
    if (m.label.type == ModeType::S0 && m.label.order == 1)
      found_fundamental_s0 = true;
  CHECK(found_fundamental_s0);
}
