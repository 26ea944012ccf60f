#include "lbaw/fem.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>

#include "lbaw/errors.hpp"

namespace lbaw {

namespace {

constexpr double kRigidBodyCutoffHz = 1e6;
constexpr int kDenseThreshold = 1200;  // mech DOFs; above this use Lanczos

struct ShapeEval {
  double detJ;
  double N[4];
  double dNdx[4];
  double dNdz[4];
};

ShapeEval eval_shape(const double x[4], const double z[4], double xi,
                     double eta) {
  const double xin[4] = {-1, 1, 1, -1};
  const double etan[4] = {-1, -1, 1, 1};
  ShapeEval s;
  double dxdxi = 0, dxdeta = 0, dzdxi = 0, dzdeta = 0;
  double dNdxi[4], dNdeta[4];
  for (int a = 0; a < 4; ++a) {
    s.N[a] = 0.25 * (1 + xin[a] * xi) * (1 + etan[a] * eta);
    dNdxi[a] = 0.25 * xin[a] * (1 + etan[a] * eta);
    dNdeta[a] = 0.25 * etan[a] * (1 + xin[a] * xi);
    dxdxi += dNdxi[a] * x[a];
    dxdeta += dNdeta[a] * x[a];
    dzdxi += dNdxi[a] * z[a];
    dzdeta += dNdeta[a] * z[a];
  }
  s.detJ = dxdxi * dzdeta - dxdeta * dzdxi;
  if (s.detJ > 0) {
    const double inv = 1.0 / s.detJ;
    for (int a = 0; a < 4; ++a) {
      s.dNdx[a] = inv * (dzdeta * dNdxi[a] - dzdxi * dNdeta[a]);
      s.dNdz[a] = inv * (-dxdeta * dNdxi[a] + dxdxi * dNdeta[a]);
    }
  }
  return s;
}

// Strain-displacement matrix, Voigt order (xx, yy, zz, yz, xz, xy), with
// d/dy = 0: eps_yy = 0, gamma_xy = du_y/dx, gamma_yz = du_y/dz.
Eigen::Matrix<double, 6, 12> strain_matrix(const ShapeEval& s) {
  Eigen::Matrix<double, 6, 12> b = Eigen::Matrix<double, 6, 12>::Zero();
  for (int a = 0; a < 4; ++a) {
    b(0, 3 * a + 0) = s.dNdx[a];
    b(2, 3 * a + 2) = s.dNdz[a];
    b(3, 3 * a + 1) = s.dNdz[a];
    b(4, 3 * a + 0) = s.dNdz[a];
    b(4, 3 * a + 2) = s.dNdx[a];
    b(5, 3 * a + 1) = s.dNdx[a];
  }
  return b;
}

// Potential gradient matrix (E = -G phi); E_y = 0.
Eigen::Matrix<double, 3, 4> gradient_matrix(const ShapeEval& s) {
  Eigen::Matrix<double, 3, 4> g = Eigen::Matrix<double, 3, 4>::Zero();
  for (int a = 0; a < 4; ++a) {
    g(0, a) = s.dNdx[a];
    g(2, a) = s.dNdz[a];
  }
  return g;
}

const double kGauss[2] = {-1.0 / std::numbers::sqrt3, 1.0 / std::numbers::sqrt3};

struct SparseBuilder {
  std::vector<Eigen::Triplet<double>> trips;
  void add(int i, int j, double v) {
    if (v != 0.0) trips.emplace_back(i, j, v);
  }
};

// Column subset of a sparse matrix.
Eigen::SparseMatrix<double> select_columns(
    const Eigen::SparseMatrix<double>& a, const std::vector<int>& col_map,
    int n_cols) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(a.nonZeros());
  for (int k = 0; k < a.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(a, k); it; ++it)
      if (col_map[it.col()] >= 0)
        trips.emplace_back(it.row(), col_map[it.col()], it.value());
  Eigen::SparseMatrix<double> out(a.rows(), n_cols);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

Eigen::SparseMatrix<double> select_principal(
    const Eigen::SparseMatrix<double>& a, const std::vector<int>& map,
    int n) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(a.nonZeros());
  for (int k = 0; k < a.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(a, k); it; ++it)
      if (map[it.row()] >= 0 && map[it.col()] >= 0)
        trips.emplace_back(map[it.row()], map[it.col()], it.value());
  Eigen::SparseMatrix<double> out(n, n);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

}  // namespace

std::string mode_type_name(ModeType t) {
  switch (t) {
    case ModeType::S0: return "S0";
    case ModeType::SH0: return "SH0";
    case ModeType::Flexural: return "Flexural";
    case ModeType::Other: return "Other";
  }
  return "?";
}

ModeType mode_type_from_name(const std::string& name) {
  if (name == "S0") return ModeType::S0;
  if (name == "SH0") return ModeType::SH0;
  if (name == "Flexural") return ModeType::Flexural;
  if (name == "Other") return ModeType::Other;
  throw DomainError("unknown mode type '" + name + "'");
}

SystemMatrices assemble(const Mesh& mesh,
                        const std::map<Region, MaterialTensors>& materials) {
  SystemMatrices sys;
  sys.mesh = mesh;
  sys.materials = materials;

  const int n_nodes = static_cast<int>(mesh.nodes.size());

  // Right-edge nodes alias their left-edge partners.
  std::vector<int> periodic_partner(n_nodes, -1);
  for (size_t i = 0; i < mesh.right_edge.size(); ++i)
    periodic_partner[mesh.right_edge[i]] = mesh.left_edge[i];

  std::vector<int> net_of_node(n_nodes, -1);
  for (int net = 0; net < 2; ++net)
    for (const int n : mesh.electrode_nodes[net]) net_of_node[n] = net;

  // Vacuum elements carry the potential only; nodes that touch no solid
  // element get no mechanical DOFs.
  std::vector<bool> solid_node(n_nodes, false);
  for (size_t el = 0; el < mesh.elements.size(); ++el)
    if (mesh.region[el] != Region::Air)
      for (const int n : mesh.elements[el]) solid_node[n] = true;

  // Retained mechanical nodes: solid nodes off the right edge.
  sys.node_rnode.assign(n_nodes, -1);
  int rn = 0;
  for (int n = 0; n < n_nodes; ++n)
    if (periodic_partner[n] < 0 && solid_node[n]) sys.node_rnode[n] = rn++;
  for (int n = 0; n < n_nodes; ++n)
    if (periodic_partner[n] >= 0 && solid_node[n])
      sys.node_rnode[n] = sys.node_rnode[periodic_partner[n]];
  sys.n_mech = 3 * rn;

  // Potential DOFs: one per retained non-electrode node plus one master per
  // nonempty net.
  sys.node_phi.assign(n_nodes, -1);
  int np = 0;
  for (int n = 0; n < n_nodes; ++n)
    if (periodic_partner[n] < 0 && net_of_node[n] < 0) sys.node_phi[n] = np++;
  for (int net = 0; net < 2; ++net)
    if (!mesh.electrode_nodes[net].empty()) sys.net_master[net] = np++;
  for (int n = 0; n < n_nodes; ++n) {
    if (net_of_node[n] >= 0)
      sys.node_phi[n] = sys.net_master[net_of_node[n]];
    else if (periodic_partner[n] >= 0)
      sys.node_phi[n] = sys.node_phi[periodic_partner[n]];
  }
  sys.n_phi = np;

  SparseBuilder kuu, kup, kpp, mm;
  Eigen::Matrix<double, 6, 6> c;
  Eigen::Matrix<double, 3, 6> e;
  Eigen::Matrix3d eps;

  for (size_t el = 0; el < mesh.elements.size(); ++el) {
    const auto it = materials.find(mesh.region[el]);
    if (it == materials.end())
      throw MissingMaterial("no material assigned to region " +
                            region_name(mesh.region[el]));
    c = it->second.c_E;
    e = it->second.e;
    eps = it->second.eps_S;
    const double rho = it->second.rho;

    double x[4], z[4];
    for (int a = 0; a < 4; ++a) {
      x[a] = mesh.nodes[mesh.elements[el][a]][0];
      z[a] = mesh.nodes[mesh.elements[el][a]][1];
    }

    Eigen::Matrix<double, 12, 12> ke = Eigen::Matrix<double, 12, 12>::Zero();
    Eigen::Matrix<double, 12, 4> kue = Eigen::Matrix<double, 12, 4>::Zero();
    Eigen::Matrix<double, 4, 4> kpe = Eigen::Matrix<double, 4, 4>::Zero();
    Eigen::Matrix<double, 4, 4> me = Eigen::Matrix<double, 4, 4>::Zero();

    for (const double xi : kGauss) {
      for (const double eta : kGauss) {
        const ShapeEval s = eval_shape(x, z, xi, eta);
        if (s.detJ <= 0.0)
          throw SingularElement("non-positive Jacobian in element " +
                                std::to_string(el));
        const auto b = strain_matrix(s);
        const auto g = gradient_matrix(s);
        ke.noalias() += b.transpose() * c * b * s.detJ;
        kue.noalias() += b.transpose() * e.transpose() * g * s.detJ;
        kpe.noalias() += g.transpose() * eps * g * s.detJ;
        for (int a = 0; a < 4; ++a)
          for (int bb = 0; bb < 4; ++bb)
            me(a, bb) += rho * s.N[a] * s.N[bb] * s.detJ;
      }
    }

    int mdof[12], pdof[4];
    for (int a = 0; a < 4; ++a) {
      const int node = mesh.elements[el][a];
      for (int comp = 0; comp < 3; ++comp)
        mdof[3 * a + comp] = sys.mech_dof(node, comp);
      pdof[a] = sys.node_phi[node];
    }

    for (int i = 0; i < 12; ++i) {
      for (int j = 0; j < 12; ++j) kuu.add(mdof[i], mdof[j], ke(i, j));
      for (int j = 0; j < 4; ++j) kup.add(mdof[i], pdof[j], kue(i, j));
    }
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) kpp.add(pdof[i], pdof[j], kpe(i, j));
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int comp = 0; comp < 3; ++comp)
          mm.add(mdof[3 * i + comp], mdof[3 * j + comp], me(i, j));
  }

  sys.K_uu.resize(sys.n_mech, sys.n_mech);
  sys.K_uu.setFromTriplets(kuu.trips.begin(), kuu.trips.end());
  sys.K_uphi.resize(sys.n_mech, sys.n_phi);
  sys.K_uphi.setFromTriplets(kup.trips.begin(), kup.trips.end());
  sys.K_phiphi.resize(sys.n_phi, sys.n_phi);
  sys.K_phiphi.setFromTriplets(kpp.trips.begin(), kpp.trips.end());
  sys.M.resize(sys.n_mech, sys.n_mech);
  sys.M.setFromTriplets(mm.trips.begin(), mm.trips.end());
  return sys;
}

namespace {

struct CondensedProblem {
  std::vector<int> phi_free;           // free phi dof -> original id
  std::vector<int> phi_map;            // original id -> free index or -1
  Eigen::SparseMatrix<double> c_free;  // K_uphi columns of the free set
  Eigen::SparseMatrix<double> kpp_free;
  std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> kpp_ldlt;
  bool has_coupling = false;
};

CondensedProblem build_condensed(const SystemMatrices& sys,
                                 ElectricalBC bc) {
  CondensedProblem p;
  std::vector<bool> fixed(sys.n_phi, false);
  const bool have_nets = sys.net_master[0] >= 0 || sys.net_master[1] >= 0;
  if (have_nets) {
    if (sys.net_master[1] >= 0) fixed[sys.net_master[1]] = true;
    if (bc == ElectricalBC::Short && sys.net_master[0] >= 0)
      fixed[sys.net_master[0]] = true;
    // A single-net mesh keeps its master grounded in both conditions.
    if (sys.net_master[1] < 0 && sys.net_master[0] >= 0 &&
        bc == ElectricalBC::Float)
      fixed[sys.net_master[0]] = true;
  } else if (sys.n_phi > 0) {
    fixed[0] = true;  // gauge for the electrode-free cell
  }

  p.phi_map.assign(sys.n_phi, -1);
  for (int i = 0; i < sys.n_phi; ++i)
    if (!fixed[i]) {
      p.phi_map[i] = static_cast<int>(p.phi_free.size());
      p.phi_free.push_back(i);
    }

  const int nf = static_cast<int>(p.phi_free.size());
  p.c_free = select_columns(sys.K_uphi, p.phi_map, nf);
  p.kpp_free = select_principal(sys.K_phiphi, p.phi_map, nf);
  p.has_coupling = p.c_free.nonZeros() > 0;
  if (nf > 0) {
    p.kpp_ldlt =
        std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(
            p.kpp_free);
    if (p.kpp_ldlt->info() != Eigen::Success)
      throw EigSolverFailure("dielectric block factorization failed");
  }
  return p;
}

struct RawMode {
  double lambda;
  Eigen::VectorXd u;
};

std::vector<RawMode> solve_dense(const SystemMatrices& sys,
                                 const CondensedProblem& p) {
  Eigen::MatrixXd kstar = Eigen::MatrixXd(sys.K_uu);
  if (p.has_coupling) {
    const Eigen::MatrixXd rhs = Eigen::MatrixXd(p.c_free).transpose();
    const Eigen::MatrixXd x = p.kpp_ldlt->solve(rhs);
    kstar.noalias() += Eigen::MatrixXd(p.c_free) * x;
  }
  kstar = 0.5 * (kstar + kstar.transpose()).eval();

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(
      kstar, Eigen::MatrixXd(sys.M));
  if (ges.info() != Eigen::Success)
    throw EigSolverFailure("dense generalized eigensolver failed");

  std::vector<RawMode> out;
  out.reserve(sys.n_mech);
  for (int i = 0; i < sys.n_mech; ++i)
    out.push_back({ges.eigenvalues()[i], ges.eigenvectors().col(i)});
  return out;
}

// Shift-invert Lanczos with M inner product and full reorthogonalization on
// the coupled sparse pencil. Deterministic: fixed start vector.
std::vector<RawMode> solve_lanczos(const SystemMatrices& sys,
                                   const CondensedProblem& p, int n_wanted,
                                   double f_max) {
  const int n = sys.n_mech;
  const int nf = static_cast<int>(p.phi_free.size());
  const double sigma = -std::pow(2.0 * M_PI * std::max(1e8, 0.05 * f_max), 2);

  // Balance the electric block against the mechanical one before the LU.
  double kuu_scale = 0.0, kpp_scale = 0.0;
  for (int k = 0; k < sys.K_uu.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(sys.K_uu, k); it; ++it)
      kuu_scale = std::max(kuu_scale, std::abs(it.value()));
  for (int k = 0; k < p.kpp_free.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(p.kpp_free, k); it;
         ++it)
      kpp_scale = std::max(kpp_scale, std::abs(it.value()));
  const double s = p.has_coupling && kpp_scale > 0 && kuu_scale > 0
                       ? std::sqrt(kuu_scale / kpp_scale)
                       : 1.0;

  const int n_tot = p.has_coupling ? n + nf : n;
  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < sys.K_uu.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(sys.K_uu, k); it; ++it)
      trips.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < sys.M.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(sys.M, k); it; ++it)
      trips.emplace_back(it.row(), it.col(), -sigma * it.value());
  if (p.has_coupling) {
    for (int k = 0; k < p.c_free.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(p.c_free, k); it;
           ++it) {
        trips.emplace_back(it.row(), n + it.col(), s * it.value());
        trips.emplace_back(n + it.col(), it.row(), s * it.value());
      }
    for (int k = 0; k < p.kpp_free.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(p.kpp_free, k); it;
           ++it)
        trips.emplace_back(n + it.row(), n + it.col(),
                           -s * s * it.value());
  }
  Eigen::SparseMatrix<double> coupled(n_tot, n_tot);
  coupled.setFromTriplets(trips.begin(), trips.end());

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(coupled);
  if (lu.info() != Eigen::Success)
    throw EigSolverFailure("factorization of shifted pencil failed");

  const auto op = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_tot);
    rhs.head(n) = sys.M * x;
    return lu.solve(rhs).head(n);
  };

  // Deterministic generic start vector.
  Eigen::VectorXd v0(n);
  std::mt19937 rng(0x5eed);
  for (int i = 0; i < n; ++i)
    v0[i] = static_cast<double>(rng()) / 4294967296.0 - 0.5;

  int m_max = std::min(n, std::max(3 * n_wanted + 60, 120));
  for (int attempt = 0; attempt < 3; ++attempt) {
    Eigen::MatrixXd v(n, m_max + 1), mv(n, m_max + 1);
    Eigen::VectorXd alpha(m_max), beta(m_max);

    Eigen::VectorXd w = v0;
    Eigen::VectorXd mw = sys.M * w;
    double nrm = std::sqrt(w.dot(mw));
    v.col(0) = w / nrm;
    mv.col(0) = mw / nrm;

    int m = m_max;
    double op_scale = 0.0;  // running magnitude of the projected operator
    for (int j = 0; j < m_max; ++j) {
      w = op(v.col(j));
      if (j > 0) w.noalias() -= beta[j - 1] * v.col(j - 1);
      alpha[j] = mv.col(j).dot(w);
      w.noalias() -= alpha[j] * v.col(j);
      // Full reorthogonalization, two passes.
      for (int pass = 0; pass < 2; ++pass) {
        const Eigen::VectorXd h =
            mv.leftCols(j + 1).transpose() * w;
        w.noalias() -= v.leftCols(j + 1) * h;
      }
      mw = sys.M * w;
      beta[j] = std::sqrt(std::max(0.0, w.dot(mw)));
      op_scale = std::max({op_scale, std::abs(alpha[j]), beta[j]});
      if (beta[j] <= 1e-13 * op_scale) {
        m = j + 1;  // invariant subspace found
        break;
      }
      v.col(j + 1) = w / beta[j];
      mv.col(j + 1) = mw / beta[j];
    }

    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
    for (int j = 0; j < m; ++j) {
      t(j, j) = alpha[j];
      if (j + 1 < m) t(j, j + 1) = t(j + 1, j) = beta[j];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tes(t);
    if (tes.info() != Eigen::Success)
      throw EigSolverFailure("tridiagonal eigensolver failed");

    // Ritz pairs, largest theta = smallest lambda first.
    std::vector<RawMode> out;
    const double beta_last = m < m_max ? 0.0 : beta[m - 1];
    int n_converged_in_range = 0;
    bool coverage = m < m_max;  // exact invariant subspace
    const double lambda_max = (2.0 * M_PI * f_max) * (2.0 * M_PI * f_max);
    for (int i = m - 1; i >= 0; --i) {
      const double theta = tes.eigenvalues()[i];
      if (theta <= 0.0) continue;  // spurious, stems from the shifted block
      const double resid = std::abs(beta_last * tes.eigenvectors()(m - 1, i));
      const double lambda = sigma + 1.0 / theta;
      const bool converged = resid <= 1e-9 * theta;
      if (!converged) {
        if (lambda > lambda_max) coverage = true;
        break;  // deeper Ritz values are even less converged
      }
      out.push_back({lambda, v.leftCols(m) * tes.eigenvectors().col(i)});
      if (lambda <= lambda_max) ++n_converged_in_range;
      if (lambda > lambda_max) {
        coverage = true;
        break;
      }
    }
    if (coverage || n_converged_in_range >= n_wanted || m_max >= n) {
      std::sort(out.begin(), out.end(),
                [](const RawMode& a, const RawMode& b) {
                  return a.lambda < b.lambda;
                });
      return out;
    }
    m_max = std::min(n, 2 * m_max);
  }
  throw EigSolverFailure("Lanczos iteration did not converge");
}

double element_midline_sigma_xx(const SystemMatrices& sys,
                                const ModeSolution& mode, int el,
                                double eta_loc) {
  const auto& mesh = sys.mesh;
  const auto& mat = sys.materials.at(mesh.region[el]);
  double x[4], z[4];
  Eigen::Matrix<double, 12, 1> ue;
  Eigen::Matrix<double, 4, 1> pe;
  for (int a = 0; a < 4; ++a) {
    const int node = mesh.elements[el][a];
    x[a] = mesh.nodes[node][0];
    z[a] = mesh.nodes[node][1];
    for (int c = 0; c < 3; ++c) ue[3 * a + c] = mode.u_nodes(node, c);
    pe[a] = mode.phi_nodes[node];
  }
  const ShapeEval s = eval_shape(x, z, 0.0, eta_loc);
  const auto b = strain_matrix(s);
  const auto g = gradient_matrix(s);
  const Eigen::Matrix<double, 6, 1> strain = b * ue;
  const Eigen::Vector3d grad_phi = g * pe;
  // T = c eps - e^T E with E = -grad(phi).
  return mat.c_E.row(0).dot(strain) + mat.e.col(0).dot(grad_phi);
}

void postprocess(const SystemMatrices& sys, const CondensedProblem& p,
                 ModeSolution& mode) {
  const auto& mesh = sys.mesh;
  const int n_nodes = static_cast<int>(mesh.nodes.size());

  // Mass normalization and deterministic sign.
  Eigen::VectorXd mu = sys.M * mode.u_reduced;
  mode.u_reduced /= std::sqrt(mode.u_reduced.dot(mu));
  int imax = 0;
  mode.u_reduced.cwiseAbs().maxCoeff(&imax);
  if (mode.u_reduced[imax] < 0) mode.u_reduced = -mode.u_reduced;
  mu = sys.M * mode.u_reduced;

  for (int c = 0; c < 3; ++c) {
    double pc = 0.0;
    for (int i = c; i < sys.n_mech; i += 3)
      pc += mode.u_reduced[i] * mu[i];
    (c == 0 ? mode.p_x : c == 1 ? mode.p_y : mode.p_z) = pc;
  }

  // Potential recovery on the free set.
  Eigen::VectorXd phi_free;
  if (!p.phi_free.empty() && p.has_coupling)
    phi_free = p.kpp_ldlt->solve(p.c_free.transpose() * mode.u_reduced);

  mode.u_nodes = Eigen::MatrixX3d::Zero(n_nodes, 3);
  mode.phi_nodes = Eigen::VectorXd::Zero(n_nodes);
  for (int node = 0; node < n_nodes; ++node) {
    if (sys.node_rnode[node] >= 0)
      for (int c = 0; c < 3; ++c)
        mode.u_nodes(node, c) = mode.u_reduced[sys.mech_dof(node, c)];
    const int pd = sys.node_phi[node];
    if (pd >= 0 && p.phi_map[pd] >= 0 && phi_free.size() > 0)
      mode.phi_nodes[node] = phi_free[p.phi_map[pd]];
  }

  // Midline stress samples at half the film thickness.
  const double z_mid = mesh.z_solid_max > mesh.z_solid_min
                           ? 0.5 * (mesh.z_solid_min + mesh.z_solid_max)
                           : 0.5 * mesh.zs.back();
  int row = 0;
  while (row + 1 < static_cast<int>(mesh.zs.size()) - 1 &&
         mesh.zs[row + 1] <= z_mid)
    ++row;
  const double eta_loc =
      2.0 * (z_mid - mesh.zs[row]) / (mesh.zs[row + 1] - mesh.zs[row]) - 1.0;
  mode.midline_x.resize(mesh.nx);
  mode.midline_sigma_xx.resize(mesh.nx);
  mode.midline_u.resize(mesh.nx);
  for (int ix = 0; ix < mesh.nx; ++ix) {
    const int el = ix * mesh.nz + row;
    mode.midline_x[ix] = 0.5 * (mesh.xs[ix] + mesh.xs[ix + 1]);
    mode.midline_sigma_xx[ix] =
        element_midline_sigma_xx(sys, mode, el, eta_loc);
    const double tz = 0.5 * (1.0 + eta_loc);
    for (int c = 0; c < 3; ++c) {
      const auto& e = mesh.elements[el];
      const double lo =
          0.5 * (mode.u_nodes(e[0], c) + mode.u_nodes(e[1], c));
      const double hi =
          0.5 * (mode.u_nodes(e[3], c) + mode.u_nodes(e[2], c));
      mode.midline_u[ix][c] = (1.0 - tz) * lo + tz * hi;
    }
  }

  mode.label = classify(mode);
}

}  // namespace

std::vector<ModeSolution> solve_modes(const SystemMatrices& sys,
                                      ElectricalBC bc,
                                      std::pair<double, double> f_window,
                                      int n_modes, EigMethod method) {
  if (sys.n_mech <= 0) throw EigSolverFailure("empty system");
  const CondensedProblem p = build_condensed(sys, bc);

  const bool dense = method == EigMethod::Dense ||
                     (method == EigMethod::Auto &&
                      sys.n_mech <= kDenseThreshold);

  std::vector<RawMode> raw;
  if (dense)
    raw = solve_dense(sys, p);
  else
    raw = solve_lanczos(sys, p, n_modes + 8, f_window.second);

  double lambda_max_seen = 0.0;
  for (const auto& r : raw) lambda_max_seen = std::max(lambda_max_seen, r.lambda);
  for (const auto& r : raw)
    if (r.lambda < -1e-6 * lambda_max_seen)
      throw EigSolverFailure("negative eigenvalue in symmetric pencil");

  std::vector<ModeSolution> modes;
  for (const auto& r : raw) {
    const double f = std::sqrt(std::max(0.0, r.lambda)) / (2.0 * M_PI);
    if (f < kRigidBodyCutoffHz) continue;
    if (f < f_window.first || f > f_window.second) continue;
    if (static_cast<int>(modes.size()) >= n_modes) break;
    ModeSolution mode;
    mode.f = f;
    mode.u_reduced = r.u;
    postprocess(sys, p, mode);
    modes.push_back(std::move(mode));
  }
  return modes;
}

ModeLabel classify(const ModeSolution& mode) {
  ModeLabel label;
  if (mode.p_y > 0.5)
    label.type = ModeType::SH0;
  else if (mode.p_x > 0.5 && mode.p_x > mode.p_z)
    label.type = ModeType::S0;
  else if (mode.p_z > 0.5)
    label.type = ModeType::Flexural;
  else
    label.type = ModeType::Other;

  // Sign changes along the full midline. Crossings must traverse a band of
  // 10% of the peak: the trench edges imprint real but small oscillations
  // that would otherwise masquerade as extra lobes; a bare noise floor
  // cannot separate them from genuine overtone lobes. Shear-horizontal
  // modes leave no order signature in sigma_xx, so they count u_y lobes.
  std::vector<double> profile;
  if (label.type == ModeType::SH0 && !mode.midline_u.empty()) {
    profile.reserve(mode.midline_u.size());
    for (const auto& u : mode.midline_u) profile.push_back(u[1]);
  } else {
    profile = mode.midline_sigma_xx;
  }
  double peak = 0.0;
  for (const double s : profile) peak = std::max(peak, std::abs(s));
  const double floor = 0.1 * peak;
  int changes = 0;
  int state = 0;
  for (const double s : profile) {
    if (std::abs(s) < floor) continue;
    const int sgn = s > 0 ? 1 : -1;
    if (state != 0 && sgn != state) ++changes;
    state = sgn;
  }
  label.order = std::max(1, (changes + 1) / 2);
  return label;
}

double modal_assurance(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       const Eigen::SparseMatrix<double>& m) {
  const Eigen::VectorXd mb = m * b;
  const double num = a.dot(mb);
  const double den = a.dot(m * a) * b.dot(mb);
  return den > 0 ? num * num / den : 0.0;
}

PairingResult pair_modes(const std::vector<ModeSolution>& short_modes,
                         const std::vector<ModeSolution>& float_modes,
                         const SystemMatrices& sys) {
  const int ns = static_cast<int>(short_modes.size());
  const int nf = static_cast<int>(float_modes.size());

  std::vector<Eigen::VectorXd> m_float(nf);
  for (int j = 0; j < nf; ++j) m_float[j] = sys.M * float_modes[j].u_reduced;

  struct Cand {
    double mac;
    int i, j;
  };
  std::vector<Cand> cands;
  cands.reserve(ns * nf);
  for (int i = 0; i < ns; ++i)
    for (int j = 0; j < nf; ++j) {
      const double dot = short_modes[i].u_reduced.dot(m_float[j]);
      cands.push_back({dot * dot, i, j});
    }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return a.mac != b.mac ? a.mac > b.mac
                          : (a.i != b.i ? a.i < b.i : a.j < b.j);
  });

  PairingResult res;
  std::vector<bool> used_s(ns, false), used_f(nf, false);
  for (const auto& c : cands) {
    if (c.mac < 0.8) break;
    if (used_s[c.i] || used_f[c.j]) continue;
    const double fs = short_modes[c.i].f;
    const double fp = float_modes[c.j].f;
    if (fp < fs * (1.0 - 1e-9)) continue;  // stiffening must not be negative
    used_s[c.i] = used_f[c.j] = true;
    res.pairs.push_back({c.i, c.j, fs, fp, c.mac});
  }
  for (int i = 0; i < ns; ++i)
    if (!used_s[i]) res.unpaired_short.push_back(i);
  for (int j = 0; j < nf; ++j)
    if (!used_f[j]) res.unpaired_float.push_back(j);
  std::sort(res.pairs.begin(), res.pairs.end(),
            [](const ModePair& a, const ModePair& b) { return a.fs < b.fs; });
  return res;
}

double energy_partition(const ModeSolution& mode, const Mesh& mesh,
                        const std::map<Region, MaterialTensors>& materials) {
  double u_piezo = 0.0, u_electrode = 0.0;
  for (size_t el = 0; el < mesh.elements.size(); ++el) {
    if (mesh.region[el] == Region::Air) continue;
    const auto& mat = materials.at(mesh.region[el]);
    double x[4], z[4];
    Eigen::Matrix<double, 12, 1> ue;
    for (int a = 0; a < 4; ++a) {
      const int node = mesh.elements[el][a];
      x[a] = mesh.nodes[node][0];
      z[a] = mesh.nodes[node][1];
      for (int c = 0; c < 3; ++c) ue[3 * a + c] = mode.u_nodes(node, c);
    }
    double u_el = 0.0;
    for (const double xi : kGauss)
      for (const double eta : kGauss) {
        const ShapeEval s = eval_shape(x, z, xi, eta);
        const Eigen::Matrix<double, 6, 1> strain = strain_matrix(s) * ue;
        u_el += 0.5 * strain.dot(mat.c_E * strain) * s.detJ;
      }
    (mesh.region[el] == Region::Piezo ? u_piezo : u_electrode) += u_el;
  }
  const double total = u_piezo + u_electrode;
  return total > 0 ? u_piezo / total : 1.0;
}

Eigen::VectorXd sample_displacement(const Mesh& mesh, const ModeSolution& mode,
                                    int nxs, int nzs) {
  Eigen::VectorXd out(3 * nxs * nzs);
  const double period = mesh.xs.back();
  const double z_lo = mesh.z_solid_max > mesh.z_solid_min ? mesh.z_solid_min
                                                          : mesh.zs.front();
  const double z_hi = mesh.z_solid_max > mesh.z_solid_min ? mesh.z_solid_max
                                                          : mesh.zs.back();
  for (int i = 0; i < nxs; ++i) {
    const double x = (i + 0.5) / nxs * period;
    const auto ix_it =
        std::upper_bound(mesh.xs.begin(), mesh.xs.end(), x);
    const int ix = std::clamp(
        static_cast<int>(ix_it - mesh.xs.begin()) - 1, 0, mesh.nx - 1);
    const double tx =
        (x - mesh.xs[ix]) / (mesh.xs[ix + 1] - mesh.xs[ix]);
    for (int j = 0; j < nzs; ++j) {
      const double z = z_lo + (j + 0.5) / nzs * (z_hi - z_lo);
      const auto iz_it =
          std::upper_bound(mesh.zs.begin(), mesh.zs.end(), z);
      const int iz = std::clamp(
          static_cast<int>(iz_it - mesh.zs.begin()) - 1, 0, mesh.nz - 1);
      const double tz =
          (z - mesh.zs[iz]) / (mesh.zs[iz + 1] - mesh.zs[iz]);
      for (int c = 0; c < 3; ++c) {
        const double v00 = mode.u_nodes(mesh.node_id(ix, iz), c);
        const double v10 = mode.u_nodes(mesh.node_id(ix + 1, iz), c);
        const double v01 = mode.u_nodes(mesh.node_id(ix, iz + 1), c);
        const double v11 = mode.u_nodes(mesh.node_id(ix + 1, iz + 1), c);
        out[3 * (i * nzs + j) + c] =
            (1 - tx) * ((1 - tz) * v00 + tz * v01) +
            tx * ((1 - tz) * v10 + tz * v11);
      }
    }
  }
  return out;
}

std::string mode_to_csv(const Mesh& mesh, const ModeSolution& mode) {
  std::ostringstream out;
  char buf[256];
  out << "x,z,u_x,u_y,u_z,phi,sigma_xx_midline,midline\n";
  // z row nearest the midline carries the stress samples.
  const double z_mid = mesh.z_solid_max > mesh.z_solid_min
                           ? 0.5 * (mesh.z_solid_min + mesh.z_solid_max)
                           : 0.5 * mesh.zs.back();
  int nearest = 0;
  for (size_t i = 1; i < mesh.zs.size(); ++i)
    if (std::abs(mesh.zs[i] - z_mid) < std::abs(mesh.zs[nearest] - z_mid))
      nearest = static_cast<int>(i);
  for (size_t n = 0; n < mesh.nodes.size(); ++n) {
    const int iz = static_cast<int>(n) % (mesh.nz + 1);
    const int ix = static_cast<int>(n) / (mesh.nz + 1);
    const bool midline = iz == nearest;
    double sigma = 0.0;
    if (midline && !mode.midline_sigma_xx.empty())
      sigma = mode.midline_sigma_xx[std::min(ix, mesh.nx - 1)];
    std::snprintf(buf, sizeof(buf),
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                  mesh.nodes[n][0], mesh.nodes[n][1], mode.u_nodes(n, 0),
                  mode.u_nodes(n, 1), mode.u_nodes(n, 2), mode.phi_nodes[n],
                  sigma, midline ? 1 : 0);
    out << buf;
  }
  return out.str();
}

}  // namespace lbaw
