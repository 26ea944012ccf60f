#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <map>
#include <string>
#include <vector>

#include "lbaw/materials.hpp"
#include "lbaw/mesh.hpp"

namespace lbaw {

/// Generalized-plane-strain piezoelectric system for one unit cell.
///
/// Fields depend on (x, z) only with d/dy = 0; nodal DOFs are
/// (u_x, u_y, u_z, phi). Periodic ties map every right-edge node onto its
/// left-edge partner; all potential DOFs inside/on an electrode collapse
/// onto one master DOF per net. Sign convention: K_phiphi = +int grad(N)^T
/// eps_S grad(N) (positive definite), so the short-circuit condensation is
/// K* = K_uu + K_uphi K_phiphi^-1 K_uphi^T.
struct SystemMatrices {
  Eigen::SparseMatrix<double> K_uu;      // n_mech x n_mech
  Eigen::SparseMatrix<double> K_uphi;    // n_mech x n_phi
  Eigen::SparseMatrix<double> K_phiphi;  // n_phi x n_phi
  Eigen::SparseMatrix<double> M;         // n_mech x n_mech

  int n_mech = 0;
  int n_phi = 0;
  std::vector<int> node_rnode;  // node -> retained mech node id
  std::vector<int> node_phi;    // node -> potential DOF id
  std::array<int, 2> net_master{-1, -1};

  Mesh mesh;
  std::map<Region, MaterialTensors> materials;

  int mech_dof(int node, int comp) const {
    return 3 * node_rnode[node] + comp;
  }
};

enum class ElectricalBC { Short, Float };
enum class EigMethod { Auto, Dense, ShiftInvert };

enum class ModeType { S0, SH0, Flexural, Other };

std::string mode_type_name(ModeType t);
ModeType mode_type_from_name(const std::string& name);

struct ModeLabel {
  ModeType type = ModeType::Other;
  int order = 1;  // 1 = fundamental, k = overtone-k

  bool operator==(const ModeLabel&) const = default;
  bool operator<(const ModeLabel& o) const {
    return type != o.type ? type < o.type : order < o.order;
  }
};

struct ModeSolution {
  double f = 0.0;                    // Hz
  Eigen::VectorXd u_reduced;         // mass-normalized, u^T M u = 1
  Eigen::MatrixX3d u_nodes;          // full nodal displacements
  Eigen::VectorXd phi_nodes;         // full nodal potential
  double p_x = 0, p_y = 0, p_z = 0;  // polarization fractions, sum = 1
  std::vector<double> midline_x;     // sample abscissae, z = t_film/2
  std::vector<double> midline_sigma_xx;
  std::vector<std::array<double, 3>> midline_u;  // displacement samples
  ModeLabel label;
};

/// Assembles stiffness, coupling, dielectric and mass matrices with
/// periodic and electrode ties applied. Bilinear quads, 2x2 Gauss.
/// Throws MissingMaterial or SingularElement.
SystemMatrices assemble(const Mesh& mesh,
                        const std::map<Region, MaterialTensors>& materials);

/// Solves the condensed generalized symmetric eigenproblem
/// K* u = omega^2 M u for the requested electrical condition.
/// Short: both net masters grounded; Float: net B grounded as potential
/// reference, net A condensed charge-free (the open-circuit condition; net
/// charge on B then vanishes by flux conservation). Without electrodes a
/// single potential DOF is pinned as gauge.
/// Returns modes inside the frequency window, rigid-body modes
/// (f < 1 MHz) removed, each mass-normalized and classified.
/// EigMethod::Auto uses a dense solver at small size and a shift-invert
/// Lanczos iteration on the coupled sparse pencil otherwise; both are
/// deterministic.
std::vector<ModeSolution> solve_modes(const SystemMatrices& sys,
                                      ElectricalBC bc,
                                      std::pair<double, double> f_window,
                                      int n_modes,
                                      EigMethod method = EigMethod::Auto);

/// Mode labeling from polarization fractions and midline stress:
/// SH0 if p_y > 0.5; S0 if p_x > 0.5 and p_x > p_z; Flexural if p_z > 0.5;
/// Other otherwise. Overtone order from sign changes along the midline,
/// where a crossing must traverse a band of 10% of the peak (the trench
/// edges imprint real sub-10% oscillations that are not lobes):
/// <=2 -> fundamental, 5..6 -> overtone-3, order = ceil(changes / 2).
/// S0/flexural orders count sigma_xx; shear-horizontal modes carry no
/// order signature in sigma_xx and count their u_y profile instead.
ModeLabel classify(const ModeSolution& mode);

struct ModePair {
  int short_index = -1;
  int float_index = -1;
  double fs = 0, fp = 0;
  double mac = 0;
};

struct PairingResult {
  std::vector<ModePair> pairs;  // sorted by fs
  std::vector<int> unpaired_short;
  std::vector<int> unpaired_float;
};

/// MAC = |a^T M b|^2 / ((a^T M a)(b^T M b)).
double modal_assurance(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       const Eigen::SparseMatrix<double>& m);

/// Pairs short-circuit modes with the float mode maximizing the MAC.
/// Pairs need MAC >= 0.8 and fp >= fs (to roundoff); everything else is
/// reported unpaired.
PairingResult pair_modes(const std::vector<ModeSolution>& short_modes,
                         const std::vector<ModeSolution>& float_modes,
                         const SystemMatrices& sys);

/// Energy confinement ratio eta = U_piezo / (U_piezo + U_electrode) with
/// U = 1/2 int eps : c : eps per region (elastic strain energy of the mode
/// shape, same quadrature as assembly).
double energy_partition(const ModeSolution& mode, const Mesh& mesh,
                        const std::map<Region, MaterialTensors>& materials);

/// Displacement field resampled on a uniform (nxs x nzs) grid in normalized
/// cell coordinates; used for MAC-style tracking across different meshes.
Eigen::VectorXd sample_displacement(const Mesh& mesh, const ModeSolution& mode,
                                    int nxs, int nzs);

/// Mode-shape dump (see README for columns).
std::string mode_to_csv(const Mesh& mesh, const ModeSolution& mode);

}  // namespace lbaw
