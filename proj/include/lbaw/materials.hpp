#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace lbaw {

inline constexpr double kVacuumPermittivity = 8.8541878128e-12;  // F/m

/// Z-X-Z Euler angles in degrees, normalized to (-180, 180] on construction.
/// The angles describe the passive rotation of the crystal axes into the
/// device frame (device x = lateral propagation, z = plate normal).
struct EulerAngles {
  double phi_deg;
  double theta_deg;
  double psi_deg;

  EulerAngles(double phi, double theta, double psi);

  /// Z-X-Z inverse: (-psi, -theta, -phi).
  EulerAngles inverse() const { return {-psi_deg, -theta_deg, -phi_deg}; }
};

/// Full anisotropic constant set for one material, SI units.
/// c_E is the 6x6 Voigt stiffness at constant E field, e the 3x6
/// piezoelectric stress matrix, eps_S the clamped permittivity (absolute,
/// F/m).
struct MaterialTensors {
  std::string name;
  Eigen::Matrix<double, 6, 6> c_E = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 3, 6> e = Eigen::Matrix<double, 3, 6>::Zero();
  Eigen::Matrix3d eps_S = Eigen::Matrix3d::Zero();
  double rho = 0.0;
  std::string source;
};

/// Proper rotation for the Z-X-Z angles: R = Rz(phi) * Rx(theta) * Rz(psi).
/// R maps the crystal basis vectors onto the device basis vectors, e.g.
/// (90, 0, 0) sends x -> y and y -> -x. Components of vectors and tensors
/// transform into the device frame with Q = R^T.
Eigen::Matrix3d rotation_matrix(const EulerAngles& angles);

/// 6x6 Bond stress-transformation matrix for the component transform a,
/// such that stiffness rotates as c' = M c M^T.
Eigen::Matrix<double, 6, 6> bond_stress_matrix(const Eigen::Matrix3d& a);

/// Rotates stiffness (rank 4), piezoelectric coupling (rank 3) and
/// permittivity (rank 2) into the device frame. Density is unchanged.
/// Throws InvalidMaterial if the input fails validate().
MaterialTensors rotate_tensors(const MaterialTensors& mat,
                               const EulerAngles& angles);

/// Returns the list of invariant violations (empty when the material is
/// valid): c_E and eps_S must be symmetric positive definite to 1e-9
/// relative symmetry tolerance, rho > 0.
std::vector<std::string> validate(const MaterialTensors& mat);

/// Parses the line-oriented material file format (see README). Keys:
/// name, rho, cE (36 values), e (18), epsS_rel (9), source. Numeric blocks
/// may continue over following lines. '#' starts a comment. Relative
/// permittivities are converted to absolute at load time.
/// Throws ParseError (with line number) or ValidationError.
std::map<std::string, MaterialTensors> load_material_db(
    const std::string& text);

/// load_material_db on the contents of a file.
std::map<std::string, MaterialTensors> load_material_file(
    const std::string& path);

/// Serializes one material in the file format (full precision, epsS
/// converted back to relative values).
std::string write_material_entry(const MaterialTensors& mat);

/// Isotropic elastic material from engineering constants; e = 0.
MaterialTensors isotropic_elastic(const std::string& name, double youngs,
                                  double poisson, double rho,
                                  double eps_rel = 1.0);

/// Vacuum placeholder for exterior field regions: permittivity eps0 only,
/// no elasticity, no mass. Not a valid structural material.
MaterialTensors vacuum_region();

}  // namespace lbaw
