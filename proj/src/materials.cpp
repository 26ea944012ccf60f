#include "lbaw/materials.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lbaw/errors.hpp"

namespace lbaw {

namespace {

double wrap_angle(double deg) {
  if (!std::isfinite(deg)) throw DomainError("Euler angle not finite");
  double a = std::fmod(deg + 180.0, 360.0);
  if (a <= 0.0) a += 360.0;
  return a - 180.0;
}

Eigen::Matrix3d rot_z(double deg) {
  const double a = deg * M_PI / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

Eigen::Matrix3d rot_x(double deg) {
  const double a = deg * M_PI / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

EulerAngles::EulerAngles(double phi, double theta, double psi)
    : phi_deg(wrap_angle(phi)),
      theta_deg(wrap_angle(theta)),
      psi_deg(wrap_angle(psi)) {}

Eigen::Matrix3d rotation_matrix(const EulerAngles& angles) {
  return rot_z(angles.phi_deg) * rot_x(angles.theta_deg) *
         rot_z(angles.psi_deg);
}

Eigen::Matrix<double, 6, 6> bond_stress_matrix(const Eigen::Matrix3d& a) {
  // Voigt pairing 4<->(2,3), 5<->(1,3), 6<->(1,2).
  static const int p[6] = {0, 1, 2, 1, 0, 0};
  static const int q[6] = {0, 1, 2, 2, 2, 1};
  Eigen::Matrix<double, 6, 6> m;
  for (int I = 0; I < 6; ++I) {
    const int i = p[I], j = q[I];
    for (int J = 0; J < 3; ++J) m(I, J) = a(i, J) * a(j, J);
    m(I, 3) = a(i, 1) * a(j, 2) + a(i, 2) * a(j, 1);
    m(I, 4) = a(i, 0) * a(j, 2) + a(i, 2) * a(j, 0);
    m(I, 5) = a(i, 0) * a(j, 1) + a(i, 1) * a(j, 0);
  }
  return m;
}

MaterialTensors rotate_tensors(const MaterialTensors& mat,
                               const EulerAngles& angles) {
  const auto violations = validate(mat);
  if (!violations.empty())
    throw InvalidMaterial(mat.name + ": " + violations.front());

  const Eigen::Matrix3d q = rotation_matrix(angles).transpose();
  const Eigen::Matrix<double, 6, 6> m = bond_stress_matrix(q);

  MaterialTensors out = mat;
  out.c_E = m * mat.c_E * m.transpose();
  out.e = q * mat.e * m.transpose();
  out.eps_S = q * mat.eps_S * q.transpose();
  // Re-symmetrize to scrub roundoff.
  out.c_E = 0.5 * (out.c_E + out.c_E.transpose()).eval();
  out.eps_S = 0.5 * (out.eps_S + out.eps_S.transpose()).eval();
  return out;
}

std::vector<std::string> validate(const MaterialTensors& mat) {
  std::vector<std::string> violations;
  const double c_scale = mat.c_E.cwiseAbs().maxCoeff();
  const double eps_scale = mat.eps_S.cwiseAbs().maxCoeff();

  if (!mat.c_E.allFinite() || !mat.e.allFinite() || !mat.eps_S.allFinite() ||
      !std::isfinite(mat.rho)) {
    violations.push_back("non-finite entries");
    return violations;
  }
  if (c_scale <= 0.0) violations.push_back("c_E is zero");
  if (eps_scale <= 0.0) violations.push_back("eps_S is zero");
  if (!violations.empty()) return violations;

  if ((mat.c_E - mat.c_E.transpose()).cwiseAbs().maxCoeff() > 1e-9 * c_scale)
    violations.push_back("c_E not symmetric");
  if ((mat.eps_S - mat.eps_S.transpose()).cwiseAbs().maxCoeff() >
      1e-9 * eps_scale)
    violations.push_back("eps_S not symmetric");

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> ec(
      0.5 * (mat.c_E + mat.c_E.transpose()));
  if (ec.eigenvalues().minCoeff() <= 0.0)
    violations.push_back("c_E not positive definite");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> ee(
      0.5 * (mat.eps_S + mat.eps_S.transpose()));
  if (ee.eigenvalues().minCoeff() <= 0.0)
    violations.push_back("eps_S not positive definite");

  if (mat.rho <= 0.0) violations.push_back("rho not positive");
  return violations;
}

namespace {

struct DbParser {
  std::map<std::string, MaterialTensors> db;
  MaterialTensors current;
  bool have_material = false;
  bool have_rho = false, have_c = false, have_e = false, have_eps = false;
  std::string pending_key;
  std::vector<double> pending;
  int pending_line = 0;

  static size_t expected_count(const std::string& key) {
    if (key == "cE") return 36;
    if (key == "e") return 18;
    if (key == "epsS_rel") return 9;
    return 1;  // rho
  }

  void flush_pending() {
    if (pending_key.empty()) return;
    const size_t want = expected_count(pending_key);
    if (pending.size() != want)
      throw ParseError("key '" + pending_key + "' expects " +
                           std::to_string(want) + " values, got " +
                           std::to_string(pending.size()),
                       pending_line);
    if (pending_key == "rho") {
      current.rho = pending[0];
      have_rho = true;
    } else if (pending_key == "cE") {
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) current.c_E(i, j) = pending[6 * i + j];
      have_c = true;
    } else if (pending_key == "e") {
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 6; ++j) current.e(i, j) = pending[6 * i + j];
      have_e = true;
    } else if (pending_key == "epsS_rel") {
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          current.eps_S(i, j) = pending[3 * i + j] * kVacuumPermittivity;
      have_eps = true;
    }
    pending_key.clear();
    pending.clear();
  }

  void finish_material(int line) {
    flush_pending();
    if (!have_material) return;
    if (!have_rho || !have_c || !have_e || !have_eps)
      throw ParseError("material '" + current.name +
                           "' is missing one of rho/cE/e/epsS_rel",
                       line);
    const auto violations = validate(current);
    if (!violations.empty())
      throw ValidationError("material '" + current.name +
                            "': " + violations.front());
    if (db.count(current.name))
      throw ParseError("duplicate material name '" + current.name + "'", line);
    db.emplace(current.name, current);
    current = MaterialTensors{};
    have_material = have_rho = have_c = have_e = have_eps = false;
  }
};

bool parse_number(const std::string& tok, double* out) {
  char* end = nullptr;
  *out = std::strtod(tok.c_str(), &end);
  return end == tok.c_str() + tok.size();
}

}  // namespace

std::map<std::string, MaterialTensors> load_material_db(
    const std::string& text) {
  DbParser p;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;

    double value;
    if (parse_number(first, &value)) {
      // Continuation of the current numeric block.
      if (p.pending_key.empty())
        throw ParseError("numeric data without a key", line_no);
      p.pending.push_back(value);
      std::string tok;
      while (ls >> tok) {
        if (!parse_number(tok, &value))
          throw ParseError("bad number '" + tok + "'", line_no);
        p.pending.push_back(value);
      }
      continue;
    }

    if (first == "name") {
      p.finish_material(line_no);
      std::string rest;
      std::getline(ls, rest);
      const auto start = rest.find_first_not_of(" \t");
      if (start == std::string::npos)
        throw ParseError("empty material name", line_no);
      const auto stop = rest.find_last_not_of(" \t\r");
      p.current.name = rest.substr(start, stop - start + 1);
      p.have_material = true;
    } else if (first == "source") {
      p.flush_pending();
      if (!p.have_material) throw ParseError("'source' before 'name'", line_no);
      std::string rest;
      std::getline(ls, rest);
      const auto start = rest.find_first_not_of(" \t");
      p.current.source = start == std::string::npos ? "" : rest.substr(start);
    } else if (first == "rho" || first == "cE" || first == "e" ||
               first == "epsS_rel") {
      p.flush_pending();
      if (!p.have_material)
        throw ParseError("'" + first + "' before 'name'", line_no);
      p.pending_key = first;
      p.pending_line = line_no;
      std::string tok;
      while (ls >> tok) {
        if (!parse_number(tok, &value))
          throw ParseError("bad number '" + tok + "'", line_no);
        p.pending.push_back(value);
      }
    } else {
      throw ParseError("unknown key '" + first + "'", line_no);
    }
  }
  p.finish_material(line_no);
  return p.db;
}

std::map<std::string, MaterialTensors> load_material_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open material file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_material_db(ss.str());
}

std::string write_material_entry(const MaterialTensors& mat) {
  std::ostringstream out;
  out << "name " << mat.name << "\n";
  if (!mat.source.empty()) out << "source " << mat.source << "\n";
  out << "rho " << fmt(mat.rho) << "\n";
  out << "cE\n";
  for (int i = 0; i < 6; ++i) {
    out << " ";
    for (int j = 0; j < 6; ++j) out << " " << fmt(mat.c_E(i, j));
    out << "\n";
  }
  out << "e\n";
  for (int i = 0; i < 3; ++i) {
    out << " ";
    for (int j = 0; j < 6; ++j) out << " " << fmt(mat.e(i, j));
    out << "\n";
  }
  out << "epsS_rel\n";
  for (int i = 0; i < 3; ++i) {
    out << " ";
    for (int j = 0; j < 3; ++j)
      out << " " << fmt(mat.eps_S(i, j) / kVacuumPermittivity);
    out << "\n";
  }
  return out.str();
}

MaterialTensors isotropic_elastic(const std::string& name, double youngs,
                                  double poisson, double rho, double eps_rel) {
  const double lambda =
      youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
  const double mu = youngs / (2.0 * (1.0 + poisson));
  MaterialTensors m;
  m.name = name;
  m.rho = rho;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m.c_E(i, j) = lambda;
    m.c_E(i, i) = lambda + 2.0 * mu;
    m.c_E(i + 3, i + 3) = mu;
  }
  m.eps_S = eps_rel * kVacuumPermittivity * Eigen::Matrix3d::Identity();
  return m;
}

MaterialTensors vacuum_region() {
  MaterialTensors m;
  m.name = "vacuum";
  m.eps_S = kVacuumPermittivity * Eigen::Matrix3d::Identity();
  return m;
}

}  // namespace lbaw
