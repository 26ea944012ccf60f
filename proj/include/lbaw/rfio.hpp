#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <vector>

#include "lbaw/mbvd.hpp"

namespace lbaw {

using SMatrix = Eigen::Matrix2cd;

/// 2-port network data with a real reference impedance.
struct TwoPortData {
  std::vector<double> f;        // Hz, strictly increasing
  std::vector<SMatrix> s;       // per frequency
  double z0 = 50.0;             // ohm
};

enum class TouchstoneFormat { RI, MA, DB };

/// Parses a 2-port Touchstone v1 file (.s2p). Honors the option line
/// `# <freq-unit> S <RI|MA|DB> R <z0>` (defaults GHZ/MA/50), `!` comments,
/// and the v1 column order f s11 s21 s12 s22. Touchstone v2 markers are
/// rejected. Throws ParseError or NonMonotoneFrequency.
TwoPortData parse_touchstone(const std::string& text);
TwoPortData parse_touchstone_file(const std::string& path);

/// Writer used for round trips and synthesis; 17 significant digits.
std::string write_touchstone(const TwoPortData& d,
                             TouchstoneFormat fmt = TouchstoneFormat::RI);

struct YConversion {
  std::vector<double> f;
  std::vector<Eigen::Matrix2cd> y;   // S
  std::vector<std::string> warnings; // dropped points etc.
};

/// Y = (1/Z0) (I - S)(I + S)^-1 per frequency. Singular conversions are
/// dropped with a warning naming the frequency index.
YConversion s_to_y(const TwoPortData& d);

/// Inverse map S = (I - Z0 Y)(I + Z0 Y)^-1.
SMatrix y_to_s(const Eigen::Matrix2cd& y, double z0);

/// Spectrum of -Y12 (the series one-port admittance of the resonator in a
/// 2-port series configuration). Warns when reciprocity is violated by
/// more than 1%.
struct ExtractedSpectrum {
  AdmittanceSpectrum spectrum;
  std::vector<std::string> warnings;
};
ExtractedSpectrum extract_y12(const YConversion& y);

/// Admittance spectrum CSV: `f_hz,re_y,im_y`.
std::string write_admittance_csv(const AdmittanceSpectrum& s);
AdmittanceSpectrum parse_admittance_csv(const std::string& text);

/// 2-port S-parameters of a series element with admittance y_r:
/// Y = [[y_r, -y_r], [-y_r, y_r]].
SMatrix series_element_s(const std::complex<double>& y_r, double z0);

}  // namespace lbaw
