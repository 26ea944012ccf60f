#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

namespace lbaw {

/// Modified Butterworth-Van Dyke circuit: motional branch Rm-Lm-Cm in
/// parallel with the static branch R0-C0, both in series with Rs.
struct MbvdParams {
  double Rm = 0.0;  // ohm
  double Lm = 0.0;  // H
  double Cm = 0.0;  // F
  double C0 = 0.0;  // F
  double R0 = 0.0;  // ohm
  double Rs = 0.0;  // ohm
};

struct DerivedMetrics {
  double fs = 0.0;       // Hz
  double fp = 0.0;       // Hz
  double kt2_eff = 0.0;  // 1 - (fs/fp)^2 = Cm/(Cm+C0)
  double Qs = 0.0;
  double Qp = 0.0;
  double FoM = 0.0;  // kt2_eff * Qs
};

struct AdmittanceSpectrum {
  std::vector<double> f;                 // Hz, strictly increasing
  std::vector<std::complex<double>> y;   // S
};

/// Y(f) = 1 / (Rs + Zm Z0 / (Zm + Z0)) with Zm = Rm + jwLm + 1/(jwCm) and
/// Z0 = R0 + 1/(jwC0).
std::complex<double> admittance(const MbvdParams& p, double f);

/// fs = 1/(2 pi sqrt(Lm Cm)); fp = fs sqrt(1 + Cm/C0);
/// Qs = 2 pi fs Lm / (Rm + Rs); Qp = 2 pi fp Lm / (Rm + R0);
/// FoM = kt2_eff * Qs.
DerivedMetrics derive_metrics(const MbvdParams& p);

/// Model spectrum on a linear grid; noise > 0 adds multiplicative complex
/// Gaussian perturbations of that relative magnitude (seeded, reproducible).
AdmittanceSpectrum synth_spectrum(const MbvdParams& p, int n_points,
                                  double f_lo, double f_hi,
                                  double noise = 0.0, std::uint64_t seed = 0);

/// Default synthesis grid: 2001 points spanning 0.8 fs .. 1.2 fp.
AdmittanceSpectrum synth_spectrum_default(const MbvdParams& p,
                                          double noise = 0.0,
                                          std::uint64_t seed = 0);

/// Bootstrap estimate from the |Y| peak/dip locations and the off-resonance
/// capacitive baseline. Throws NoResonanceFound when the spectrum has no
/// resonance signature.
MbvdParams initial_guess(const AdmittanceSpectrum& s);

struct FitResult {
  MbvdParams params;
  DerivedMetrics metrics;
  double residual = 0.0;  // rms of |Y_model - Y_data| / |Y_data|
  int iterations = 0;
  bool converged = false;
  double qs_phase = 0.0;  // phase-derivative Q at fs, for comparison
};

/// Weighted complex least squares over the six parameters (weights
/// 1/|Y_data|^2, positivity kept via an internal log transform,
/// Levenberg-Marquardt). Converges when the relative parameter step drops
/// below 1e-9 or after 500 iterations; throws FitDiverged when the residual
/// never improved and the step limit is hit.
FitResult fit(const AdmittanceSpectrum& s,
              const std::optional<MbvdParams>& guess = std::nullopt);

}  // namespace lbaw
