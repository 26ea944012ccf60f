#include "lbaw/mbvd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "lbaw/errors.hpp"

namespace lbaw {

namespace {

using cplx = std::complex<double>;

void check_params(const MbvdParams& p) {
  if (!(p.Lm > 0) || !(p.Cm > 0) || !(p.C0 > 0) || p.Rm < 0 || p.R0 < 0 ||
      p.Rs < 0)
    throw DomainError("mBVD parameters violate invariants");
}

double median(std::vector<double> v) {
  const size_t n = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + n, v.end());
  return v[n];
}

}  // namespace

std::complex<double> admittance(const MbvdParams& p, double f) {
  const double w = 2.0 * M_PI * f;
  const cplx jw(0.0, w);
  const cplx zm = p.Rm + jw * p.Lm + 1.0 / (jw * p.Cm);
  const cplx z0 = p.R0 + 1.0 / (jw * p.C0);
  return 1.0 / (p.Rs + zm * z0 / (zm + z0));
}

DerivedMetrics derive_metrics(const MbvdParams& p) {
  check_params(p);
  DerivedMetrics m;
  m.fs = 1.0 / (2.0 * M_PI * std::sqrt(p.Lm * p.Cm));
  m.fp = m.fs * std::sqrt(1.0 + p.Cm / p.C0);
  m.kt2_eff = p.Cm / (p.Cm + p.C0);
  m.Qs = 2.0 * M_PI * m.fs * p.Lm / (p.Rm + p.Rs);
  m.Qp = 2.0 * M_PI * m.fp * p.Lm / (p.Rm + p.R0);
  m.FoM = m.kt2_eff * m.Qs;
  return m;
}

AdmittanceSpectrum synth_spectrum(const MbvdParams& p, int n_points,
                                  double f_lo, double f_hi, double noise,
                                  std::uint64_t seed) {
  if (n_points < 2 || !(f_lo > 0) || !(f_hi > f_lo))
    throw DomainError("bad synthesis grid");
  AdmittanceSpectrum s;
  s.f.reserve(n_points);
  s.y.reserve(n_points);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < n_points; ++i) {
    const double f = f_lo + (f_hi - f_lo) * i / (n_points - 1);
    cplx y = admittance(p, f);
    if (noise > 0.0) {
      const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
      y *= 1.0 + noise * cplx(gauss(rng), gauss(rng)) * inv_sqrt2;
    }
    s.f.push_back(f);
    s.y.push_back(y);
  }
  return s;
}

AdmittanceSpectrum synth_spectrum_default(const MbvdParams& p, double noise,
                                          std::uint64_t seed) {
  const auto m = derive_metrics(p);
  return synth_spectrum(p, 2001, 0.8 * m.fs, 1.2 * m.fp, noise, seed);
}

MbvdParams initial_guess(const AdmittanceSpectrum& s) {
  const int n = static_cast<int>(s.f.size());
  if (n < 3 || s.y.size() != s.f.size())
    throw NoResonanceFound("spectrum too short");

  int i_max = 0;
  for (int i = 1; i < n; ++i)
    if (std::abs(s.y[i]) > std::abs(s.y[i_max])) i_max = i;
  if (i_max >= n - 1)
    throw NoResonanceFound("no |Y| maximum before the end of the spectrum");

  int i_min = i_max + 1;
  for (int i = i_max + 1; i < n; ++i)
    if (std::abs(s.y[i]) < std::abs(s.y[i_min])) i_min = i;

  const double fs0 = s.f[i_max];
  const double fp0 = s.f[i_min];
  if (!(fp0 > fs0) ||
      std::abs(s.y[i_max]) < 1.1 * std::abs(s.y[i_min]))
    throw NoResonanceFound("spectrum has no resonance/antiresonance pair");

  // Static capacitance from the off-resonance capacitive baseline.
  std::vector<double> c_est;
  for (double span_factor : {3.0, 1.5}) {
    for (int i = 0; i < n; ++i)
      if (std::abs(s.f[i] - fs0) > span_factor * (fp0 - fs0))
        c_est.push_back(s.y[i].imag() / (2.0 * M_PI * s.f[i]));
    if (c_est.size() >= 3) break;
    c_est.clear();
  }
  if (c_est.empty()) {
    // Fall back to the decile farthest from resonance.
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      return std::abs(s.f[a] - fs0) > std::abs(s.f[b] - fs0);
    });
    for (int i = 0; i < std::max(1, n / 10); ++i)
      c_est.push_back(s.y[idx[i]].imag() / (2.0 * M_PI * s.f[idx[i]]));
  }

  MbvdParams g;
  g.C0 = std::max(median(std::move(c_est)), 1e-18);
  const double ratio2 = (fp0 / fs0) * (fp0 / fs0);
  g.Cm = std::max(g.C0 * (ratio2 - 1.0), 1e-20);
  g.Lm = 1.0 / (std::pow(2.0 * M_PI * fs0, 2) * g.Cm);
  g.Rm = 1.0 / std::abs(s.y[i_max]);
  g.R0 = 0.0;
  g.Rs = 0.0;
  return g;
}

namespace {

// Parameters are fitted as logs to keep them positive.
Eigen::Vector<double, 6> to_log(const MbvdParams& p) {
  constexpr double r_floor = 1e-6;
  Eigen::Vector<double, 6> x;
  x << std::log(std::max(p.Rm, r_floor)), std::log(p.Lm), std::log(p.Cm),
      std::log(p.C0), std::log(std::max(p.R0, r_floor)),
      std::log(std::max(p.Rs, r_floor));
  return x;
}

MbvdParams from_log(const Eigen::Vector<double, 6>& x) {
  MbvdParams p;
  p.Rm = std::exp(x[0]);
  p.Lm = std::exp(x[1]);
  p.Cm = std::exp(x[2]);
  p.C0 = std::exp(x[3]);
  p.R0 = std::exp(x[4]);
  p.Rs = std::exp(x[5]);
  return p;
}

Eigen::VectorXd residual_vector(const AdmittanceSpectrum& s,
                                const std::vector<double>& weight,
                                const MbvdParams& p) {
  const int n = static_cast<int>(s.f.size());
  Eigen::VectorXd r(2 * n);
  for (int i = 0; i < n; ++i) {
    const cplx d = (admittance(p, s.f[i]) - s.y[i]) * weight[i];
    r[2 * i] = d.real();
    r[2 * i + 1] = d.imag();
  }
  return r;
}

}  // namespace

namespace {

struct LmOutcome {
  Eigen::Vector<double, 6> x;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
  bool improved = false;
};

LmOutcome lm_minimize(const AdmittanceSpectrum& s,
                      const std::vector<double>& weight,
                      const MbvdParams& start) {
  const int n = static_cast<int>(s.f.size());
  LmOutcome out;
  out.x = to_log(start);
  Eigen::VectorXd r = residual_vector(s, weight, from_log(out.x));
  out.cost = r.squaredNorm();

  double mu = 1e-3;
  for (; out.iterations < 500; ++out.iterations) {
    // Jacobian by central differences in log space.
    Eigen::MatrixXd jac(2 * n, 6);
    constexpr double h = 1e-6;
    for (int k = 0; k < 6; ++k) {
      Eigen::Vector<double, 6> xp = out.x, xm = out.x;
      xp[k] += h;
      xm[k] -= h;
      jac.col(k) = (residual_vector(s, weight, from_log(xp)) -
                    residual_vector(s, weight, from_log(xm))) /
                   (2.0 * h);
    }
    const Eigen::Matrix<double, 6, 6> jtj = jac.transpose() * jac;
    const Eigen::Vector<double, 6> jtr = jac.transpose() * r;

    bool stepped = false;
    for (int tries = 0; tries < 60 && !stepped && !out.converged; ++tries) {
      Eigen::Matrix<double, 6, 6> a = jtj;
      a.diagonal() += mu * jtj.diagonal().cwiseMax(1e-30);
      Eigen::Vector<double, 6> delta = a.ldlt().solve(-jtr);
      // Keep each step within a factor e^2; runaway along a nearly flat
      // direction would otherwise freeze that parameter for good.
      const double dmax = delta.cwiseAbs().maxCoeff();
      if (dmax > 2.0) delta *= 2.0 / dmax;
      const Eigen::Vector<double, 6> x_new = out.x + delta;
      const Eigen::VectorXd r_new =
          residual_vector(s, weight, from_log(x_new));
      const double cost_new = r_new.squaredNorm();
      if (cost_new < out.cost) {
        out.x = x_new;
        r = r_new;
        out.cost = cost_new;
        mu = std::max(mu / 3.0, 1e-14);
        stepped = true;
        out.improved = true;
        // Converged on an accepted step: log-space delta is the relative
        // parameter change.
        if (delta.cwiseAbs().maxCoeff() < 1e-9) out.converged = true;
      } else {
        if (mu <= 1e-10 && delta.cwiseAbs().maxCoeff() < 1e-9) {
          out.converged = true;
          break;
        }
        mu *= 4.0;
        if (mu > 1e14) break;
      }
    }
    if (out.converged || !stepped) break;
  }
  return out;
}

}  // namespace

FitResult fit(const AdmittanceSpectrum& s,
              const std::optional<MbvdParams>& guess) {
  const int n = static_cast<int>(s.f.size());
  if (n < 8) throw NoResonanceFound("spectrum too short to fit");

  std::vector<double> weight(n);
  for (int i = 0; i < n; ++i)
    weight[i] = 1.0 / std::max(std::abs(s.y[i]), 1e-30);

  const MbvdParams g0 = guess ? *guess : initial_guess(s);

  // The peak pins Rm + Rs but not the split, and R0 only shapes the dip;
  // run a few deterministic starts over the resistive arrangement and keep
  // the best minimum.
  const double r_peak = std::max(g0.Rm + g0.Rs, 1e-3);
  std::vector<MbvdParams> starts;
  for (const auto& [rm_frac, r0_scale] :
       std::initializer_list<std::pair<double, double>>{
           {0.95, 0.05}, {0.5, 0.5}, {0.3, 2.0}}) {
    MbvdParams st = g0;
    st.Rm = std::max(rm_frac * r_peak, 1e-6);
    st.Rs = std::max((1.0 - rm_frac) * r_peak, 1e-6);
    st.R0 = std::max(st.R0, r0_scale * r_peak);
    starts.push_back(st);
  }

  LmOutcome best;
  best.cost = std::numeric_limits<double>::infinity();
  int total_iter = 0;
  bool any_improved = false;
  for (const auto& st : starts) {
    const LmOutcome o = lm_minimize(s, weight, st);
    total_iter += o.iterations;
    any_improved = any_improved || o.improved;
    if (o.cost < best.cost) best = o;
  }

  if (!best.converged && !any_improved)
    throw FitDiverged("residual never decreased within the step limit");

  FitResult res;
  res.params = from_log(best.x);
  res.metrics = derive_metrics(res.params);
  res.residual = std::sqrt(best.cost / n);
  res.iterations = total_iter;
  res.converged = best.converged;

  // Phase-derivative Q at fs from the fitted model, for comparison with the
  // branch definition.
  const double fs = res.metrics.fs;
  const double df = fs * 1e-6;
  const auto phase_z = [&](double f) {
    return std::arg(1.0 / admittance(res.params, f));
  };
  res.qs_phase =
      0.5 * fs * std::abs(phase_z(fs + df) - phase_z(fs - df)) / (2.0 * df);
  return res;
}

}  // namespace lbaw
