#pragma once

#include <map>
#include <string>
#include <vector>

#include "lbaw/fem.hpp"
#include "lbaw/materials.hpp"
#include "lbaw/mesh.hpp"

namespace lbaw {

struct DispersionPoint {
  double wm_wp = 0.0;
  ModeLabel label;
  double fs = 0.0;
  double fp = 0.0;
  double kt2 = 0.0;
  double eta = 0.0;
  double mac = 0.0;
};

enum class Kt2Formula { Effective, Berlincourt };

/// kt2 = 1 - (fs/fp)^2 (effective coupling); the Berlincourt-style variant
/// scales it by pi^2/8. Throws DomainError unless 0 < fs <= fp.
double kt2_from_pair(double fs, double fp,
                     Kt2Formula formula = Kt2Formula::Effective);

/// One orientation to sweep: the piezo film rotated by the given Euler
/// angles. Mode families are discovered and tracked per run.
struct OrientationRun {
  std::string name;
  EulerAngles euler{0, 0, 0};
};

struct SweepConfig {
  UnitCellGeometry geometry;  // w_m is set per ratio: w_m = ratio * w_p
  std::string piezo = "linbo3";
  std::string electrode = "alsicu";
  std::map<std::string, MaterialTensors> material_db;
  std::vector<OrientationRun> runs;
  std::vector<double> ratios;  // strictly increasing after sorting, >= 0
  double f_min = 50e6;
  double f_max = 3e9;
  int n_modes = 64;
  int nz = 10;
  double nx_per_micron = 12.0;
  Kt2Formula formula = Kt2Formula::Effective;
  int jobs = 1;
  // Optionally model the exterior fringing field with vacuum layers above
  // and below the film. For sub-wavelength film thicknesses the fringing
  // capacitance rivals the in-film one; it lowers kt2 by roughly 15%
  // relative and pulls the coupling optimum toward smaller ratios. Off by
  // default: the reference model treats the surfaces as charge-free.
  bool exterior_air = false;
};

/// Default ratio grid of the sweeps: 30 log-spaced points over
/// [0.05, 1.5].
std::vector<double> default_ratio_grid();

struct FamilyCurve {
  ModeLabel family;
  std::vector<DispersionPoint> points;  // sorted by ratio
  std::vector<double> gap_ratios;       // ratios where the branch was lost
};

struct SweepRunResult {
  std::string name;
  std::vector<FamilyCurve> families;
  std::vector<std::string> warnings;  // per-point failures etc.
};

/// Full sweep: per ratio builds the mesh (raising the in-plane resolution
/// where needed so at least 4 elements span the smallest feature), solves
/// Short and Float, classifies, pairs, computes kt2 and eta, and tracks
/// branches across ratios by label plus MAC continuity (>= 0.6 on a common
/// resampled grid). Ratio points run on `jobs` parallel workers; the output
/// is deterministic and sorted regardless of completion order. Per-point
/// failures are recorded as warnings and branch gaps, never aborting the
/// sweep.
std::vector<SweepRunResult> run_sweep(const SweepConfig& config);

/// Point with maximal kt2; ties broken toward larger eta, then smaller
/// ratio. Throws InsufficientData for fewer than 3 points.
DispersionPoint find_optimum(const std::vector<DispersionPoint>& points);

/// CSV with header `wm_wp,mode,order,fs_hz,fp_hz,kt2,eta,mac`, full
/// precision.
std::string export_csv(const std::vector<DispersionPoint>& points);
std::vector<DispersionPoint> parse_csv(const std::string& text);

/// Line-oriented key-value sweep configuration (see README). Relative
/// material_db paths resolve against base_dir. Throws ParseError with line
/// numbers.
SweepConfig load_sweep_config(const std::string& text,
                              const std::string& base_dir = ".");
SweepConfig load_sweep_config_file(const std::string& path);

}  // namespace lbaw
