#include "lbaw/dispersion.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "lbaw/errors.hpp"

namespace lbaw {

namespace {

constexpr int kSampleNx = 48;
constexpr int kSampleNz = 5;
constexpr double kTrackMacThreshold = 0.6;

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Plain (identity-weighted) MAC on resampled displacement fields.
double sampled_mac(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double num = a.dot(b);
  const double den = a.squaredNorm() * b.squaredNorm();
  return den > 0 ? num * num / den : 0.0;
}

struct Candidate {
  ModeLabel label;
  double fs, fp, kt2, eta, mac;
  Eigen::VectorXd samples;  // short-circuit mode on the common grid
};

struct RatioResult {
  double ratio = 0.0;
  std::vector<Candidate> candidates;
  std::string error;  // nonempty when the point failed
};

RatioResult evaluate_ratio(const SweepConfig& cfg, const OrientationRun& run,
                           double ratio) {
  RatioResult out;
  out.ratio = ratio;
  try {
    UnitCellGeometry geom = cfg.geometry;
    geom.w_m = ratio * geom.w_p;

    // Guarantee at least 4 elements across the smallest lateral feature.
    double res = cfg.nx_per_micron;
    if (geom.w_m > 0) {
      const double feature_um = std::min(geom.w_m, geom.w_p) * 1e6;
      res = std::max(res, std::ceil(4.0 / feature_um));
    }
    // One period of air above and below captures the fringing field; the
    // lowest lateral harmonic decays as exp(-2 pi z / period).
    const double air_extent = cfg.exterior_air ? geom.period() : 0.0;
    const Mesh mesh = build_unit_cell(geom, res, cfg.nz, air_extent);

    const auto piezo_it = cfg.material_db.find(cfg.piezo);
    const auto metal_it = cfg.material_db.find(cfg.electrode);
    if (piezo_it == cfg.material_db.end())
      throw MissingMaterial("piezo material '" + cfg.piezo + "' not in db");
    if (metal_it == cfg.material_db.end())
      throw MissingMaterial("electrode material '" + cfg.electrode +
                            "' not in db");

    std::map<Region, MaterialTensors> mats;
    mats[Region::Piezo] = rotate_tensors(piezo_it->second, run.euler);
    mats[Region::ElectrodeA] = metal_it->second;
    mats[Region::ElectrodeB] = metal_it->second;
    if (cfg.exterior_air) mats[Region::Air] = vacuum_region();

    const SystemMatrices sys = assemble(mesh, mats);
    const auto window = std::make_pair(cfg.f_min, cfg.f_max);
    const auto short_modes =
        solve_modes(sys, ElectricalBC::Short, window, cfg.n_modes);
    const auto float_modes =
        solve_modes(sys, ElectricalBC::Float, window, cfg.n_modes);
    const auto pairing = pair_modes(short_modes, float_modes, sys);

    for (const auto& pair : pairing.pairs) {
      const auto& mode = short_modes[pair.short_index];
      Candidate c;
      c.label = mode.label;
      c.fs = pair.fs;
      c.fp = std::max(pair.fp, pair.fs);  // tolerate zero-coupling roundoff
      c.kt2 = kt2_from_pair(c.fs, c.fp, cfg.formula);
      c.eta = energy_partition(mode, mesh, mats);
      c.mac = pair.mac;
      c.samples = sample_displacement(mesh, mode, kSampleNx, kSampleNz);
      out.candidates.push_back(std::move(c));
    }
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

double kt2_from_pair(double fs, double fp, Kt2Formula formula) {
  if (!(fs > 0) || !(fp > 0) || fs > fp)
    throw DomainError("kt2 requires 0 < fs <= fp");
  const double eff = 1.0 - (fs / fp) * (fs / fp);
  return formula == Kt2Formula::Effective ? eff
                                          : (M_PI * M_PI / 8.0) * eff;
}

std::vector<double> default_ratio_grid() {
  std::vector<double> grid;
  const double lo = std::log(0.05), hi = std::log(1.5);
  for (int i = 0; i < 30; ++i)
    grid.push_back(std::exp(lo + (hi - lo) * i / 29.0));
  return grid;
}

std::vector<SweepRunResult> run_sweep(const SweepConfig& config) {
  if (config.ratios.empty()) throw DomainError("empty ratio grid");
  std::vector<double> ratios = config.ratios;
  std::sort(ratios.begin(), ratios.end());
  for (size_t i = 0; i < ratios.size(); ++i) {
    if (ratios[i] < 0) throw DomainError("ratios must be >= 0");
    if (i > 0 && ratios[i] == ratios[i - 1])
      throw DomainError("duplicate ratio in grid");
  }

  std::vector<SweepRunResult> results;
  for (const auto& run : config.runs) {
    SweepRunResult res;
    res.name = run.name;

    // Evaluate ratio points on a small worker pool; aggregation below is
    // index-ordered, so the output does not depend on completion order.
    std::vector<RatioResult> points(ratios.size());
    const int jobs =
        std::max(1, std::min<int>(config.jobs,
                                  static_cast<int>(ratios.size())));
    if (jobs == 1) {
      for (size_t i = 0; i < ratios.size(); ++i)
        points[i] = evaluate_ratio(config, run, ratios[i]);
    } else {
      std::atomic<size_t> next{0};
      std::vector<std::thread> workers;
      for (int w = 0; w < jobs; ++w)
        workers.emplace_back([&]() {
          for (size_t i = next.fetch_add(1); i < ratios.size();
               i = next.fetch_add(1))
            points[i] = evaluate_ratio(config, run, ratios[i]);
        });
      for (auto& t : workers) t.join();
    }

    // Sequential branch tracking over the sorted ratio grid. Several
    // physical branches can share a label (an electrically driven mode and
    // its undriven standing-wave twin), so branches are matched one-to-one
    // by MAC; unmatched candidates open new branches.
    struct Branch {
      FamilyCurve curve;
      Eigen::VectorXd rep;  // representative samples of the last point
      double peak_kt2 = 0.0;
    };
    std::vector<Branch> branches;

    for (const auto& pt : points) {
      if (!pt.error.empty()) {
        res.warnings.push_back("ratio " + fmt17(pt.ratio) + ": " + pt.error);
        for (auto& b : branches) b.curve.gap_ratios.push_back(pt.ratio);
        continue;
      }

      struct Match {
        double mac;
        size_t branch, cand;
      };
      std::vector<Match> matches;
      for (size_t bi = 0; bi < branches.size(); ++bi)
        for (size_t ci = 0; ci < pt.candidates.size(); ++ci) {
          if (!(branches[bi].curve.family == pt.candidates[ci].label))
            continue;
          const double mac =
              sampled_mac(branches[bi].rep, pt.candidates[ci].samples);
          if (mac >= kTrackMacThreshold) matches.push_back({mac, bi, ci});
        }
      std::sort(matches.begin(), matches.end(),
                [](const Match& a, const Match& b) {
                  return a.mac != b.mac
                             ? a.mac > b.mac
                             : (a.branch != b.branch ? a.branch < b.branch
                                                     : a.cand < b.cand);
                });

      std::vector<bool> branch_used(branches.size(), false);
      std::vector<bool> cand_used(pt.candidates.size(), false);
      const auto extend = [&](Branch& b, const Candidate& c) {
        b.curve.points.push_back(
            {pt.ratio, c.label, c.fs, c.fp, c.kt2, c.eta, c.mac});
        b.rep = c.samples;
        b.peak_kt2 = std::max(b.peak_kt2, c.kt2);
      };
      for (const auto& m : matches) {
        if (branch_used[m.branch] || cand_used[m.cand]) continue;
        branch_used[m.branch] = cand_used[m.cand] = true;
        extend(branches[m.branch], pt.candidates[m.cand]);
      }
      for (size_t bi = 0; bi < branches.size(); ++bi)
        if (!branch_used[bi])
          branches[bi].curve.gap_ratios.push_back(pt.ratio);
      for (size_t ci = 0; ci < pt.candidates.size(); ++ci) {
        if (cand_used[ci]) continue;
        Branch b;
        b.curve.family = pt.candidates[ci].label;
        extend(b, pt.candidates[ci]);
        branches.push_back(std::move(b));
      }
    }

    // Report one curve per family: the most strongly coupled branch is the
    // electrically active one the dispersion figures follow.
    std::map<ModeLabel, const Branch*> selected;
    for (const auto& b : branches) {
      auto it = selected.find(b.curve.family);
      const bool better =
          it == selected.end() ||
          (b.curve.points.size() >= 3 && it->second->curve.points.size() < 3) ||
          (!(b.curve.points.size() < 3 &&
             it->second->curve.points.size() >= 3) &&
           b.peak_kt2 > it->second->peak_kt2);
      if (better) selected[b.curve.family] = &b;
    }
    for (const auto& [label, b] : selected)
      res.families.push_back(b->curve);
    results.push_back(std::move(res));
  }
  return results;
}

DispersionPoint find_optimum(const std::vector<DispersionPoint>& points) {
  if (points.size() < 3)
    throw InsufficientData("optimum search needs at least 3 points");
  const DispersionPoint* best = &points[0];
  for (const auto& p : points) {
    if (p.kt2 > best->kt2 ||
        (p.kt2 == best->kt2 &&
         (p.eta > best->eta || (p.eta == best->eta && p.wm_wp < best->wm_wp))))
      best = &p;
  }
  return *best;
}

std::string export_csv(const std::vector<DispersionPoint>& points) {
  std::ostringstream out;
  out << "wm_wp,mode,order,fs_hz,fp_hz,kt2,eta,mac\n";
  for (const auto& p : points)
    out << fmt17(p.wm_wp) << "," << mode_type_name(p.label.type) << ","
        << p.label.order << "," << fmt17(p.fs) << "," << fmt17(p.fp) << ","
        << fmt17(p.kt2) << "," << fmt17(p.eta) << "," << fmt17(p.mac) << "\n";
  return out.str();
}

std::vector<DispersionPoint> parse_csv(const std::string& text) {
  std::vector<DispersionPoint> points;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (line_no == 1) {
      if (line.rfind("wm_wp,", 0) != 0)
        throw ParseError("missing dispersion CSV header", line_no);
      continue;
    }
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 8)
      throw ParseError("expected 8 CSV fields", line_no);
    DispersionPoint p;
    p.wm_wp = std::stod(fields[0]);
    p.label.type = mode_type_from_name(fields[1]);
    p.label.order = std::stoi(fields[2]);
    p.fs = std::stod(fields[3]);
    p.fp = std::stod(fields[4]);
    p.kt2 = std::stod(fields[5]);
    p.eta = std::stod(fields[6]);
    p.mac = std::stod(fields[7]);
    points.push_back(p);
  }
  return points;
}

SweepConfig load_sweep_config(const std::string& text,
                              const std::string& base_dir) {
  SweepConfig cfg;
  cfg.geometry = {100e-9, 80e-9, 2e-6, 0.0};
  std::string db_path;

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  const auto num = [&](const std::string& tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size())
      throw ParseError("bad number '" + tok + "'", line_no);
    return v;
  };

  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;

    std::string tok;
    if (key == "material_db") {
      ls >> db_path;
    } else if (key == "piezo") {
      ls >> cfg.piezo;
    } else if (key == "electrode") {
      ls >> cfg.electrode;
    } else if (key == "t_film") {
      ls >> tok;
      cfg.geometry.t_film = num(tok);
    } else if (key == "t_recess") {
      ls >> tok;
      cfg.geometry.t_recess = num(tok);
    } else if (key == "w_p") {
      ls >> tok;
      cfg.geometry.w_p = num(tok);
    } else if (key == "f_min") {
      ls >> tok;
      cfg.f_min = num(tok);
    } else if (key == "f_max") {
      ls >> tok;
      cfg.f_max = num(tok);
    } else if (key == "n_modes") {
      ls >> tok;
      cfg.n_modes = static_cast<int>(num(tok));
    } else if (key == "nz") {
      ls >> tok;
      cfg.nz = static_cast<int>(num(tok));
    } else if (key == "nx_per_micron") {
      ls >> tok;
      cfg.nx_per_micron = num(tok);
    } else if (key == "kt2_formula") {
      ls >> tok;
      if (tok == "effective")
        cfg.formula = Kt2Formula::Effective;
      else if (tok == "berlincourt")
        cfg.formula = Kt2Formula::Berlincourt;
      else
        throw ParseError("kt2_formula must be effective|berlincourt",
                         line_no);
    } else if (key == "exterior_air") {
      ls >> tok;
      if (tok == "on")
        cfg.exterior_air = true;
      else if (tok == "off")
        cfg.exterior_air = false;
      else
        throw ParseError("exterior_air must be on|off", line_no);
    } else if (key == "ratios") {
      std::vector<std::string> toks;
      while (ls >> tok) toks.push_back(tok);
      if (toks.empty()) throw ParseError("'ratios' needs values", line_no);
      if (toks[0] == "log") {
        if (toks.size() != 4)
          throw ParseError("'ratios log' needs lo hi n", line_no);
        const double lo = num(toks[1]), hi = num(toks[2]);
        const int n = static_cast<int>(num(toks[3]));
        if (!(lo > 0) || !(hi > lo) || n < 2)
          throw ParseError("bad log grid", line_no);
        cfg.ratios.clear();
        for (int i = 0; i < n; ++i)
          cfg.ratios.push_back(std::exp(std::log(lo) + (std::log(hi) -
                                         std::log(lo)) * i / (n - 1)));
      } else {
        cfg.ratios.clear();
        for (const auto& t : toks) cfg.ratios.push_back(num(t));
      }
    } else if (key == "family") {
      std::string name, a, b, c;
      if (!(ls >> name >> a >> b >> c))
        throw ParseError("'family' needs: name phi theta psi", line_no);
      cfg.runs.push_back({name, EulerAngles(num(a), num(b), num(c))});
    } else {
      throw ParseError("unknown key '" + key + "'", line_no);
    }
  }

  if (cfg.ratios.empty()) cfg.ratios = default_ratio_grid();
  if (cfg.runs.empty())
    throw ParseError("config needs at least one 'family' line");
  if (db_path.empty())
    throw ParseError("config needs a 'material_db' line");
  std::filesystem::path p(db_path);
  if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
  cfg.material_db = load_material_file(p.string());
  if (!cfg.material_db.count(cfg.piezo))
    throw ParseError("piezo material '" + cfg.piezo + "' not in db");
  if (!cfg.material_db.count(cfg.electrode))
    throw ParseError("electrode material '" + cfg.electrode + "' not in db");
  return cfg;
}

SweepConfig load_sweep_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_sweep_config(
      ss.str(), std::filesystem::path(path).parent_path().string());
}

}  // namespace lbaw
