// Command-line frontend: rotate | disperse | fit | synth | convert.
// Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical
// failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "lbaw/dispersion.hpp"
#include "lbaw/errors.hpp"
#include "lbaw/fem.hpp"
#include "lbaw/materials.hpp"
#include "lbaw/mbvd.hpp"
#include "lbaw/rfio.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
  std::string out_dir = ".";
  int jobs = 1;
  std::uint64_t seed = 0;
  bool verbose = false;
};

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "."
                                                    : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw lbaw::Error("cannot write '" + path.string() + "'");
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw lbaw::ParseError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Minimal self-contained SVG line chart (one polyline per series).
std::string svg_chart(const std::string& title, const std::string& x_label,
                      const std::string& y_label,
                      const std::vector<std::pair<
                          std::string, std::vector<std::pair<double, double>>>>&
                          series) {
  const int w = 720, h = 480, ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& [name, pts] : series)
    for (const auto& [x, y] : pts) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmin >= xmax) xmax = xmin + 1;
  if (ymin >= ymax) ymax = ymin + 1;
  const auto px = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr);
  };
  const auto py = [&](double y) {
    return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb);
  };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b"};
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\">\n<rect width=\"100%\" height=\"100%\" "
      << "fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-size=\"16\">" << title << "</text>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << h / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 "
      << "16 " << h / 2 << ")\">" << y_label << "</text>\n";
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << w - ml - mr
      << "\" height=\"" << h - mt - mb
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4;
    const double yv = ymin + (ymax - ymin) * i / 4;
    out << "<text x=\"" << px(xv) << "\" y=\"" << h - mb + 16
        << "\" text-anchor=\"middle\" font-size=\"10\">" << xv << "</text>\n";
    out << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 3
        << "\" text-anchor=\"end\" font-size=\"10\">" << yv << "</text>\n";
  }
  int ci = 0;
  for (const auto& [name, pts] : series) {
    const char* color = colors[ci % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) out << px(x) << "," << py(y) << " ";
    out << "\"/>\n";
    out << "<text x=\"" << w - mr - 8 << "\" y=\"" << mt + 16 + 14 * ci
        << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << color << "\">"
        << name << "</text>\n";
    ++ci;
  }
  out << "</svg>\n";
  return out.str();
}

json metrics_json(const lbaw::DerivedMetrics& m) {
  return {{"fs_hz", m.fs},   {"fp_hz", m.fp}, {"kt2_eff", m.kt2_eff},
          {"qs", m.Qs},      {"qp", m.Qp},    {"fom", m.FoM}};
}

json params_json(const lbaw::MbvdParams& p) {
  return {{"rm_ohm", p.Rm}, {"lm_h", p.Lm},   {"cm_f", p.Cm},
          {"c0_f", p.C0},   {"r0_ohm", p.R0}, {"rs_ohm", p.Rs}};
}

int run_rotate(const GlobalOpts& g, const std::string& db_path,
               const std::string& material, const std::vector<double>& euler,
               const std::string& out_name) {
  const auto db = lbaw::load_material_file(db_path);
  const auto it = db.find(material);
  if (it == db.end()) {
    std::cerr << "error: material '" << material << "' not found in "
              << db_path << "\n";
    return 3;
  }
  const lbaw::EulerAngles angles(euler[0], euler[1], euler[2]);
  auto rotated = lbaw::rotate_tensors(it->second, angles);
  rotated.source = it->second.source +
                   (it->second.source.empty() ? "" : "; ") + "rotated by (" +
                   fmt17(euler[0]) + ", " + fmt17(euler[1]) + ", " +
                   fmt17(euler[2]) + ") deg Z-X-Z";
  const fs::path out = fs::path(g.out_dir) / out_name;
  write_file(out, lbaw::write_material_entry(rotated));
  if (g.verbose) std::cerr << "wrote " << out << "\n";
  std::cout << out.string() << "\n";
  return 0;
}

int run_disperse(const GlobalOpts& g, const std::string& config_path,
                 const std::vector<double>& ratio_override, bool svg,
                 bool dump_mesh, bool dump_modes) {
  auto cfg = lbaw::load_sweep_config_file(config_path);
  if (!ratio_override.empty()) cfg.ratios = ratio_override;
  cfg.jobs = g.jobs;

  // Mesh-quality check on the extreme grid points.
  for (const double ratio : {cfg.ratios.front(), cfg.ratios.back()}) {
    auto geom = cfg.geometry;
    geom.w_m = ratio * geom.w_p;
    double res = cfg.nx_per_micron;
    if (geom.w_m > 0)
      res = std::max(res,
                     std::ceil(4.0 / (std::min(geom.w_m, geom.w_p) * 1e6)));
    const auto q = lbaw::mesh_quality(lbaw::build_unit_cell(
        geom, res, cfg.nz, cfg.exterior_air ? geom.period() : 0.0));
    if (q.max_aspect_ratio > 50.0)
      std::cerr << "warning: element aspect ratio " << q.max_aspect_ratio
                << " at wm/wp = " << ratio
                << " exceeds 50; consider raising nz or nx_per_micron\n";
  }

  const auto results = lbaw::run_sweep(cfg);
  json optima = json::array();
  for (const auto& run : results) {
    std::vector<lbaw::DispersionPoint> all;
    for (const auto& fam : run.families)
      all.insert(all.end(), fam.points.begin(), fam.points.end());
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      return a.label != b.label ? a.label < b.label : a.wm_wp < b.wm_wp;
    });
    const fs::path csv_path =
        fs::path(g.out_dir) / ("dispersion_" + run.name + ".csv");
    write_file(csv_path, lbaw::export_csv(all));
    std::cout << csv_path.string() << "\n";

    for (const auto& fam : run.families) {
      if (fam.points.size() < 3) continue;
      const auto opt = lbaw::find_optimum(fam.points);
      optima.push_back({{"run", run.name},
                        {"mode", lbaw::mode_type_name(fam.family.type)},
                        {"order", fam.family.order},
                        {"wm_wp", opt.wm_wp},
                        {"fs_hz", opt.fs},
                        {"fp_hz", opt.fp},
                        {"kt2", opt.kt2},
                        {"eta", opt.eta}});
    }
    for (const auto& w : run.warnings)
      std::cerr << "warning: " << run.name << ": " << w << "\n";

    if (svg) {
      std::vector<std::pair<std::string,
                            std::vector<std::pair<double, double>>>> kt2s,
          freqs;
      for (const auto& fam : run.families) {
        std::string label = lbaw::mode_type_name(fam.family.type) + "-" +
                            std::to_string(fam.family.order);
        std::vector<std::pair<double, double>> kpts, fpts;
        for (const auto& p : fam.points) {
          kpts.push_back({p.wm_wp, p.kt2});
          fpts.push_back({p.wm_wp, p.fs / 1e9});
        }
        kt2s.push_back({label, kpts});
        freqs.push_back({label + " fs", fpts});
      }
      write_file(fs::path(g.out_dir) / ("kt2_" + run.name + ".svg"),
                 svg_chart("electromechanical coupling (" + run.name + ")",
                           "w_m / w_p", "kt2", kt2s));
      write_file(fs::path(g.out_dir) / ("freq_" + run.name + ".svg"),
                 svg_chart("dispersion (" + run.name + ")", "w_m / w_p",
                           "fs (GHz)", freqs));
    }
  }

  if (dump_mesh) {
    auto geom = cfg.geometry;
    geom.w_m = cfg.ratios.front() * geom.w_p;
    double res = cfg.nx_per_micron;
    if (geom.w_m > 0)
      res = std::max(res, std::ceil(4.0 / (std::min(geom.w_m, geom.w_p) *
                                           1e6)));
    write_file(fs::path(g.out_dir) / "mesh.csv",
               lbaw::mesh_to_csv(lbaw::build_unit_cell(geom, res, cfg.nz)));
  }
  if (dump_modes) {
    // Dump the short-circuit modes at the first ratio of the first family.
    auto geom = cfg.geometry;
    geom.w_m = cfg.ratios.front() * geom.w_p;
    double res = cfg.nx_per_micron;
    if (geom.w_m > 0)
      res = std::max(res, std::ceil(4.0 / (std::min(geom.w_m, geom.w_p) *
                                           1e6)));
    const auto mesh = lbaw::build_unit_cell(geom, res, cfg.nz);
    std::map<lbaw::Region, lbaw::MaterialTensors> mats;
    mats[lbaw::Region::Piezo] = lbaw::rotate_tensors(
        cfg.material_db.at(cfg.piezo), cfg.runs.front().euler);
    mats[lbaw::Region::ElectrodeA] = cfg.material_db.at(cfg.electrode);
    mats[lbaw::Region::ElectrodeB] = cfg.material_db.at(cfg.electrode);
    const auto sys = lbaw::assemble(mesh, mats);
    const auto modes = lbaw::solve_modes(
        sys, lbaw::ElectricalBC::Short, {cfg.f_min, cfg.f_max}, cfg.n_modes);
    for (size_t i = 0; i < modes.size(); ++i)
      write_file(fs::path(g.out_dir) /
                     ("mode_" + std::to_string(i) + "_" +
                      lbaw::mode_type_name(modes[i].label.type) + ".csv"),
                 lbaw::mode_to_csv(mesh, modes[i]));
  }

  write_file(fs::path(g.out_dir) / "optima.json", optima.dump(2) + "\n");
  std::cout << (fs::path(g.out_dir) / "optima.json").string() << "\n";
  return 0;
}

lbaw::AdmittanceSpectrum load_spectrum(const std::string& path,
                                       const std::string& format,
                                       std::vector<std::string>* warnings) {
  std::string fmt = format;
  if (fmt == "auto") {
    const auto ext = fs::path(path).extension().string();
    fmt = ext == ".csv" ? "csv" : "s2p";
  }
  if (fmt == "csv") return lbaw::parse_admittance_csv(read_file(path));
  const auto data = lbaw::parse_touchstone(read_file(path));
  const auto y = lbaw::s_to_y(data);
  auto extracted = lbaw::extract_y12(y);
  if (warnings) {
    warnings->insert(warnings->end(), y.warnings.begin(), y.warnings.end());
    warnings->insert(warnings->end(), extracted.warnings.begin(),
                     extracted.warnings.end());
  }
  return extracted.spectrum;
}

int run_fit(const GlobalOpts& g, const std::string& input,
            const std::string& format, const std::string& out_name) {
  std::vector<std::string> warnings;
  const auto spectrum = load_spectrum(input, format, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  const auto res = lbaw::fit(spectrum);
  json report = {{"input_file", input},
                 {"n_points", spectrum.f.size()},
                 {"residual", res.residual},
                 {"iterations", res.iterations},
                 {"converged", res.converged},
                 {"params", params_json(res.params)},
                 {"metrics", metrics_json(res.metrics)},
                 {"qs_phase_derivative", res.qs_phase}};
  const std::string text = report.dump(2) + "\n";
  if (!out_name.empty())
    write_file(fs::path(g.out_dir) / out_name, text);
  std::cout << text;
  return 0;
}

int run_synth(const GlobalOpts& g, const lbaw::MbvdParams& params,
              int n_points, double noise, const std::string& format,
              double z0, const std::string& out_name) {
  const auto metrics = lbaw::derive_metrics(params);
  const auto spectrum = lbaw::synth_spectrum(
      params, n_points, 0.8 * metrics.fs, 1.2 * metrics.fp, noise, g.seed);

  const fs::path out = fs::path(g.out_dir) / out_name;
  if (format == "csv") {
    write_file(out, lbaw::write_admittance_csv(spectrum));
  } else {
    lbaw::TwoPortData d;
    d.z0 = z0;
    d.f = spectrum.f;
    for (size_t i = 0; i < spectrum.f.size(); ++i)
      d.s.push_back(lbaw::series_element_s(spectrum.y[i], z0));
    write_file(out, lbaw::write_touchstone(d));
  }
  std::cout << out.string() << "\n";
  return 0;
}

int run_convert(const GlobalOpts& g, const std::string& input,
                const std::string& out_name) {
  const auto data = lbaw::parse_touchstone(read_file(input));
  const auto y = lbaw::s_to_y(data);
  for (const auto& w : y.warnings) std::cerr << "warning: " << w << "\n";
  const auto extracted = lbaw::extract_y12(y);
  for (const auto& w : extracted.warnings) std::cerr << "warning: " << w << "\n";
  const fs::path out = fs::path(g.out_dir) / out_name;
  write_file(out, lbaw::write_admittance_csv(extracted.spectrum));
  std::cout << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LBAW resonator design and characterization toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--out", g.out_dir, "output directory")
      ->capture_default_str();
  app.add_option("--jobs", g.jobs, "parallel workers for sweeps")
      ->capture_default_str();
  app.add_option("--seed", g.seed, "seed for synthetic noise")
      ->capture_default_str();
  app.add_flag("--verbose", g.verbose, "chatty diagnostics on stderr");

  // rotate
  auto* rotate = app.add_subcommand("rotate", "rotate material constants");
  std::string db_path = "data/materials.txt", material = "linbo3";
  std::vector<double> euler{0, 0, 0};
  std::string rotate_out = "rotated.txt";
  rotate->add_option("--db", db_path, "material database file")
      ->capture_default_str();
  rotate->add_option("--material", material, "material name")
      ->capture_default_str();
  rotate->add_option("--euler", euler, "phi theta psi (deg, Z-X-Z)")
      ->expected(3);
  rotate->add_option("-o,--output", rotate_out, "output file name")
      ->capture_default_str();

  // disperse
  auto* disperse = app.add_subcommand("disperse", "run a w_m/w_p sweep");
  std::string config_path;
  std::vector<double> ratio_override;
  bool svg = false, dump_mesh = false, dump_modes = false;
  disperse->add_option("--config", config_path, "sweep config file")
      ->required();
  disperse->add_option("--ratios", ratio_override,
                       "override the config ratio grid");
  disperse->add_flag("--svg", svg, "also emit SVG charts");
  disperse->add_flag("--dump-mesh", dump_mesh, "dump the first mesh as CSV");
  disperse->add_flag("--dump-modes", dump_modes,
                     "dump short-circuit mode shapes at the first ratio");

  // fit
  auto* fitcmd = app.add_subcommand("fit", "fit an mBVD model");
  std::string fit_input, fit_format = "auto", fit_out;
  fitcmd->add_option("input", fit_input, ".s2p or admittance CSV")
      ->required();
  fitcmd->add_option("--format", fit_format, "s2p|csv|auto")
      ->check(CLI::IsMember({"s2p", "csv", "auto"}))
      ->capture_default_str();
  fitcmd->add_option("-o,--output", fit_out, "also write the JSON report");

  // synth
  auto* synth = app.add_subcommand("synth", "synthesize an mBVD spectrum");
  lbaw::MbvdParams sp{2.0, 80e-6, 0.7e-15, 2e-12, 1.0, 3.0};
  int n_points = 2001;
  double noise = 0.0, z0 = 50.0;
  std::string synth_format = "s2p", synth_out = "synth.s2p";
  synth->add_option("--rm", sp.Rm, "motional resistance, ohm")
      ->capture_default_str();
  synth->add_option("--lm", sp.Lm, "motional inductance, H")
      ->capture_default_str();
  synth->add_option("--cm", sp.Cm, "motional capacitance, F")
      ->capture_default_str();
  synth->add_option("--c0", sp.C0, "static capacitance, F")
      ->capture_default_str();
  synth->add_option("--r0", sp.R0, "dielectric loss resistance, ohm")
      ->capture_default_str();
  synth->add_option("--rs", sp.Rs, "series resistance, ohm")
      ->capture_default_str();
  synth->add_option("--points", n_points, "grid points")
      ->capture_default_str();
  synth->add_option("--noise", noise, "relative complex noise level")
      ->capture_default_str();
  synth->add_option("--z0", z0, "reference impedance for s2p output")
      ->capture_default_str();
  synth->add_option("--format", synth_format, "s2p|csv")
      ->check(CLI::IsMember({"s2p", "csv"}))
      ->capture_default_str();
  synth->add_option("-o,--output", synth_out, "output file name")
      ->capture_default_str();

  // convert
  auto* convert = app.add_subcommand("convert", "s2p to -Y12 CSV");
  std::string conv_input, conv_out = "admittance.csv";
  convert->add_option("input", conv_input, ".s2p file")->required();
  convert->add_option("-o,--output", conv_out, "output file name")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (rotate->parsed())
      return run_rotate(g, db_path, material, euler, rotate_out);
    if (disperse->parsed())
      return run_disperse(g, config_path, ratio_override, svg, dump_mesh,
                          dump_modes);
    if (fitcmd->parsed()) return run_fit(g, fit_input, fit_format, fit_out);
    if (synth->parsed())
      return run_synth(g, sp, n_points, noise, synth_format, z0, synth_out);
    if (convert->parsed()) return run_convert(g, conv_input, conv_out);
  } catch (const lbaw::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    // Config/usage problems exit 2; malformed measurement data exits 3.
    return disperse->parsed() ? 2 : 3;
  } catch (const lbaw::NonMonotoneFrequency& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const lbaw::NoResonanceFound& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const lbaw::MissingMaterial& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const lbaw::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lbaw::FitDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const lbaw::EigSolverFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
