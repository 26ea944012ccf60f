#include "lbaw/dispersion.hpp"

#include <cmath>

#include "doctest.h"
#include "lbaw/errors.hpp"

#ifndef LBAW_DATA_DIR
#define LBAW_DATA_DIR "data"
#endif

using namespace lbaw;

namespace {

DispersionPoint make_point(double ratio, double kt2, double eta) {
  DispersionPoint p;
  p.wm_wp = ratio;
  p.label = {ModeType::S0, 1};
  p.fs = 1e9;
  p.fp = 1e9 / std::sqrt(1.0 - kt2);
  p.kt2 = kt2;
  p.eta = eta;
  p.mac = 0.99;
  return p;
}

SweepConfig small_config() {
  SweepConfig cfg;
  cfg.geometry = {100e-9, 80e-9, 2e-6, 0.0};
  cfg.material_db =
      load_material_file(std::string(LBAW_DATA_DIR) + "/materials.txt");
  cfg.runs = {{"SH0", EulerAngles(-90, -90, -10)}};
  cfg.ratios = {0.3, 0.5, 0.8};
  cfg.f_min = 1e8;
  cfg.f_max = 2.2e9;
  cfg.n_modes = 40;
  cfg.nz = 5;
  cfg.nx_per_micron = 6.0;
  return cfg;
}

}  // namespace

TEST_CASE("kt2 formula") {
  CHECK(kt2_from_pair(7e8, 7e8) == 0.0);
  CHECK(kt2_from_pair(6e8, 7e8) ==
        doctest::Approx(1.0 - 36.0 / 49.0).epsilon(1e-15));
  CHECK(kt2_from_pair(6e8, 7e8, Kt2Formula::Berlincourt) ==
        doctest::Approx((M_PI * M_PI / 8.0) * (1.0 - 36.0 / 49.0))
            .epsilon(1e-15));
  CHECK_THROWS_AS(kt2_from_pair(7e8, 6e8), DomainError);
  CHECK_THROWS_AS(kt2_from_pair(0.0, 6e8), DomainError);
  CHECK_THROWS_AS(kt2_from_pair(-1.0, 6e8), DomainError);

  // Monotone in fp/fs.
  double prev = -1.0;
  for (double fp = 6e8; fp < 9e8; fp += 1e7) {
    const double v = kt2_from_pair(6e8, fp);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("find optimum") {
  SUBCASE("monotone sequence returns the endpoint") {
    std::vector<DispersionPoint> pts{make_point(0.1, 0.1, 0.9),
                                     make_point(0.2, 0.2, 0.9),
                                     make_point(0.3, 0.3, 0.9)};
    CHECK(find_optimum(pts).wm_wp == 0.3);
  }

  SUBCASE("kt2 tie broken toward higher eta, then smaller ratio") {
    std::vector<DispersionPoint> pts{make_point(0.1, 0.3, 0.8),
                                     make_point(0.2, 0.3, 0.95),
                                     make_point(0.3, 0.1, 0.99)};
    CHECK(find_optimum(pts).wm_wp == 0.2);

    std::vector<DispersionPoint> pts2{make_point(0.1, 0.3, 0.9),
                                      make_point(0.2, 0.3, 0.9),
                                      make_point(0.3, 0.1, 0.9)};
    CHECK(find_optimum(pts2).wm_wp == 0.1);
  }

  SUBCASE("too few points") {
    std::vector<DispersionPoint> pts{make_point(0.1, 0.1, 0.9),
                                     make_point(0.2, 0.2, 0.9)};
    CHECK_THROWS_AS(find_optimum(pts), InsufficientData);
  }
}

TEST_CASE("csv round trip") {
  SUBCASE("empty input gives header only") {
    CHECK(export_csv({}) == "wm_wp,mode,order,fs_hz,fp_hz,kt2,eta,mac\n");
  }

  SUBCASE("one point gives two lines") {
    const auto text = export_csv({make_point(0.15, 0.25, 0.95)});
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  }

  SUBCASE("parse(export(points)) == points") {
    std::vector<DispersionPoint> pts;
    pts.push_back(make_point(0.1, 0.2847362473621837, 0.91236419823));
    pts.push_back(make_point(1.0 / 3.0, 0.13, 0.99));
    pts.back().label = {ModeType::SH0, 3};
    pts.back().mac = 0.83521;
    const auto back = parse_csv(export_csv(pts));
    REQUIRE(back.size() == pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
      CHECK(back[i].wm_wp == pts[i].wm_wp);
      CHECK(back[i].label == pts[i].label);
      CHECK(back[i].fs == pts[i].fs);
      CHECK(back[i].fp == pts[i].fp);
      CHECK(back[i].kt2 == pts[i].kt2);
      CHECK(back[i].eta == pts[i].eta);
      CHECK(back[i].mac == pts[i].mac);
    }
  }

  SUBCASE("malformed input") {
    CHECK_THROWS_AS(parse_csv("bogus\n"), ParseError);
    CHECK_THROWS_AS(
        parse_csv("wm_wp,mode,order,fs_hz,fp_hz,kt2,eta,mac\n0.1,S0\n"),
        ParseError);
  }
}

TEST_CASE("sweep config parser") {
  const std::string base = LBAW_DATA_DIR;
  SUBCASE("full config") {
    const auto cfg = load_sweep_config(
        "material_db materials.txt\n"
        "piezo linbo3\nelectrode alsicu\n"
        "t_film 100e-9\nt_recess 80e-9\nw_p 2e-6\n"
        "ratios log 0.05 1.5 30\n"
        "family S0 -90 -90 30\nfamily SH0 -90 -90 -10\n"
        "f_min 5e7\nf_max 3e9\nnz 10\nnx_per_micron 12\n"
        "kt2_formula effective\n",
        base);
    CHECK(cfg.ratios.size() == 30);
    CHECK(cfg.ratios.front() == doctest::Approx(0.05));
    CHECK(cfg.ratios.back() == doctest::Approx(1.5));
    CHECK(cfg.runs.size() == 2);
    CHECK(cfg.material_db.count("linbo3") == 1);
  }

  SUBCASE("line-numbered errors") {
    try {
      load_sweep_config("material_db materials.txt\nbogus_key 1\n", base);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line_number == 2);
    }
  }

  SUBCASE("missing family") {
    CHECK_THROWS_AS(load_sweep_config("material_db materials.txt\n", base),
                    ParseError);
  }
}

TEST_CASE("sweep pipeline on a coarse grid") {
  auto cfg = small_config();
  const auto results = run_sweep(cfg);
  REQUIRE(results.size() == 1);
  const auto& run = results[0];
  CHECK(run.warnings.empty());

  // An SH0 fundamental family exists with physical kt2 at every ratio.
  const FamilyCurve* sh0 = nullptr;
  for (const auto& fam : run.families)
    if (fam.family.type == ModeType::SH0 && fam.family.order == 1)
      sh0 = &fam;
  REQUIRE(sh0 != nullptr);
  CHECK(sh0->points.size() == cfg.ratios.size());
  for (const auto& p : sh0->points) {
    CHECK(p.kt2 > 0.0);
    CHECK(p.kt2 < 1.0);
    CHECK(p.fp >= p.fs);
    CHECK(p.eta >= 0.0);
    CHECK(p.eta <= 1.0);
    CHECK(p.mac >= 0.8);
  }

  // Points per family never exceed the grid length and come sorted.
  for (const auto& fam : run.families) {
    CHECK(fam.points.size() <= cfg.ratios.size());
    for (size_t i = 1; i < fam.points.size(); ++i)
      CHECK(fam.points[i].wm_wp > fam.points[i - 1].wm_wp);
  }

  SUBCASE("permuting the ratio grid leaves the output unchanged") {
    auto cfg2 = cfg;
    cfg2.ratios = {0.8, 0.3, 0.5};
    const auto results2 = run_sweep(cfg2);
    REQUIRE(results2[0].families.size() == run.families.size());
    const auto csv1 = [&] {
      std::vector<DispersionPoint> all;
      for (const auto& f : run.families)
        all.insert(all.end(), f.points.begin(), f.points.end());
      return export_csv(all);
    }();
    const auto csv2 = [&] {
      std::vector<DispersionPoint> all;
      for (const auto& f : results2[0].families)
        all.insert(all.end(), f.points.begin(), f.points.end());
      return export_csv(all);
    }();
    CHECK(csv1 == csv2);
  }

  SUBCASE("two workers produce identical output") {
    auto cfg2 = cfg;
    cfg2.jobs = 2;
    const auto results2 = run_sweep(cfg2);
    REQUIRE(results2[0].families.size() == run.families.size());
    for (size_t f = 0; f < run.families.size(); ++f) {
      REQUIRE(results2[0].families[f].points.size() ==
              run.families[f].points.size());
      for (size_t i = 0; i < run.families[f].points.size(); ++i)
        CHECK(results2[0].families[f].points[i].fs ==
              run.families[f].points[i].fs);
    }
  }
}

TEST_CASE("coupling vanishes with scaled piezo coefficients") {
  auto cfg = small_config();
  cfg.ratios = {0.3, 0.5, 0.8};
  cfg.material_db["linbo3"].e.setZero();  // s = 0
  const auto results = run_sweep(cfg);
  for (const auto& fam : results[0].families)
    for (const auto& p : fam.points) CHECK(p.kt2 < 1e-9);
}

TEST_CASE("electrode-free reference point at ratio zero") {
  auto cfg = small_config();
  cfg.ratios = {0.0, 0.3, 0.5};
  const auto results = run_sweep(cfg);
  REQUIRE(results.size() == 1);
  bool saw_zero_point = false;
  for (const auto& fam : results[0].families)
    for (const auto& p : fam.points)
      if (p.wm_wp == 0.0) {
        saw_zero_point = true;
        CHECK(p.kt2 < 1e-9);  // nothing drives an electrode-free cell
      }
  CHECK(saw_zero_point);
}

TEST_CASE("per-point failures become warnings and gaps") {
  auto cfg = small_config();
  cfg.nz = 3;  // too coarse: every point fails, sweep must not throw
  const auto results = run_sweep(cfg);
  CHECK(results[0].warnings.size() == cfg.ratios.size());
  CHECK(results[0].families.empty());
}
