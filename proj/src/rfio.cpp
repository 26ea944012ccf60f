#include "lbaw/rfio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lbaw/errors.hpp"

namespace lbaw {

namespace {

using cplx = std::complex<double>;

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  return s;
}

cplx pair_to_complex(double a, double b, TouchstoneFormat fmt) {
  switch (fmt) {
    case TouchstoneFormat::RI:
      return {a, b};
    case TouchstoneFormat::MA:
      return std::polar(a, b * M_PI / 180.0);
    case TouchstoneFormat::DB:
      return std::polar(std::pow(10.0, a / 20.0), b * M_PI / 180.0);
  }
  return {};
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TwoPortData parse_touchstone(const std::string& text) {
  TwoPortData d;
  double f_scale = 1e9;  // Touchstone default unit is GHz
  TouchstoneFormat fmt = TouchstoneFormat::MA;
  bool have_option_line = false;

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto bang = line.find('!');
    if (bang != std::string::npos) line.erase(bang);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;

    if (tok[0] == '[')
      throw ParseError("Touchstone v2 keyword '" + tok +
                           "' not supported (v1 only)",
                       line_no);

    if (tok == "#") {
      if (have_option_line)
        throw ParseError("multiple option lines", line_no);
      if (!d.f.empty())
        throw ParseError("option line after data rows", line_no);
      have_option_line = true;
      std::string word;
      bool expect_z0 = false;
      while (ls >> word) {
        const std::string w = upper(word);
        if (expect_z0) {
          try {
            d.z0 = std::stod(w);
          } catch (...) {
            throw ParseError("bad reference impedance '" + word + "'",
                             line_no);
          }
          expect_z0 = false;
        } else if (w == "HZ") {
          f_scale = 1.0;
        } else if (w == "KHZ") {
          f_scale = 1e3;
        } else if (w == "MHZ") {
          f_scale = 1e6;
        } else if (w == "GHZ") {
          f_scale = 1e9;
        } else if (w == "RI") {
          fmt = TouchstoneFormat::RI;
        } else if (w == "MA") {
          fmt = TouchstoneFormat::MA;
        } else if (w == "DB") {
          fmt = TouchstoneFormat::DB;
        } else if (w == "S") {
          // parameter type: S is the only one supported
        } else if (w == "Y" || w == "Z" || w == "H" || w == "G") {
          throw ParseError("only S-parameter files are supported", line_no);
        } else if (w == "R") {
          expect_z0 = true;
        } else {
          throw ParseError("unknown option token '" + word + "'", line_no);
        }
      }
      if (expect_z0) throw ParseError("option 'R' without impedance", line_no);
      if (!(d.z0 > 0)) throw ParseError("reference impedance must be > 0",
                                        line_no);
      continue;
    }

    // Data row: f + 4 complex pairs.
    std::vector<double> vals;
    {
      std::istringstream row(line);
      std::string t;
      while (row >> t) {
        char* end = nullptr;
        const double v = std::strtod(t.c_str(), &end);
        if (end != t.c_str() + t.size())
          throw ParseError("bad number '" + t + "'", line_no);
        vals.push_back(v);
      }
    }
    if (vals.size() != 9)
      throw ParseError("expected 9 values per 2-port data row, got " +
                           std::to_string(vals.size()),
                       line_no);
    const double f = vals[0] * f_scale;
    if (!d.f.empty() && f <= d.f.back())
      throw NonMonotoneFrequency(
          "frequencies must be strictly increasing (line " +
          std::to_string(line_no) + ")");
    SMatrix s;
    // Touchstone 2-port order: S11 S21 S12 S22.
    s(0, 0) = pair_to_complex(vals[1], vals[2], fmt);
    s(1, 0) = pair_to_complex(vals[3], vals[4], fmt);
    s(0, 1) = pair_to_complex(vals[5], vals[6], fmt);
    s(1, 1) = pair_to_complex(vals[7], vals[8], fmt);
    d.f.push_back(f);
    d.s.push_back(s);
  }
  if (d.f.empty()) throw ParseError("no data rows found");
  return d;
}

TwoPortData parse_touchstone_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_touchstone(ss.str());
}

std::string write_touchstone(const TwoPortData& d, TouchstoneFormat fmt) {
  std::ostringstream out;
  out << "! 2-port S-parameter data\n";
  out << "# HZ S "
      << (fmt == TouchstoneFormat::RI ? "RI"
          : fmt == TouchstoneFormat::MA ? "MA" : "DB")
      << " R " << fmt17(d.z0) << "\n";
  const auto put = [&](const cplx& v) {
    switch (fmt) {
      case TouchstoneFormat::RI:
        out << " " << fmt17(v.real()) << " " << fmt17(v.imag());
        break;
      case TouchstoneFormat::MA:
        out << " " << fmt17(std::abs(v)) << " "
            << fmt17(std::arg(v) * 180.0 / M_PI);
        break;
      case TouchstoneFormat::DB:
        out << " " << fmt17(20.0 * std::log10(std::abs(v))) << " "
            << fmt17(std::arg(v) * 180.0 / M_PI);
        break;
    }
  };
  for (size_t i = 0; i < d.f.size(); ++i) {
    out << fmt17(d.f[i]);
    put(d.s[i](0, 0));
    put(d.s[i](1, 0));
    put(d.s[i](0, 1));
    put(d.s[i](1, 1));
    out << "\n";
  }
  return out.str();
}

YConversion s_to_y(const TwoPortData& d) {
  YConversion out;
  const Eigen::Matrix2cd eye = Eigen::Matrix2cd::Identity();
  for (size_t i = 0; i < d.f.size(); ++i) {
    const Eigen::Matrix2cd a = eye + d.s[i];
    const cplx det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    if (std::abs(det) < 1e-14) {
      out.warnings.push_back("singular (I+S) at point " + std::to_string(i) +
                             " (f = " + fmt17(d.f[i]) + " Hz); dropped");
      continue;
    }
    Eigen::Matrix2cd inv;
    inv << a(1, 1), -a(0, 1), -a(1, 0), a(0, 0);
    inv /= det;
    out.f.push_back(d.f[i]);
    out.y.push_back((eye - d.s[i]) * inv / d.z0);
  }
  return out;
}

SMatrix y_to_s(const Eigen::Matrix2cd& y, double z0) {
  const Eigen::Matrix2cd eye = Eigen::Matrix2cd::Identity();
  const Eigen::Matrix2cd a = eye + z0 * y;
  const cplx det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  Eigen::Matrix2cd inv;
  inv << a(1, 1), -a(0, 1), -a(1, 0), a(0, 0);
  inv /= det;
  return (eye - z0 * y) * inv;
}

ExtractedSpectrum extract_y12(const YConversion& y) {
  ExtractedSpectrum out;
  double max_dev = 0.0, max_y12 = 0.0;
  for (size_t i = 0; i < y.f.size(); ++i) {
    out.spectrum.f.push_back(y.f[i]);
    out.spectrum.y.push_back(-y.y[i](0, 1));
    max_dev = std::max(max_dev, std::abs(y.y[i](0, 1) - y.y[i](1, 0)));
    max_y12 = std::max(max_y12, std::abs(y.y[i](0, 1)));
  }
  if (max_y12 > 0 && max_dev > 0.01 * max_y12)
    out.warnings.push_back(
        "reciprocity violation: max |Y12 - Y21| = " + fmt17(max_dev) +
        " S (" + fmt17(100.0 * max_dev / max_y12) + "% of max |Y12|)");
  return out;
}

std::string write_admittance_csv(const AdmittanceSpectrum& s) {
  std::ostringstream out;
  out << "f_hz,re_y,im_y\n";
  for (size_t i = 0; i < s.f.size(); ++i)
    out << fmt17(s.f[i]) << "," << fmt17(s.y[i].real()) << ","
        << fmt17(s.y[i].imag()) << "\n";
  return out.str();
}

AdmittanceSpectrum parse_admittance_csv(const std::string& text) {
  AdmittanceSpectrum s;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (line_no == 1 && line.rfind("f_hz", 0) == 0) continue;
    double f, re, im;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &f, &re, &im) != 3)
      throw ParseError("expected 'f_hz,re_y,im_y'", line_no);
    if (!s.f.empty() && f <= s.f.back())
      throw NonMonotoneFrequency(
          "frequencies must be strictly increasing (line " +
          std::to_string(line_no) + ")");
    s.f.push_back(f);
    s.y.emplace_back(re, im);
  }
  if (s.f.empty()) throw ParseError("no data rows found");
  return s;
}

SMatrix series_element_s(const std::complex<double>& y_r, double z0) {
  Eigen::Matrix2cd y;
  y << y_r, -y_r, -y_r, y_r;
  return y_to_s(y, z0);
}

}  // namespace lbaw
