#include "nvmag/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace nvmag {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_spectrum_csv(std::ostream& os, const OdmrSpectrum& spec) {
  spec.validate(2);
  const bool counts = spec.counts_per_s.size() == spec.size();
  os << "freq_hz,signal,counts_per_s\n";
  for (std::size_t i = 0; i < spec.size(); ++i) {
    os << format_double(spec.freqs_hz[i]) << ',' << format_double(spec.signal[i]) << ','
       << format_double(counts ? spec.counts_per_s[i] : 0.0) << '\n';
  }
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw_io("cannot open for writing: " + path);
  return f;
}

void finish(std::ofstream& f, const std::string& path) {
  f.flush();
  if (!f) throw_io("write failed: " + path);
}

bool parse_field(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  out = std::strtod(begin, &end);
  return errno == 0 && end == begin + s.size() && std::isfinite(out);
}

}  // namespace

void write_spectrum_csv(const std::string& path, const OdmrSpectrum& spec) {
  auto f = open_out(path);
  write_spectrum_csv(f, spec);
  finish(f, path);
}

OdmrSpectrum read_spectrum_csv(std::istream& is, const std::string& name) {
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) -> void {
    throw_invalid(name + ":" + std::to_string(lineno) + ": " + why);
  };
  if (!std::getline(is, line)) {
    lineno = 1;
    fail("empty file");
  }
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "freq_hz,signal,counts_per_s") fail("expected header 'freq_hz,signal,counts_per_s'");

  OdmrSpectrum spec;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    double v[3];
    int k = 0;
    while (std::getline(ss, cell, ',')) {
      if (k == 3) fail("too many columns");
      if (!parse_field(cell, v[k])) fail("malformed number '" + cell + "'");
      ++k;
    }
    if (k != 3) fail("expected 3 columns, got " + std::to_string(k));
    if (!spec.freqs_hz.empty() && !(v[0] > spec.freqs_hz.back()))
      fail("frequencies must be strictly increasing");
    spec.freqs_hz.push_back(v[0]);
    spec.signal.push_back(v[1]);
    spec.counts_per_s.push_back(v[2]);
  }
  if (spec.size() < 8) {
    throw_invalid(name + ": spectrum needs at least 8 points, got " + std::to_string(spec.size()));
  }
  return spec;
}

OdmrSpectrum read_spectrum_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw_io("cannot open for reading: " + path);
  return read_spectrum_csv(f, path);
}

void write_field_map_csv(std::ostream& os, const FieldMap& map) {
  if (map.vectors.size() != map.grid.ny * map.grid.nz) throw_invalid("field map: vector count mismatch");
  const auto ys = map.grid.ys();
  const auto zs = map.grid.zs();
  os << "y_m,z_m,bx_t,by_t,bz_t\n";
  for (std::size_t k = 0; k < map.vectors.size(); ++k) {
    const auto& b = map.vectors[k];
    os << format_double(ys[k % map.grid.ny]) << ',' << format_double(zs[k / map.grid.ny]) << ','
       << format_double(b.bx()) << ',' << format_double(b.by()) << ',' << format_double(b.bz())
       << '\n';
  }
}

void write_field_map_csv(const std::string& path, const FieldMap& map) {
  auto f = open_out(path);
  write_field_map_csv(f, map);
  finish(f, path);
}

}  // namespace nvmag
