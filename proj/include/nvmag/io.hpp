#pragma once

#include <iosfwd>
#include <string>

#include "nvmag/sources.hpp"
#include "nvmag/spin_model.hpp"

namespace nvmag {

// Spectrum CSV: header "freq_hz,signal,counts_per_s", LF endings, %.17g.
void write_spectrum_csv(std::ostream& os, const OdmrSpectrum& spec);
void write_spectrum_csv(const std::string& path, const OdmrSpectrum& spec);

// Parse errors carry the 1-based line number.
OdmrSpectrum read_spectrum_csv(std::istream& is, const std::string& name = "<stream>");
OdmrSpectrum read_spectrum_csv(const std::string& path);

// Field-map CSV: y_m,z_m,bx_t,by_t,bz_t.
void write_field_map_csv(std::ostream& os, const FieldMap& map);
void write_field_map_csv(const std::string& path, const FieldMap& map);

std::string format_double(double v);

}  // namespace nvmag
