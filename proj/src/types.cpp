#include "nvmag/types.hpp"

#include <sstream>

namespace nvmag {

const char* to_string(Frame frame) { return frame == Frame::Crystal ? "crystal" : "lab"; }

const char* to_string(AxisLabel label) {
  switch (label) {
    case AxisLabel::InPlane:
      return "in_plane";
    case AxisLabel::OutOfPlaneInward:
      return "out_of_plane_inward";
    case AxisLabel::OutOfPlaneOutward:
      return "out_of_plane_outward";
  }
  return "?";
}

FieldVector::FieldVector(const Vec3& tesla, Frame frame) : b_(tesla), frame_(frame) {
  if (!b_.allFinite()) throw_invalid("field vector has non-finite components");
}

void require_frame(const FieldVector& v, Frame expected, const char* what) {
  if (v.frame() != expected) {
    std::ostringstream os;
    os << what << ": expected " << to_string(expected) << "-frame field, got "
       << to_string(v.frame());
    throw_invalid(os.str());
  }
}

void require_same_frame(const FieldVector& a, const FieldVector& b) {
  if (a.frame() != b.frame()) {
    std::ostringstream os;
    os << "frame mismatch: " << to_string(a.frame()) << " vs " << to_string(b.frame());
    throw_invalid(os.str());
  }
}

FieldVector operator+(const FieldVector& a, const FieldVector& b) {
  require_same_frame(a, b);
  return FieldVector(a.tesla() + b.tesla(), a.frame());
}

FieldVector operator-(const FieldVector& a, const FieldVector& b) {
  require_same_frame(a, b);
  return FieldVector(a.tesla() - b.tesla(), a.frame());
}

void SpinParams::validate() const {
  if (!(d_hz > 0.0) || !std::isfinite(d_hz)) throw_invalid("spin params: d_hz must be > 0");
  if (!(e_hz >= 0.0) || !std::isfinite(e_hz)) throw_invalid("spin params: e_hz must be >= 0");
  if (!(e_hz < d_hz)) throw_invalid("spin params: e_hz must be < d_hz");
  if (!(gamma_hz_per_t > 0.0) || !std::isfinite(gamma_hz_per_t))
    throw_invalid("spin params: gamma_hz_per_t must be > 0");
}

ResonancePair::ResonancePair(double a, double b) {
  if (!std::isfinite(a) || !std::isfinite(b)) throw_invalid("resonance pair: non-finite frequency");
  nu1_hz = std::min(a, b);
  nu2_hz = std::max(a, b);
  if (!(nu1_hz > 0.0)) throw_invalid("resonance pair: frequencies must be positive");
}

std::size_t CrystalGeometry::out_of_plane_sibling(std::size_t index) const {
  if (index >= axes.size() || !is_out_of_plane(labels[index]))
    throw_invalid("axis " + std::to_string(index) + " is not an out-of-plane axis");
  for (std::size_t i = 0; i < axes.size(); ++i)
    if (i != index && is_out_of_plane(labels[i])) return i;
  throw_invalid("geometry has a single out-of-plane axis");
}

}  // namespace nvmag
