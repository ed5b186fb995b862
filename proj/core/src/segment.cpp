#include "wsdec/segment.hpp"

#include <algorithm>

namespace wsdec {

std::pair<double, double> clamped_bounds(const TemporalSegment& s) {
  return {std::clamp(s.start(), 0.0, 1.0), std::clamp(s.end(), 0.0, 1.0)};
}

bool is_valid(const TemporalSegment& s) {
  const auto [lo, hi] = clamped_bounds(s);
  return s.w > 0.0 && hi > lo;
}

TemporalSegment clamp_segment(const TemporalSegment& s, double min_width) {
  return {std::clamp(s.m, 0.0, 1.0), std::clamp(s.w, min_width, 1.0)};
}

TemporalSegment segment_from_bounds(double start, double end) {
  return {0.5 * (start + end), end - start};
}

TemporalSegment segment_from_seconds(double start_s, double end_s, double duration_s) {
  return {0.5 * (start_s + end_s) / duration_s, (end_s - start_s) / duration_s};
}

std::pair<double, double> segment_to_seconds(const TemporalSegment& s, double duration_s) {
  const auto [lo, hi] = clamped_bounds(s);
  return {lo * duration_s, hi * duration_s};
}

double tiou(const TemporalSegment& a, const TemporalSegment& b) {
  const auto [a0, a1] = clamped_bounds(a);
  const auto [b0, b1] = clamped_bounds(b);
  const double inter = std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
  const double union_len = (a1 - a0) + (b1 - b0) - inter;
  return union_len > 0.0 ? inter / union_len : 0.0;
}

}  // namespace wsdec
