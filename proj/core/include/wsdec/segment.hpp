#pragma once

#include <utility>

namespace wsdec {

// Normalized temporal segment: center m and width w, both relative to the
// video length. Stored unclamped; consumers clamp endpoints at use.
struct TemporalSegment {
  double m = 0.5;
  double w = 1.0;

  double start() const { return m - 0.5 * w; }
  double end() const { return m + 0.5 * w; }

  friend bool operator==(const TemporalSegment&, const TemporalSegment&) = default;
};

// Endpoints clamped to [0, 1].
std::pair<double, double> clamped_bounds(const TemporalSegment& s);

// True when the clamped interval has positive length.
bool is_valid(const TemporalSegment& s);

// Forces a segment into a valid one: center into [0, 1], width into
// [min_width, 1].
TemporalSegment clamp_segment(const TemporalSegment& s, double min_width = 1e-3);

TemporalSegment segment_from_bounds(double start, double end);

// Converts wall-clock timestamps to a normalized segment.
TemporalSegment segment_from_seconds(double start_s, double end_s, double duration_s);

// Clamped segment endpoints in seconds.
std::pair<double, double> segment_to_seconds(const TemporalSegment& s, double duration_s);

// Temporal intersection over union of the clamped intervals.
double tiou(const TemporalSegment& a, const TemporalSegment& b);

}  // namespace wsdec
