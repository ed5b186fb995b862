#pragma once

#include <vector>

#include "wsdec/encoders.hpp"
#include "wsdec/segment.hpp"

namespace wsdec {

// Multi-scale grid of candidate segments. For a scale w the centers run from
// w/2 to 1 - w/2 in steps of w/2. Anchors are ordered coarse-to-fine, then by
// ascending center.
struct AnchorSet {
  std::vector<TemporalSegment> anchors;
  std::vector<double> scales;

  std::size_t size() const { return anchors.size(); }
};

// Throws std::invalid_argument for an empty or non-descending scale list or
// scales outside (0, 1].
AnchorSet build_anchor_grid(const std::vector<double>& scales);

struct LocalizerHead {
  Parameter attn_caption;  // d x d, scores caption steps against the video summary
  Parameter attn_video;    // d x d, scores video steps against the caption summary
  Parameter fuse_w;        // 2d x d
  Parameter fuse_b;        // 1 x d
  Parameter cls_w;         // 3d x N_a
  Parameter cls_b;         // 1 x N_a
  Parameter reg_w;         // 3d x 2
  Parameter reg_b;         // 1 x 2
  // Optional: the video attention values become h_t + time_encoding(t) time_w,
  // so the pooled vector can say where it looked. Scores still use h_t only.
  std::size_t time_features = 0;
  Parameter time_w;  // time_features x d, empty when time_features = 0

  static LocalizerHead init(std::size_t hidden, std::size_t num_anchors, Rng& rng,
                            std::size_t time_features = 0, double attention_init = 1.0);
};

struct HeadVars {
  Var attn_caption, attn_video, fuse_w, fuse_b, cls_w, cls_b, reg_w, reg_b;
  std::size_t time_features = 0;
  Var time_w;
};

template <class P>
HeadVars bind_head(Tape& t, P& p) {
  HeadVars v{bind_param(t, p.attn_caption), bind_param(t, p.attn_video), bind_param(t, p.fuse_w),
             bind_param(t, p.fuse_b),       bind_param(t, p.cls_w),      bind_param(t, p.cls_b),
             bind_param(t, p.reg_w),        bind_param(t, p.reg_b),
             p.time_features,               Var{}};
  if (p.time_features > 0) v.time_w = bind_param(t, p.time_w);
  return v;
}

struct CrossAttention {
  Var f_c;             // 1 x d, caption steps pooled by the video summary
  Var f_v;             // 1 x d, video steps pooled by the caption summary
  Var caption_weights; // 1 x T_c
  Var video_weights;   // 1 x T_v
};

CrossAttention crossing_attention(const EncodedSequence& video, const EncodedSequence& caption,
                                  const HeadVars& head);

// [f_c + f_v | f_c * f_v | FC(f_c, f_v)], 1 x 3d.
Var fuse_features(Var f_c, Var f_v, const HeadVars& head);

struct Localization {
  Var segment;        // 1 x 2 (m, w)
  Var anchor_logits;  // 1 x N_a
  Var delta;          // 1 x 2 (dm, dw)
  std::size_t anchor_index = 0;

  TemporalSegment value() const { return {segment.value()[0], segment.value()[1]}; }
};

// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

// Squashes raw regression outputs into (-w_a/2, +w_a/2) per component.
Var bound_delta(Var regression, double anchor_width);

// anchor + delta, with the width clamped into [1e-3, 1].
Var apply_delta(Var delta, const TemporalSegment& anchor);

Localization localize(const EncodedSequence& video, const EncodedSequence& caption,
                      const HeadVars& head, const AnchorSet& anchors);

}  // namespace wsdec
