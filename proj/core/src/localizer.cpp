#include "wsdec/localizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <tuple>

namespace wsdec {

AnchorSet build_anchor_grid(const std::vector<double>& scales) {
  if (scales.empty()) throw std::invalid_argument("anchor grid needs at least one scale");
  AnchorSet set;
  set.scales = scales;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const double w = scales[i];
    if (!(w > 0.0 && w <= 1.0)) throw std::invalid_argument("anchor scales must lie in (0, 1]");
    if (i > 0 && !(w < scales[i - 1])) {
      throw std::invalid_argument("anchor scales must be strictly descending");
    }
    const double stride = 0.5 * w;
    const auto count = static_cast<std::size_t>(std::floor((1.0 - w) / stride + 1e-9)) + 1;
    for (std::size_t j = 0; j < count; ++j) {
      set.anchors.push_back({stride + static_cast<double>(j) * stride, w});
    }
  }
  return set;
}

LocalizerHead LocalizerHead::init(std::size_t hidden, std::size_t num_anchors, Rng& rng,
                                  std::size_t time_features, double attention_init) {
  const auto d = static_cast<double>(hidden);
  // uniform_init bounds by 1/sqrt(fan); a smaller fan widens the bound.
  const double attn_fan = d / (attention_init * attention_init);
  LocalizerHead h;
  h.attn_caption = Parameter("head.attn_caption", uniform_init(hidden, hidden, attn_fan, rng));
  h.attn_video = Parameter("head.attn_video", uniform_init(hidden, hidden, attn_fan, rng));
  h.fuse_w = Parameter("head.fuse.w", uniform_init(2 * hidden, hidden, d, rng));
  h.fuse_b = Parameter("head.fuse.b", Matrix(1, hidden));
  h.cls_w = Parameter("head.cls.w", uniform_init(3 * hidden, num_anchors, d, rng));
  h.cls_b = Parameter("head.cls.b", Matrix(1, num_anchors));
  // Zero regressor: every localization starts exactly on its anchor.
  h.reg_w = Parameter("head.reg.w", Matrix(3 * hidden, 2));
  h.reg_b = Parameter("head.reg.b", Matrix(1, 2));
  h.time_features = time_features;
  if (time_features > 0) {
    h.time_w = Parameter("head.time.w", uniform_init(time_features, hidden, attn_fan, rng));
  }
  return h;
}

namespace {

// softmax(query A keys^T) values
std::pair<Var, Var> attend(Var query, Var bilinear, Var keys, Var values) {
  Var weights = ad::softmax_rows(ad::matmul_nt(ad::matmul(query, bilinear), keys));
  return {ad::matmul(weights, values), weights};
}

}  // namespace

CrossAttention crossing_attention(const EncodedSequence& video, const EncodedSequence& caption,
                                  const HeadVars& head) {
  if (video.outputs.cols() != caption.outputs.cols()) {
    throw std::invalid_argument("crossing_attention: video width " +
                                std::to_string(video.outputs.cols()) + " vs caption width " +
                                std::to_string(caption.outputs.cols()));
  }
  CrossAttention a;
  std::tie(a.f_c, a.caption_weights) =
      attend(video.final_hidden, head.attn_caption, caption.outputs, caption.outputs);
  Var values = video.outputs;
  if (head.time_features > 0) {
    Tape& t = *video.outputs.tape();
    Var te = t.constant(time_encoding(video.outputs.rows(), head.time_features));
    values = ad::add(values, ad::matmul(te, head.time_w));
  }
  std::tie(a.f_v, a.video_weights) =
      attend(caption.final_hidden, head.attn_video, video.outputs, values);
  return a;
}

Var fuse_features(Var f_c, Var f_v, const HeadVars& head) {
  const Var pair[] = {f_c, f_v};
  Var proj = ad::add_row(ad::matmul(ad::concat_cols(pair), head.fuse_w), head.fuse_b);
  const Var parts[] = {ad::add(f_c, f_v), ad::mul(f_c, f_v), proj};
  return ad::concat_cols(parts);
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Var bound_delta(Var regression, double anchor_width) {
  return ad::scale(ad::tanh(regression), 0.5 * anchor_width);
}

Var apply_delta(Var delta, const TemporalSegment& anchor) {
  Tape& t = *delta.tape();
  Matrix base(1, 2);
  base[0] = anchor.m;
  base[1] = anchor.w;
  Var raw = ad::add(t.constant(std::move(base)), delta);
  const Var parts[] = {ad::slice_cols(raw, 0, 1), ad::clamp(ad::slice_cols(raw, 1, 2), 1e-3, 1.0)};
  return ad::concat_cols(parts);
}

Localization localize(const EncodedSequence& video, const EncodedSequence& caption,
                      const HeadVars& head, const AnchorSet& anchors) {
  if (head.cls_w.cols() != anchors.size()) {
    throw std::invalid_argument("localize: classifier has " + std::to_string(head.cls_w.cols()) +
                                " outputs for " + std::to_string(anchors.size()) + " anchors");
  }
  const CrossAttention att = crossing_attention(video, caption, head);
  Var fused = fuse_features(att.f_c, att.f_v, head);
  Localization out;
  out.anchor_logits = ad::add_row(ad::matmul(fused, head.cls_w), head.cls_b);
  out.anchor_index = argmax(out.anchor_logits.value().values());
  const TemporalSegment& anchor = anchors.anchors[out.anchor_index];
  Var regression = ad::add_row(ad::matmul(fused, head.reg_w), head.reg_b);
  out.delta = bound_delta(regression, anchor.w);
  out.segment = apply_delta(out.delta, anchor);
  return out;
}

}  // namespace wsdec
