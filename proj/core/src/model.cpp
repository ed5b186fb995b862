#include "wsdec/model.hpp"

#include <stdexcept>
#include <string>

namespace wsdec {

void ModelConfig::validate() const {
  if (feature_dim == 0) throw std::invalid_argument("model.feature_dim must be positive");
  if (hidden == 0) throw std::invalid_argument("model.hidden must be positive");
  if (vocab_size <= static_cast<std::size_t>(tokens::kNumSpecials)) {
    throw std::invalid_argument("model.vocab_size must exceed the 4 special tokens");
  }
  if (!(attention_init > 0.0)) throw std::invalid_argument("model.attention_init must be positive");
  if (time_features % 2 != 0) throw std::invalid_argument("model.time_features must be even");
  if (max_caption_len < 2) throw std::invalid_argument("model.max_caption_len must be at least 2");
  mask.validate();
  build_anchor_grid(anchor_scales);
}

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Model m;
  m.config = config;
  m.anchors = build_anchor_grid(config.anchor_scales);
  m.encoder = EncoderParams::init(config.feature_dim, config.hidden, config.vocab_size, rng);
  m.head = LocalizerHead::init(config.hidden, m.anchors.size(), rng, config.time_features,
                               config.attention_init);
  m.decoder = DecoderParams::init(config.feature_dim, config.hidden, config.vocab_size, rng);
  return m;
}

namespace {

template <class M, class P>
std::vector<P*> collect(M& m) {
  auto gru = [](auto& g) { return std::vector<P*>{&g.w_x, &g.b, &g.u_zr, &g.u_n}; };
  std::vector<P*> out{&m.encoder.video_proj_w, &m.encoder.video_proj_b};
  for (P* p : gru(m.encoder.video_gru)) out.push_back(p);
  out.push_back(&m.encoder.embedding);
  for (P* p : gru(m.encoder.caption_gru)) out.push_back(p);
  for (P* p : {&m.head.attn_caption, &m.head.attn_video, &m.head.fuse_w, &m.head.fuse_b,
               &m.head.cls_w, &m.head.cls_b, &m.head.reg_w, &m.head.reg_b}) {
    out.push_back(p);
  }
  if (m.head.time_features > 0) out.push_back(&m.head.time_w);
  out.push_back(&m.decoder.ctx_w);
  out.push_back(&m.decoder.ctx_b);
  for (P* p : gru(m.decoder.gru)) out.push_back(p);
  out.push_back(&m.decoder.out_w);
  out.push_back(&m.decoder.out_b);
  return out;
}

}  // namespace

std::vector<Parameter*> Model::parameters() { return collect<Model, Parameter>(*this); }

std::vector<const Parameter*> Model::parameters() const {
  return collect<const Model, const Parameter>(*this);
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.size();
  return n;
}

Var segment_var(Tape& t, const TemporalSegment& s) {
  Matrix m(1, 2);
  m[0] = s.m;
  m[1] = s.w;
  return t.constant(std::move(m));
}

DecodeResult caption_segment(const ModelVars& vars, const ModelConfig& config,
                             const VideoFeatures& features, const EncodedSequence& video,
                             Var segment, const DecodeOptions& options, bool* fallback) {
  const TemporalSegment s{segment.value()[0], segment.value()[1]};
  Var context = masked_pool(features, segment, config.mask, fallback);
  Var h0 = ad::row(video.hiddens, decoder_seed_index(s, video.length));
  return decode(vars.decoder, context, h0, options);
}

Localization localize_caption(Tape& t, const ModelVars& vars, const AnchorSet& anchors,
                              const EncodedSequence& video, const CaptionTokens& caption) {
  const EncodedSequence c = encode_caption(t, vars.encoder, caption.ids);
  return localize(video, c, vars.head, anchors);
}

}  // namespace wsdec
