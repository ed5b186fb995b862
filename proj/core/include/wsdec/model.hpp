#pragma once

#include <cstdint>
#include <vector>

#include "wsdec/captioner.hpp"
#include "wsdec/encoders.hpp"
#include "wsdec/localizer.hpp"

namespace wsdec {

struct ModelConfig {
  std::size_t feature_dim = 32;
  std::size_t hidden = 512;
  std::size_t time_features = 0;  // even; 0 leaves the localizer without a time encoding
  double attention_init = 1.0;    // init bound of the head attention and time matrices, x 1/sqrt(d)
  std::size_t vocab_size = 64;
  std::vector<double> anchor_scales{1.0, 0.5, 0.25, 0.125};
  MaskConfig mask;
  std::size_t max_caption_len = 30;

  void validate() const;
};

// Localizer l(V, C) and caption generator g(V, S) with their shared encoders.
struct Model {
  ModelConfig config;
  AnchorSet anchors;
  EncoderParams encoder;
  LocalizerHead head;
  DecoderParams decoder;

  static Model init(const ModelConfig& config, std::uint64_t seed);

  // Every trainable tensor in a fixed declared order (checkpoint layout).
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
};

struct ModelVars {
  EncoderVars encoder;
  HeadVars head;
  DecoderVars decoder;
};

// Non-const models bind as trainable leaves, const models as constants.
template <class M>
ModelVars bind_model(Tape& t, M& m) {
  EncoderVars enc = bind_encoder(t, m.encoder);
  return {enc, bind_head(t, m.head), bind_decoder(t, m.decoder, enc.embedding)};
}

Var segment_var(Tape& t, const TemporalSegment& s);

// g(V, S): masked pooling of the raw features as context, decoder seeded by
// the video hidden state at the segment end.
DecodeResult caption_segment(const ModelVars& vars, const ModelConfig& config,
                             const VideoFeatures& features, const EncodedSequence& video,
                             Var segment, const DecodeOptions& options,
                             bool* fallback = nullptr);

// l(V, C) for a framed caption.
Localization localize_caption(Tape& t, const ModelVars& vars, const AnchorSet& anchors,
                              const EncodedSequence& video, const CaptionTokens& caption);

}  // namespace wsdec
