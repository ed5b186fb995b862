#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "wsdec/encoders.hpp"
#include "wsdec/segment.hpp"

namespace wsdec {

struct MaskConfig {
  double k = 50.0;  // sharpness on normalized time

  void validate() const;
};

// Soft window over normalized time t:
//   M(t, S) = sig(K (t - (m - w/2))) - sig(K (t - (m + w/2)))
// close to 1 inside [m - w/2, m + w/2] and close to 0 outside.
double soft_mask(double t, const TemporalSegment& segment, const MaskConfig& cfg);

struct PooledContext {
  std::vector<double> context;  // feature_dim
  bool fallback = false;        // mask mass vanished; plain mean used instead
};

// Mask-weighted mean of the feature rows, step t at normalized time t/T.
PooledContext masked_pool(const VideoFeatures& features, const TemporalSegment& segment,
                          const MaskConfig& cfg);

// Differentiable form: `segment` is a 1x2 (m, w) node; returns 1 x feature_dim.
Var masked_pool(const VideoFeatures& features, Var segment, const MaskConfig& cfg,
                bool* fallback = nullptr);

// Index (0-based) of the video hidden state that seeds the decoder: the
// segment end, rounded to the nearest step and clamped to the video.
std::size_t decoder_seed_index(const TemporalSegment& segment, std::size_t steps);

struct DecoderParams {
  Parameter ctx_w;  // k x d
  Parameter ctx_b;  // 1 x d
  GruParams gru;    // input 2d: [token embedding | projected context]
  Parameter out_w;  // d x V
  Parameter out_b;  // 1 x V

  static DecoderParams init(std::size_t feature_dim, std::size_t hidden, std::size_t vocab_size,
                            Rng& rng);
};

struct DecoderVars {
  Var ctx_w, ctx_b;
  GruVars gru;
  Var out_w, out_b;
  Var embedding;  // shared with the caption encoder
};

template <class P>
DecoderVars bind_decoder(Tape& t, P& p, Var embedding) {
  return {bind_param(t, p.ctx_w), bind_param(t, p.ctx_b), bind_gru(t, p.gru),
          bind_param(t, p.out_w), bind_param(t, p.out_b), embedding};
}

enum class DecodeMode { kTeacherForced, kGreedy, kSampled };

struct DecodeOptions {
  DecodeMode mode = DecodeMode::kGreedy;
  const CaptionTokens* targets = nullptr;  // teacher forcing only
  std::size_t max_len = 30;                // including BOS and EOS
  double temperature = 1.0;                // sampled only
  std::uint64_t seed = 0;                  // sampled only
};

struct DecodeResult {
  // Teacher forcing: one row per predicted position (caption length - 1),
  // aligned with targets ids[1..]. Empty for free-running modes.
  Var logits;
  CaptionTokens tokens;
};

DecodeResult decode(const DecoderVars& dec, Var context, Var init_hidden,
                    const DecodeOptions& options);

// Mean per-token log-likelihood of `caption` under teacher forcing, once per
// row pair of `contexts` (N x k) and `init_hidden` (N x d). Tape-free batched
// forward for scoring many segments at once; matches decode().
std::vector<double> caption_log_likelihoods(const DecoderParams& dec, const Matrix& embedding,
                                            const Matrix& contexts, const Matrix& init_hidden,
                                            const CaptionTokens& caption);

}  // namespace wsdec
