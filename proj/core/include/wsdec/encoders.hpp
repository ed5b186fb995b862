#pragma once

#include <span>
#include <vector>

#include "wsdec/autodiff.hpp"
#include "wsdec/data.hpp"
#include "wsdec/random.hpp"

namespace wsdec {

// Uniform(-1/sqrt(fan), 1/sqrt(fan)) matrix.
Matrix uniform_init(std::size_t rows, std::size_t cols, double fan, Rng& rng);

// Single-layer gated recurrent cell.
struct GruParams {
  Parameter w_x;   // in x 3d, gates [update | reset | candidate]
  Parameter b;     // 1 x 3d
  Parameter u_zr;  // d x 2d
  Parameter u_n;   // d x d

  static GruParams init(const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng);
  std::size_t hidden() const { return u_n.value.rows(); }
  std::size_t input() const { return w_x.value.rows(); }
};

struct GruVars {
  Var w_x, b, u_zr, u_n;
};

// Binds parameters as trainable leaves; a const Parameter binds as a constant.
inline Var bind_param(Tape& t, Parameter& p) { return t.param(p); }
inline Var bind_param(Tape& t, const Parameter& p) { return t.constant(p.value); }

template <class P>
GruVars bind_gru(Tape& t, P& p) {
  return {bind_param(t, p.w_x), bind_param(t, p.b), bind_param(t, p.u_zr), bind_param(t, p.u_n)};
}

// Runs the cell over every row of `inputs` (T x in) from `h0` (1 x d) and
// returns the T x d hidden states.
Var run_gru(const GruVars& gru, Var inputs, Var h0);

// Fixed sinusoids of normalized time (t+1)/T: pairs sin(pi 2^j tau), cos(pi 2^j tau).
// `count` must be even; the result is T x count.
Matrix time_encoding(std::size_t steps, std::size_t count);

struct EncoderParams {
  Parameter video_proj_w;  // k x d
  Parameter video_proj_b;  // 1 x d
  GruParams video_gru;
  Parameter embedding;  // V x d, shared with the caption decoder
  GruParams caption_gru;

  static EncoderParams init(std::size_t feature_dim, std::size_t hidden, std::size_t vocab_size,
                            Rng& rng);
};

struct EncoderVars {
  Var video_proj_w, video_proj_b;
  GruVars video_gru;
  Var embedding;
  GruVars caption_gru;
};

template <class P>
EncoderVars bind_encoder(Tape& t, P& p) {
  return {bind_param(t, p.video_proj_w), bind_param(t, p.video_proj_b), bind_gru(t, p.video_gru),
          bind_param(t, p.embedding), bind_gru(t, p.caption_gru)};
}

// Per-step outputs and hidden states of one sequence. The cell emits its
// hidden state as output, so outputs and hiddens are the same node.
struct EncodedSequence {
  Var outputs;       // T x d
  Var hiddens;       // T x d
  Var final_hidden;  // 1 x d, last non-padding step
  std::size_t length = 0;
};

EncodedSequence encode_video(Tape& t, const EncoderVars& enc, const VideoFeatures& features);

// Trailing PAD tokens are ignored.
EncodedSequence encode_caption(Tape& t, const EncoderVars& enc, std::span<const TokenId> ids);

// Padded batch: every row may carry trailing PADs; each result covers only
// its non-padding prefix.
std::vector<EncodedSequence> encode_caption_batch(Tape& t, const EncoderVars& enc,
                                                  const std::vector<std::vector<TokenId>>& rows);

}  // namespace wsdec
