#include "wsdec/encoders.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace wsdec {

Matrix uniform_init(std::size_t rows, std::size_t cols, double fan, Rng& rng) {
  const double bound = 1.0 / std::sqrt(fan);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

GruParams GruParams::init(const std::string& prefix, std::size_t in, std::size_t hidden,
                          Rng& rng) {
  const auto d = static_cast<double>(hidden);
  GruParams p;
  p.w_x = Parameter(prefix + ".w_x", uniform_init(in, 3 * hidden, d, rng));
  p.b = Parameter(prefix + ".b", Matrix(1, 3 * hidden));
  p.u_zr = Parameter(prefix + ".u_zr", uniform_init(hidden, 2 * hidden, d, rng));
  p.u_n = Parameter(prefix + ".u_n", uniform_init(hidden, hidden, d, rng));
  return p;
}

Var run_gru(const GruVars& gru, Var inputs, Var h0) {
  Var gates = ad::add_row(ad::matmul(inputs, gru.w_x), gru.b);
  std::vector<Var> hs;
  hs.reserve(inputs.rows());
  Var h = h0;
  for (std::size_t t = 0; t < inputs.rows(); ++t) {
    h = ad::gru_step(ad::row(gates, t), h, gru.u_zr, gru.u_n);
    hs.push_back(h);
  }
  return ad::stack_rows(hs);
}

Matrix time_encoding(std::size_t steps, std::size_t count) {
  if (count % 2 != 0) throw std::invalid_argument("time_encoding: count must be even");
  Matrix out(steps, count);
  for (std::size_t t = 0; t < steps; ++t) {
    const double tau = static_cast<double>(t + 1) / static_cast<double>(steps);
    for (std::size_t j = 0; j < count / 2; ++j) {
      const double a = std::numbers::pi * std::ldexp(1.0, static_cast<int>(j)) * tau;
      out(t, 2 * j) = std::sin(a);
      out(t, 2 * j + 1) = std::cos(a);
    }
  }
  return out;
}

EncoderParams EncoderParams::init(std::size_t feature_dim, std::size_t hidden,
                                  std::size_t vocab_size, Rng& rng) {
  const auto d = static_cast<double>(hidden);
  EncoderParams p;
  p.video_proj_w = Parameter("encoder.video_proj.w", uniform_init(feature_dim, hidden, d, rng));
  p.video_proj_b = Parameter("encoder.video_proj.b", Matrix(1, hidden));
  p.video_gru = GruParams::init("encoder.video_gru", hidden, hidden, rng);
  p.embedding = Parameter("encoder.embedding", uniform_init(vocab_size, hidden, d, rng));
  p.caption_gru = GruParams::init("encoder.caption_gru", hidden, hidden, rng);
  return p;
}

namespace {

EncodedSequence finish(Var hiddens, std::size_t length) {
  EncodedSequence e;
  e.outputs = hiddens;
  e.hiddens = hiddens;
  e.final_hidden = ad::row(hiddens, length - 1);
  e.length = length;
  return e;
}

}  // namespace

EncodedSequence encode_video(Tape& t, const EncoderVars& enc, const VideoFeatures& features) {
  const std::size_t k = enc.video_proj_w.rows();
  if (features.dim() != k || features.steps() < 2) {
    throw std::invalid_argument("encode_video: features " + features.values.shape_string() +
                                " do not match encoder input of " + std::to_string(k) +
                                " columns (need at least 2 steps)");
  }
  Var x = ad::add_row(ad::matmul(t.constant(features.values), enc.video_proj_w), enc.video_proj_b);
  const std::size_t d = enc.video_gru.u_n.rows();
  Var hiddens = run_gru(enc.video_gru, x, t.constant(Matrix(1, d)));
  return finish(hiddens, features.steps());
}

EncodedSequence encode_caption(Tape& t, const EncoderVars& enc, std::span<const TokenId> ids) {
  std::size_t n = ids.size();
  while (n > 0 && ids[n - 1] == tokens::kPad) --n;
  if (n == 0) throw std::invalid_argument("encode_caption: empty caption");
  Var x = ad::gather_rows(enc.embedding, ids.first(n));
  const std::size_t d = enc.caption_gru.u_n.rows();
  Var hiddens = run_gru(enc.caption_gru, x, t.constant(Matrix(1, d)));
  return finish(hiddens, n);
}

std::vector<EncodedSequence> encode_caption_batch(Tape& t, const EncoderVars& enc,
                                                  const std::vector<std::vector<TokenId>>& rows) {
  std::vector<EncodedSequence> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(encode_caption(t, enc, r));
  return out;
}

}  // namespace wsdec
