#include "wsdec/captioner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace wsdec {

void MaskConfig::validate() const {
  if (!(k > 0.0)) throw std::invalid_argument("mask scaling factor K must be positive");
}

namespace {

double sig(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kMinMaskMass = 1e-8;

struct MaskTerms {
  std::vector<double> mask;    // M(t)
  std::vector<double> d_m;     // dM/dm
  std::vector<double> d_w;     // dM/dw
  double total = 0.0;
};

MaskTerms mask_terms(std::size_t steps, double m, double w, double k) {
  MaskTerms out;
  out.mask.resize(steps);
  out.d_m.resize(steps);
  out.d_w.resize(steps);
  const double lo = m - 0.5 * w;
  const double hi = m + 0.5 * w;
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i + 1) / static_cast<double>(steps);
    const double a = sig(k * (t - lo));
    const double b = sig(k * (t - hi));
    const double da = a * (1.0 - a);
    const double db = b * (1.0 - b);
    out.mask[i] = a - b;
    out.d_m[i] = k * (db - da);
    out.d_w[i] = 0.5 * k * (da + db);
    out.total += out.mask[i];
  }
  return out;
}

}  // namespace

double soft_mask(double t, const TemporalSegment& s, const MaskConfig& cfg) {
  return sig(cfg.k * (t - s.start())) - sig(cfg.k * (t - s.end()));
}

PooledContext masked_pool(const VideoFeatures& features, const TemporalSegment& segment,
                          const MaskConfig& cfg) {
  const Matrix& v = features.values;
  if (v.rows() < 2) throw std::invalid_argument("masked_pool needs at least 2 steps");
  const MaskTerms terms = mask_terms(v.rows(), segment.m, segment.w, cfg.k);
  PooledContext out;
  out.context.assign(v.cols(), 0.0);
  out.fallback = !(terms.total >= kMinMaskMass);
  for (std::size_t t = 0; t < v.rows(); ++t) {
    const double weight = out.fallback ? 1.0 : terms.mask[t];
    auto row = v.row(t);
    for (std::size_t j = 0; j < v.cols(); ++j) out.context[j] += weight * row[j];
  }
  const double norm = out.fallback ? static_cast<double>(v.rows()) : terms.total;
  for (double& c : out.context) c /= norm;
  return out;
}

Var masked_pool(const VideoFeatures& features, Var segment, const MaskConfig& cfg,
                bool* fallback) {
  if (segment.rows() != 1 || segment.cols() != 2) {
    throw std::invalid_argument("masked_pool: segment must be 1x2, got " +
                                segment.value().shape_string());
  }
  const TemporalSegment s{segment.value()[0], segment.value()[1]};
  PooledContext pooled = masked_pool(features, s, cfg);
  if (fallback != nullptr) *fallback = pooled.fallback;
  Matrix value = Matrix::row_vector(pooled.context);
  const Var in[] = {segment};
  if (pooled.fallback) {
    // Uniform mean does not depend on the segment.
    return segment.tape()->record(std::move(value), in,
                                  [](Tape&, const Matrix&, const Matrix&) {});
  }
  const double k = cfg.k;
  const Matrix* feats = &features.values;
  return segment.tape()->record(
      std::move(value), in, [segment, feats, k](Tape& t, const Matrix& ctx, const Matrix& g) {
        const Matrix& v = *feats;
        const MaskTerms terms =
            mask_terms(v.rows(), segment.value()[0], segment.value()[1], k);
        // d ctx / d theta = (sum_t M'(t) v_t - ctx sum_t M'(t)) / sum_t M(t)
        double gm = 0.0, gw = 0.0;
        double gdot_ctx = 0.0;
        for (std::size_t j = 0; j < v.cols(); ++j) gdot_ctx += g[j] * ctx[j];
        double sum_dm = 0.0, sum_dw = 0.0;
        for (std::size_t r = 0; r < v.rows(); ++r) {
          auto row = v.row(r);
          double gdot_v = 0.0;
          for (std::size_t j = 0; j < v.cols(); ++j) gdot_v += g[j] * row[j];
          gm += terms.d_m[r] * gdot_v;
          gw += terms.d_w[r] * gdot_v;
          sum_dm += terms.d_m[r];
          sum_dw += terms.d_w[r];
        }
        Matrix& gs = t.grad(segment);
        gs[0] += (gm - gdot_ctx * sum_dm) / terms.total;
        gs[1] += (gw - gdot_ctx * sum_dw) / terms.total;
      });
}

std::size_t decoder_seed_index(const TemporalSegment& segment, std::size_t steps) {
  const double end = std::clamp(segment.end(), 0.0, 1.0);
  const auto idx = static_cast<long>(std::lround(end * static_cast<double>(steps)));
  return static_cast<std::size_t>(std::clamp<long>(idx, 1, static_cast<long>(steps))) - 1;
}

DecoderParams DecoderParams::init(std::size_t feature_dim, std::size_t hidden,
                                  std::size_t vocab_size, Rng& rng) {
  const auto d = static_cast<double>(hidden);
  DecoderParams p;
  p.ctx_w = Parameter("decoder.ctx.w", uniform_init(feature_dim, hidden, d, rng));
  p.ctx_b = Parameter("decoder.ctx.b", Matrix(1, hidden));
  p.gru = GruParams::init("decoder.gru", 2 * hidden, hidden, rng);
  p.out_w = Parameter("decoder.out.w", uniform_init(hidden, vocab_size, d, rng));
  p.out_b = Parameter("decoder.out.b", Matrix(1, vocab_size));
  return p;
}

namespace {

TokenId pick_token(std::span<const double> logits, const DecodeOptions& opt, Rng* rng) {
  auto allowed = [](std::size_t i) {
    return static_cast<TokenId>(i) != tokens::kPad && static_cast<TokenId>(i) != tokens::kBos;
  };
  if (opt.mode == DecodeMode::kGreedy) {
    std::size_t best = logits.size();
    for (std::size_t i = 0; i < logits.size(); ++i) {
      if (!allowed(i)) continue;
      if (best == logits.size() || logits[i] > logits[best]) best = i;
    }
    return static_cast<TokenId>(best);
  }
  const double temp = opt.temperature > 0.0 ? opt.temperature : 1.0;
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (allowed(i)) mx = std::max(mx, logits[i]);
  }
  std::vector<double> p(logits.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (allowed(i)) z += (p[i] = std::exp((logits[i] - mx) / temp));
  }
  double u = rng->uniform() * z;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    u -= p[i];
    if (u < 0.0) return static_cast<TokenId>(i);
  }
  return tokens::kEos;
}

}  // namespace

DecodeResult decode(const DecoderVars& dec, Var context, Var init_hidden,
                    const DecodeOptions& options) {
  const std::size_t d = dec.gru.u_n.rows();
  if (init_hidden.rows() != 1 || init_hidden.cols() != d) {
    throw std::invalid_argument("decode: initial hidden " + init_hidden.value().shape_string() +
                                " does not match decoder width " + std::to_string(d));
  }
  Var ctx = ad::add_row(ad::matmul(context, dec.ctx_w), dec.ctx_b);
  DecodeResult out;

  if (options.mode == DecodeMode::kTeacherForced) {
    if (options.targets == nullptr || options.targets->size() < 2) {
      throw std::invalid_argument("decode: teacher forcing needs a framed target caption");
    }
    const auto& ids = options.targets->ids;
    const std::vector<TokenId> inputs(ids.begin(), ids.end() - 1);
    const Var parts[] = {ad::gather_rows(dec.embedding, inputs),
                         ad::repeat_rows(ctx, inputs.size())};
    Var hiddens = run_gru(dec.gru, ad::concat_cols(parts), init_hidden);
    out.logits = ad::add_row(ad::matmul(hiddens, dec.out_w), dec.out_b);
    out.tokens = *options.targets;
    return out;
  }

  std::optional<Rng> rng;
  if (options.mode == DecodeMode::kSampled) rng.emplace(options.seed);
  const std::size_t max_len = std::max<std::size_t>(options.max_len, 2);
  out.tokens.ids.push_back(tokens::kBos);
  Var h = init_hidden;
  while (out.tokens.ids.size() < max_len - 1) {
    const TokenId prev[] = {out.tokens.ids.back()};
    const Var parts[] = {ad::gather_rows(dec.embedding, prev), ctx};
    Var gates = ad::add_row(ad::matmul(ad::concat_cols(parts), dec.gru.w_x), dec.gru.b);
    h = ad::gru_step(gates, h, dec.gru.u_zr, dec.gru.u_n);
    Var logits = ad::add_row(ad::matmul(h, dec.out_w), dec.out_b);
    const TokenId next = pick_token(logits.value().values(), options, rng ? &*rng : nullptr);
    if (next == tokens::kEos) break;
    out.tokens.ids.push_back(next);
  }
  out.tokens.ids.push_back(tokens::kEos);
  return out;
}

}  // namespace wsdec

namespace wsdec {

std::vector<double> caption_log_likelihoods(const DecoderParams& dec, const Matrix& embedding,
                                            const Matrix& contexts, const Matrix& init_hidden,
                                            const CaptionTokens& caption) {
  const std::size_t n = contexts.rows();
  const std::size_t d = dec.gru.hidden();
  const std::size_t vocab = dec.out_w.value.cols();
  if (init_hidden.rows() != n || init_hidden.cols() != d) {
    throw std::invalid_argument("caption_log_likelihoods: hidden " + init_hidden.shape_string() +
                                " for " + std::to_string(n) + " contexts of width " +
                                std::to_string(d));
  }
  if (caption.size() < 2) throw std::invalid_argument("caption_log_likelihoods: unframed caption");

  // Context part of the input gates is fixed across steps.
  Matrix ctx = matmul(contexts, dec.ctx_w.value);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) ctx(r, j) += dec.ctx_b.value[j];
  }
  const Matrix& wx = dec.gru.w_x.value;
  Matrix wx_ctx(d, 3 * d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < 3 * d; ++j) wx_ctx(i, j) = wx(d + i, j);
  }
  const Matrix ctx_gates = matmul(ctx, wx_ctx);

  Matrix h = init_hidden;
  std::vector<double> total(n, 0.0);
  std::size_t counted = 0;
  auto sig = [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  for (std::size_t step = 0; step + 1 < caption.size(); ++step) {
    const auto tok = static_cast<std::size_t>(caption.ids[step]);
    const auto target = caption.ids[step + 1];
    // Token part of the input gates, shared by every row.
    std::vector<double> tok_gates(dec.gru.b.value.values().begin(),
                                  dec.gru.b.value.values().end());
    for (std::size_t i = 0; i < d; ++i) {
      const double e = embedding(tok, i);
      for (std::size_t j = 0; j < 3 * d; ++j) tok_gates[j] += e * wx(i, j);
    }
    const Matrix hzr = matmul(h, dec.gru.u_zr.value);
    Matrix z(n, d), q(n, d);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < d; ++i) {
        z(r, i) = sig(tok_gates[i] + ctx_gates(r, i) + hzr(r, i));
        const double rg = sig(tok_gates[d + i] + ctx_gates(r, d + i) + hzr(r, d + i));
        q(r, i) = rg * h(r, i);
      }
    }
    const Matrix qn = matmul(q, dec.gru.u_n.value);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < d; ++i) {
        const double cand = std::tanh(tok_gates[2 * d + i] + ctx_gates(r, 2 * d + i) + qn(r, i));
        h(r, i) = (1.0 - z(r, i)) * h(r, i) + z(r, i) * cand;
      }
    }
    if (target == tokens::kPad) continue;
    ++counted;
    const Matrix logits = matmul(h, dec.out_w.value);
    for (std::size_t r = 0; r < n; ++r) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < vocab; ++c) mx = std::max(mx, logits(r, c) + dec.out_b.value[c]);
      double zsum = 0.0;
      for (std::size_t c = 0; c < vocab; ++c) zsum += std::exp(logits(r, c) + dec.out_b.value[c] - mx);
      const auto t = static_cast<std::size_t>(target);
      total[r] += logits(r, t) + dec.out_b.value[t] - mx - std::log(zsum);
    }
  }
  if (counted == 0) throw std::invalid_argument("caption_log_likelihoods: every target is padding");
  for (double& v : total) v /= static_cast<double>(counted);
  return total;
}

}  // namespace wsdec
