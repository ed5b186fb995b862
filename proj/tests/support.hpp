#pragma once

#include <algorithm>
#include <cmath>

#include "wsdec/data.hpp"
#include "wsdec/model.hpp"

namespace wsdec::test {

inline double rel_err(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

inline SynthSpec small_spec(std::size_t videos = 6, std::uint64_t seed = 3) {
  SynthSpec s;
  s.num_videos = videos;
  s.steps = 16;
  s.feature_dim = 5;
  s.seed = seed;
  return s;
}

inline ModelConfig small_model_config(const Corpus& c, std::size_t vocab) {
  ModelConfig m;
  m.feature_dim = c.entry(0).features.dim();
  m.hidden = 6;
  m.vocab_size = vocab;
  m.anchor_scales = {1.0, 0.5, 0.25};
  m.max_caption_len = 10;
  return m;
}

}  // namespace wsdec::test
