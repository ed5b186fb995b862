#include "wsdec/training.hpp"

#include <cmath>
#include <map>
#include <string>

namespace wsdec {

namespace {

// Tags keep the derived random streams apart.
constexpr std::uint64_t kNoiseTag = 0x6e6f697365;    // "noise"
constexpr std::uint64_t kShuffleTag = 0x73687566;    // "shuf"

float to_f32(double v) { return static_cast<float>(v); }

}  // namespace

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::kPretrain: return "pretrain";
    case Stage::kStage1: return "stage1";
    case Stage::kStage2: return "stage2";
  }
  return "unknown";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : {Stage::kPretrain, Stage::kStage1, Stage::kStage2}) {
    if (stage_name(s) == name) return s;
  }
  throw std::invalid_argument("unknown stage '" + std::string(name) + "'");
}

void LossWeights::validate() const {
  if (!(lambda_s >= 0.0)) throw std::invalid_argument("train.lambda_s must be >= 0");
  if (!(lambda_a >= 0.0)) throw std::invalid_argument("train.lambda_a must be >= 0");
  if (!(sigma >= 0.0)) throw std::invalid_argument("train.sigma must be >= 0");
  if (!(anchor_tolerance >= 0.0)) throw std::invalid_argument("train.anchor_tolerance must be >= 0");
}

void TrainConfig::validate() const {
  weights.validate();
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("train.momentum must lie in [0, 1)");
  }
  if (!(clip_norm > 0.0)) throw std::invalid_argument("train.clip_norm must be > 0");
  if (batch_size == 0) throw std::invalid_argument("train.batch_size must be positive");
}

std::size_t TrainConfig::epochs(Stage stage) const {
  switch (stage) {
    case Stage::kPretrain: return pretrain_epochs;
    case Stage::kStage1: return stage1_epochs;
    case Stage::kStage2: return stage2_epochs;
  }
  return 0;
}

TrainState TrainState::init(Model model, std::uint64_t seed) {
  TrainState s;
  s.model = std::move(model);
  s.seed = seed;
  // Checkpoints store float32, so the live state is kept at that precision.
  for (Parameter* p : s.model.parameters()) {
    for (double& v : p->value.values()) v = to_f32(v);
    s.momentum.emplace_back(p->value.rows(), p->value.cols());
  }
  return s;
}

Var caption_loss(Var logits, const CaptionTokens& targets) {
  if (targets.size() < 2 || logits.rows() != targets.size() - 1) {
    throw std::invalid_argument("caption_loss: " + logits.value().shape_string() +
                                " logits for a caption of length " +
                                std::to_string(targets.size()));
  }
  const std::span<const TokenId> next(targets.ids.data() + 1, targets.size() - 1);
  return ad::softmax_cross_entropy(logits, next, tokens::kPad);
}

Var reconstruction_loss(Var s, Var s_rec) { return ad::sum(ad::square(ad::sub(s, s_rec))); }

double reconstruction_loss(const TemporalSegment& s, const TemporalSegment& s_rec) {
  const double dm = s.m - s_rec.m;
  const double dw = s.w - s_rec.w;
  return dm * dm + dw * dw;
}

std::size_t pick_anchor(const AnchorSet& anchors, std::span<const double> scores,
                        double tolerance) {
  if (anchors.size() == 0 || scores.size() != anchors.size()) {
    throw std::invalid_argument("pick_anchor: " + std::to_string(scores.size()) + " scores for " +
                                std::to_string(anchors.size()) + " anchors");
  }
  const double top = scores[argmax(scores)];
  const double cut = top - tolerance * std::abs(top);
  std::size_t best = scores.size();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] >= cut)) continue;
    if (best == scores.size()) {
      best = i;
      continue;
    }
    const double wi = anchors.anchors[i].w, wb = anchors.anchors[best].w;
    if (wi > wb || (wi == wb && scores[i] > scores[best])) best = i;
  }
  return best;
}

std::size_t label_best_anchor(const AnchorSet& anchors,
                              const std::function<double(const TemporalSegment&)>& score,
                              double tolerance) {
  if (anchors.size() == 0) throw std::invalid_argument("label_best_anchor: no anchors");
  std::vector<double> scores;
  scores.reserve(anchors.size());
  for (const auto& a : anchors.anchors) scores.push_back(score(a));
  return pick_anchor(anchors, scores, tolerance);
}

std::vector<double> anchor_likelihoods(const Model& model, const VideoFeatures& features,
                                       const Matrix& video_hiddens, const CaptionTokens& caption) {
  const AnchorSet& anchors = model.anchors;
  Matrix contexts(anchors.size(), features.dim());
  Matrix hidden(anchors.size(), video_hiddens.cols());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const PooledContext pooled = masked_pool(features, anchors.anchors[i], model.config.mask);
    std::copy(pooled.context.begin(), pooled.context.end(), contexts.row(i).begin());
    const auto src = video_hiddens.row(decoder_seed_index(anchors.anchors[i], features.steps()));
    std::copy(src.begin(), src.end(), hidden.row(i).begin());
  }
  return caption_log_likelihoods(model.decoder, model.encoder.embedding.value, contexts, hidden,
                                 caption);
}

std::size_t label_best_anchor(const Model& model, const VideoFeatures& features,
                              const Matrix& video_hiddens, const CaptionTokens& caption,
                              double tolerance) {
  return pick_anchor(model.anchors, anchor_likelihoods(model, features, video_hiddens, caption),
                     tolerance);
}

Var anchor_loss(Var anchor_logits, std::size_t best_index) {
  if (best_index >= anchor_logits.cols()) {
    throw std::invalid_argument("anchor_loss: index " + std::to_string(best_index) + " of " +
                                std::to_string(anchor_logits.cols()) + " anchors");
  }
  const TokenId target[] = {static_cast<TokenId>(best_index)};
  return ad::softmax_cross_entropy(anchor_logits, target);
}

std::vector<CaptionRef> caption_refs(const Corpus& corpus) {
  std::vector<CaptionRef> refs;
  for (std::size_t v = 0; v < corpus.size(); ++v) {
    for (std::size_t c = 0; c < corpus.entry(v).captions.size(); ++c) refs.push_back({v, c});
  }
  return refs;
}

std::vector<CaptionRef> epoch_order(const Corpus& corpus, std::uint64_t seed, Stage stage,
                                    std::size_t epoch) {
  std::vector<CaptionRef> refs = caption_refs(corpus);
  Rng rng(derive_seed(seed, {kShuffleTag, static_cast<std::uint64_t>(stage), epoch}));
  for (std::size_t i = refs.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, i - 1));
    std::swap(refs[i - 1], refs[j]);
  }
  return refs;
}

StepLosses batch_losses(TrainState& state, const Corpus& corpus, std::span<const CaptionRef> batch,
                        const TrainConfig& config, bool accumulate) {
  if (batch.empty()) throw std::invalid_argument("empty training batch");
  Model& model = state.model;
  const ModelConfig& mc = model.config;
  const bool cycle = state.stage != Stage::kPretrain;
  const bool with_anchor = state.stage == Stage::kStage2;

  Tape t;
  const ModelVars vars = bind_model(t, model);
  std::map<std::size_t, EncodedSequence> videos;

  DecodeOptions teacher;
  teacher.mode = DecodeMode::kTeacherForced;
  DecodeOptions greedy;
  greedy.mode = DecodeMode::kGreedy;
  greedy.max_len = mc.max_caption_len;

  std::vector<Var> lc, ls, la;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const CorpusEntry& entry = corpus.entry(batch[i].video);
    const CaptionTokens& caption = entry.captions.at(batch[i].caption);
    auto it = videos.find(batch[i].video);
    if (it == videos.end()) {
      it = videos.emplace(batch[i].video, encode_video(t, vars.encoder, entry.features)).first;
    }
    const EncodedSequence& video = it->second;
    teacher.targets = &caption;

    if (!cycle) {
      Var whole = segment_var(t, TemporalSegment{0.5, 1.0});
      const DecodeResult dec = caption_segment(vars, mc, entry.features, video, whole, teacher);
      lc.push_back(caption_loss(dec.logits, caption));
      continue;
    }

    const Localization loc = localize_caption(t, vars, model.anchors, video, caption);
    const DecodeResult dec = caption_segment(vars, mc, entry.features, video, loc.segment, teacher);
    lc.push_back(caption_loss(dec.logits, caption));

    const TemporalSegment s = loc.value();
    Rng rng(derive_seed(state.seed, {kNoiseTag, state.step, i}));
    const double em = config.weights.sigma * rng.normal();
    const double ew = config.weights.sigma * rng.normal();
    const TemporalSegment noisy = clamp_segment({s.m + em, s.w + ew});
    t.set_grad_enabled(false);
    const CaptionTokens regenerated =
        caption_segment(vars, mc, entry.features, video, segment_var(t, noisy), greedy).tokens;
    t.set_grad_enabled(true);
    const Localization rec = localize_caption(t, vars, model.anchors, video, regenerated);
    ls.push_back(reconstruction_loss(segment_var(t, s), rec.segment));

    if (with_anchor) {
      const std::size_t best =
          label_best_anchor(model, entry.features, video.hiddens.value(), caption,
                            config.weights.anchor_tolerance);
      la.push_back(anchor_loss(loc.anchor_logits, best));
    }
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  auto mean_of = [&](const std::vector<Var>& parts) {
    Var acc = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) acc = ad::add(acc, parts[i]);
    return ad::scale(acc, inv);
  };
  StepLosses out;
  Var l_c = mean_of(lc);
  Var total = l_c;
  out.l_c = l_c.scalar();
  if (!ls.empty()) {
    Var l_s = mean_of(ls);
    out.l_s = l_s.scalar();
    out.has_l_s = true;
    total = ad::add(total, ad::scale(l_s, config.weights.lambda_s));
  }
  if (!la.empty()) {
    Var l_a = mean_of(la);
    out.l_a = l_a.scalar();
    out.has_l_a = true;
    total = ad::add(total, ad::scale(l_a, config.weights.lambda_a));
  }
  out.total = total.scalar();
  if (!std::isfinite(out.total)) {
    throw NumericFailure("non-finite loss at step " + std::to_string(state.step) + " (" +
                         std::string(stage_name(state.stage)) + ")");
  }
  if (accumulate) t.backward(total);
  return out;
}

namespace {

void apply_update(TrainState& state, const TrainConfig& config) {
  auto params = state.model.parameters();
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) {
    throw NumericFailure("non-finite gradient at step " + std::to_string(state.step));
  }
  const double scale = norm > config.clip_norm ? config.clip_norm / norm : 1.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i]->value.values();
    auto grad = params[i]->grad.values();
    auto vel = state.momentum[i].values();
    for (std::size_t j = 0; j < value.size(); ++j) {
      vel[j] = to_f32(config.momentum * vel[j] + scale * grad[j]);
      value[j] = to_f32(value[j] - config.learning_rate * vel[j]);
    }
  }
}

StepLosses update(TrainState& state, const Corpus& corpus, std::span<const CaptionRef> batch,
                  const TrainConfig& config) {
  for (Parameter* p : state.model.parameters()) p->zero_grad();
  const StepLosses losses = batch_losses(state, corpus, batch, config, true);
  apply_update(state, config);
  ++state.step;
  return losses;
}

}  // namespace

StepLosses pretrain_step(TrainState& state, const Corpus& corpus,
                         std::span<const CaptionRef> batch, const TrainConfig& config) {
  if (state.stage != Stage::kPretrain) {
    throw std::logic_error("pretrain_step called in " + std::string(stage_name(state.stage)));
  }
  return update(state, corpus, batch, config);
}

StepLosses cycle_step(TrainState& state, const Corpus& corpus, std::span<const CaptionRef> batch,
                      const TrainConfig& config) {
  if (state.stage == Stage::kPretrain) throw std::logic_error("cycle_step called in pretrain");
  return update(state, corpus, batch, config);
}

void train(TrainState& state, Corpus& corpus, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  WeakModeGuard guard(corpus);
  if (corpus.caption_count() == 0) throw DataError("training corpus has no captions");
  while (!state.finished) {
    const std::size_t epochs = config.epochs(state.stage);
    while (state.epoch < epochs) {
      const auto order = epoch_order(corpus, state.seed, state.stage, state.epoch);
      const std::size_t batches = (order.size() + config.batch_size - 1) / config.batch_size;
      while (state.batch < batches) {
        const std::size_t begin = state.batch * config.batch_size;
        const std::size_t end = std::min(order.size(), begin + config.batch_size);
        const std::span<const CaptionRef> batch(order.data() + begin, end - begin);
        const StepLosses losses = state.stage == Stage::kPretrain
                                      ? pretrain_step(state, corpus, batch, config)
                                      : cycle_step(state, corpus, batch, config);
        ++state.batch;
        if (hooks.on_step) hooks.on_step(state, losses);
      }
      state.batch = 0;
      ++state.epoch;
    }
    const Stage done = state.stage;
    state.epoch = 0;
    if (done == Stage::kStage2) {
      state.finished = true;
    } else {
      state.stage = static_cast<Stage>(static_cast<int>(done) + 1);
    }
    if (hooks.on_stage_end) hooks.on_stage_end(state, done);
  }
}

}  // namespace wsdec
