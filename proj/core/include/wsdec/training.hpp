#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "wsdec/data.hpp"
#include "wsdec/model.hpp"

namespace wsdec {

enum class Stage : int { kPretrain = 0, kStage1 = 1, kStage2 = 2 };

std::string_view stage_name(Stage stage);
// Throws std::invalid_argument for unknown names.
Stage parse_stage(std::string_view name);

struct LossWeights {
  double lambda_s = 0.1;
  double lambda_a = 0.1;
  double sigma = 0.05;  // std of the perturbation added to (m, w)
  // Relative slack under which anchor scores count as tied; see pick_anchor.
  double anchor_tolerance = 0.0;

  void validate() const;
};

struct TrainConfig {
  LossWeights weights;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double clip_norm = 5.0;
  std::size_t batch_size = 32;
  std::size_t pretrain_epochs = 5;
  std::size_t stage1_epochs = 10;
  std::size_t stage2_epochs = 10;

  void validate() const;
  std::size_t epochs(Stage stage) const;
};

class NumericFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainState {
  Model model;
  std::vector<Matrix> momentum;  // one buffer per parameter, declared order
  Stage stage = Stage::kPretrain;
  std::uint64_t step = 0;   // optimizer updates applied so far
  std::size_t epoch = 0;    // within the current stage
  std::size_t batch = 0;    // next batch within the current epoch
  bool finished = false;
  std::uint64_t seed = 0;

  static TrainState init(Model model, std::uint64_t seed);
};

struct StepLosses {
  double l_c = 0.0;
  double l_s = 0.0;
  double l_a = 0.0;
  double total = 0.0;
  bool has_l_s = false;
  bool has_l_a = false;
};

// Mean negative log-likelihood of targets ids[1..] under teacher-forced
// logits; PAD targets are skipped.
Var caption_loss(Var logits, const CaptionTokens& targets);

// (m - m')^2 + (w - w')^2
Var reconstruction_loss(Var s, Var s_rec);
double reconstruction_loss(const TemporalSegment& s, const TemporalSegment& s_rec);

// Anchors scoring within tolerance * |best| of the best are tied. Among them the
// coarsest scale wins, then the higher score, then the lower index. With
// tolerance 0 this is a plain argmax with ties to the lowest index.
std::size_t pick_anchor(const AnchorSet& anchors, std::span<const double> scores,
                        double tolerance = 0.0);

std::size_t label_best_anchor(const AnchorSet& anchors,
                              const std::function<double(const TemporalSegment&)>& score,
                              double tolerance = 0.0);

// Scores every anchor by the mean per-token log-likelihood of `caption`
// when the captioner is given that anchor. No gradient.
std::vector<double> anchor_likelihoods(const Model& model, const VideoFeatures& features,
                                       const Matrix& video_hiddens, const CaptionTokens& caption);
std::size_t label_best_anchor(const Model& model, const VideoFeatures& features,
                              const Matrix& video_hiddens, const CaptionTokens& caption,
                              double tolerance = 0.0);

// Cross-entropy of the anchor logits against the one-hot best anchor.
Var anchor_loss(Var anchor_logits, std::size_t best_index);

struct CaptionRef {
  std::size_t video = 0;
  std::size_t caption = 0;
};

// All (video, caption) pairs in corpus order.
std::vector<CaptionRef> caption_refs(const Corpus& corpus);

// Losses of one batch on a fresh tape, averaged over the batch. The batch's
// gradients are accumulated into the model's Parameter::grad when
// `accumulate` is set. Per-caption noise is drawn from a seed derived from
// (state.seed, state.step, position in batch).
StepLosses batch_losses(TrainState& state, const Corpus& corpus, std::span<const CaptionRef> batch,
                        const TrainConfig& config, bool accumulate);

// One optimizer update on the captioner and encoders from captions
// decoded at the whole-video segment (0.5, 1). Requires stage pretrain.
StepLosses pretrain_step(TrainState& state, const Corpus& corpus,
                         std::span<const CaptionRef> batch, const TrainConfig& config);

// One cycle update: L_c + lambda_s L_s, plus lambda_a L_a in stage 2.
// Requires stage 1 or 2.
StepLosses cycle_step(TrainState& state, const Corpus& corpus, std::span<const CaptionRef> batch,
                      const TrainConfig& config);

struct TrainHooks {
  std::function<void(const TrainState&, const StepLosses&)> on_step;
  std::function<void(const TrainState&, Stage finished_stage)> on_stage_end;
};

// Runs (or resumes) pretrain -> stage 1 -> stage 2. The corpus is switched to
// weak mode for the duration, so any ground-truth read throws.
void train(TrainState& state, Corpus& corpus, const TrainConfig& config,
           const TrainHooks& hooks = {});

// Batch order of one epoch, a pure function of (seed, stage, epoch).
std::vector<CaptionRef> epoch_order(const Corpus& corpus, std::uint64_t seed, Stage stage,
                                    std::size_t epoch);

}  // namespace wsdec
