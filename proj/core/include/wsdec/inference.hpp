#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "wsdec/data.hpp"
#include "wsdec/model.hpp"

namespace wsdec {

struct InferenceConfig {
  std::size_t num_proposals = 15;  // N_r
  double iou_keep = 0.5;
  double dedup_iou = 0.7;
  std::size_t rounds = 1;
  double min_width = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-video stream seed: inference on one video never depends on the others.
std::uint64_t video_seed(std::uint64_t seed, const std::string& video_id);

// m ~ U(0, 1), w ~ U(min_width, 1), clamped valid.
std::vector<TemporalSegment> sample_random_segments(const InferenceConfig& config,
                                                    std::uint64_t seed);

// A trained model bound to one video: the video is encoded once and reused
// for every caption/localize call. Not thread-safe; use one per thread.
class VideoSession {
 public:
  VideoSession(const Model& model, const VideoFeatures& features);
  VideoSession(const VideoSession&) = delete;
  VideoSession& operator=(const VideoSession&) = delete;

  // g(V, S), greedy.
  CaptionTokens caption(const TemporalSegment& segment);
  // l(V, C).
  TemporalSegment localize(const CaptionTokens& caption);

 private:
  const Model& model_;
  const VideoFeatures& features_;
  std::unique_ptr<Tape> tape_;
  ModelVars vars_;
  EncodedSequence video_;
};

struct Refinement {
  TemporalSegment segment;
  CaptionTokens caption;       // caption of the last round's input segment
  bool empty_caption = false;  // decoder emitted EOS at once; segment left as is
};

// S(t+1) = l(V, g(V, S(t))), `rounds` times.
Refinement refine_segment(VideoSession& session, const TemporalSegment& s0, std::size_t rounds);

// Indices of the refined segments that survive: keep i when
// tIoU(initial_i, refined_i) >= iou_keep, then greedily drop any survivor
// overlapping an already kept one (visited by self-IoU descending, ties by
// index) with tIoU >= dedup_iou. Returned in visit order.
std::vector<std::size_t> filter_and_dedup(const std::vector<TemporalSegment>& initials,
                                          const std::vector<TemporalSegment>& refineds,
                                          const InferenceConfig& config);

struct DenseEvent {
  TemporalSegment segment;
  double start_seconds = 0.0;
  double end_seconds = 0.0;
  CaptionTokens tokens;
  std::string sentence;
  TemporalSegment initial;
  double self_iou = 0.0;
};

struct DenseCaptionResult {
  std::vector<DenseEvent> events;
  std::vector<TemporalSegment> initials;  // every proposal
  std::vector<TemporalSegment> refineds;  // aligned with initials
  std::size_t empty_captions = 0;
  bool all_filtered = false;
};

DenseCaptionResult dense_caption(const Model& model, const VideoFeatures& features,
                                 const Vocabulary& vocab, const InferenceConfig& config,
                                 std::uint64_t seed);

struct ContractionStats {
  std::size_t pairs = 0;
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
};

// Empirical ||F(a) - F(b)|| / ||a - b|| for F = localize o caption over probe
// pairs: each probe a is paired with a perturbed copy b at distance ~`radius`.
// Pairs whose images cannot be compared (empty captions) are skipped.
ContractionStats contraction_ratios(VideoSession& session, const std::vector<TemporalSegment>& probes,
                                    double radius, std::uint64_t seed);

// Top-1 localization of every caption of an entry, in caption order.
std::vector<TemporalSegment> localize_sentences(const Model& model, const CorpusEntry& entry);

struct PredictedEvent {
  std::string sentence;
  double start_seconds = 0.0;
  double end_seconds = 0.0;
  double self_iou = 0.0;
};

struct VideoDiagnostics {
  std::size_t proposals = 0;
  std::size_t empty_captions = 0;
  ContractionStats contraction;
};

using Predictions = std::map<std::string, std::vector<PredictedEvent>>;

// {"results": {id: [{"sentence", "timestamp": [s, e], "self_iou"}]}} with
// fixed field order and 6-decimal floats. Diagnostics, when given, go under
// a separate top-level "diagnostics" key.
std::string predictions_json(const Predictions& predictions,
                             const std::map<std::string, VideoDiagnostics>* diagnostics = nullptr);
void write_predictions(const std::filesystem::path& path, const Predictions& predictions,
                       const std::map<std::string, VideoDiagnostics>* diagnostics = nullptr);
Predictions read_predictions(const std::filesystem::path& path);

}  // namespace wsdec
