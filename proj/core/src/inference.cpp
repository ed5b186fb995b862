#include "wsdec/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "wsdec/format.hpp"

namespace wsdec {

void InferenceConfig::validate() const {
  if (num_proposals == 0) throw std::invalid_argument("infer.num_proposals must be positive");
  if (!(iou_keep >= 0.0 && iou_keep <= 1.0)) {
    throw std::invalid_argument("infer.iou_keep must lie in [0, 1]");
  }
  if (!(dedup_iou >= 0.0 && dedup_iou <= 1.0)) {
    throw std::invalid_argument("infer.dedup_iou must lie in [0, 1]");
  }
  if (!(min_width > 0.0 && min_width <= 1.0)) {
    throw std::invalid_argument("infer.min_width must lie in (0, 1]");
  }
}

std::uint64_t video_seed(std::uint64_t seed, const std::string& video_id) {
  return derive_seed(seed, {fnv1a64(video_id)});
}

std::vector<TemporalSegment> sample_random_segments(const InferenceConfig& config,
                                                    std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TemporalSegment> out;
  out.reserve(config.num_proposals);
  for (std::size_t i = 0; i < config.num_proposals; ++i) {
    const double m = rng.uniform();
    const double w = rng.uniform(config.min_width, 1.0);
    out.push_back(clamp_segment({m, w}, config.min_width));
  }
  return out;
}

VideoSession::VideoSession(const Model& model, const VideoFeatures& features)
    : model_(model), features_(features), tape_(std::make_unique<Tape>()) {
  tape_->set_grad_enabled(false);
  vars_ = bind_model(*tape_, model_);
  video_ = encode_video(*tape_, vars_.encoder, features_);
}

CaptionTokens VideoSession::caption(const TemporalSegment& segment) {
  DecodeOptions greedy;
  greedy.mode = DecodeMode::kGreedy;
  greedy.max_len = model_.config.max_caption_len;
  return caption_segment(vars_, model_.config, features_, video_, segment_var(*tape_, segment),
                         greedy)
      .tokens;
}

TemporalSegment VideoSession::localize(const CaptionTokens& caption) {
  return localize_caption(*tape_, vars_, model_.anchors, video_, caption).value();
}

Refinement refine_segment(VideoSession& session, const TemporalSegment& s0, std::size_t rounds) {
  Refinement r;
  r.segment = s0;
  for (std::size_t i = 0; i < rounds; ++i) {
    r.caption = session.caption(r.segment);
    if (r.caption.body().empty()) {
      r.segment = s0;
      r.empty_caption = true;
      return r;
    }
    r.segment = session.localize(r.caption);
  }
  return r;
}

std::vector<std::size_t> filter_and_dedup(const std::vector<TemporalSegment>& initials,
                                          const std::vector<TemporalSegment>& refineds,
                                          const InferenceConfig& config) {
  if (initials.size() != refineds.size()) {
    throw std::invalid_argument("filter_and_dedup: " + std::to_string(initials.size()) +
                                " initial vs " + std::to_string(refineds.size()) +
                                " refined segments");
  }
  constexpr double kTol = 1e-9;
  std::vector<double> self(initials.size());
  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < initials.size(); ++i) {
    self[i] = tiou(initials[i], refineds[i]);
    if (self[i] >= config.iou_keep - kTol) survivors.push_back(i);
  }
  std::stable_sort(survivors.begin(), survivors.end(),
                   [&](std::size_t a, std::size_t b) { return self[a] > self[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t i : survivors) {
    const bool dup = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return tiou(refineds[i], refineds[k]) >= config.dedup_iou - kTol;
    });
    if (!dup) kept.push_back(i);
  }
  return kept;
}

DenseCaptionResult dense_caption(const Model& model, const VideoFeatures& features,
                                 const Vocabulary& vocab, const InferenceConfig& config,
                                 std::uint64_t seed) {
  config.validate();
  VideoSession session(model, features);
  DenseCaptionResult out;
  out.initials = sample_random_segments(config, seed);

  // Proposals whose caption came back empty never moved; they are reported
  // but cannot pass the self-consistency filter.
  std::vector<TemporalSegment> initials, refineds;
  for (std::size_t i = 0; i < out.initials.size(); ++i) {
    const Refinement r = refine_segment(session, out.initials[i], config.rounds);
    out.refineds.push_back(r.segment);
    if (r.empty_caption) {
      ++out.empty_captions;
      continue;
    }
    initials.push_back(out.initials[i]);
    refineds.push_back(r.segment);
  }

  for (std::size_t k : filter_and_dedup(initials, refineds, config)) {
    DenseEvent e;
    e.segment = clamp_segment(refineds[k]);
    e.initial = initials[k];
    e.self_iou = tiou(initials[k], refineds[k]);
    e.tokens = session.caption(e.segment);
    if (e.tokens.body().empty()) continue;
    e.sentence = vocab.decode(e.tokens);
    std::tie(e.start_seconds, e.end_seconds) =
        segment_to_seconds(e.segment, features.duration_seconds);
    out.events.push_back(std::move(e));
  }
  out.all_filtered = out.events.empty();
  return out;
}

ContractionStats contraction_ratios(VideoSession& session,
                                    const std::vector<TemporalSegment>& probes, double radius,
                                    std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> ratios;
  for (const TemporalSegment& a : probes) {
    const TemporalSegment b = clamp_segment({a.m + radius * rng.normal(), a.w + radius * rng.normal()});
    const double dist = std::hypot(a.m - b.m, a.w - b.w);
    if (dist < 1e-12) continue;
    const Refinement fa = refine_segment(session, a, 1);
    const Refinement fb = refine_segment(session, b, 1);
    if (fa.empty_caption || fb.empty_caption) continue;
    ratios.push_back(std::hypot(fa.segment.m - fb.segment.m, fa.segment.w - fb.segment.w) / dist);
  }
  ContractionStats s;
  s.pairs = ratios.size();
  if (ratios.empty()) return s;
  s.mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) / static_cast<double>(ratios.size());
  std::sort(ratios.begin(), ratios.end());
  const std::size_t n = ratios.size();
  s.median = n % 2 == 1 ? ratios[n / 2] : 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]);
  s.max = ratios.back();
  return s;
}

std::vector<TemporalSegment> localize_sentences(const Model& model, const CorpusEntry& entry) {
  VideoSession session(model, entry.features);
  std::vector<TemporalSegment> out;
  out.reserve(entry.captions.size());
  for (const CaptionTokens& c : entry.captions) out.push_back(session.localize(c));
  return out;
}

std::string predictions_json(const Predictions& predictions,
                             const std::map<std::string, VideoDiagnostics>* diagnostics) {
  std::ostringstream out;
  out << "{\n  \"results\": {";
  bool first_video = true;
  for (const auto& [id, events] : predictions) {
    out << (first_video ? "\n" : ",\n") << "    " << json_string(id) << ": [";
    first_video = false;
    for (std::size_t i = 0; i < events.size(); ++i) {
      const PredictedEvent& e = events[i];
      out << (i == 0 ? "\n" : ",\n") << "      {\"sentence\": " << json_string(e.sentence)
          << ", \"timestamp\": [" << fixed6(e.start_seconds) << ", " << fixed6(e.end_seconds)
          << "], \"self_iou\": " << fixed6(e.self_iou) << "}";
    }
    out << (events.empty() ? "]" : "\n    ]");
  }
  out << (predictions.empty() ? "}" : "\n  }");
  if (diagnostics != nullptr) {
    out << ",\n  \"diagnostics\": {";
    bool first = true;
    for (const auto& [id, d] : *diagnostics) {
      out << (first ? "\n" : ",\n") << "    " << json_string(id) << ": {\"proposals\": "
          << d.proposals << ", \"empty_captions\": " << d.empty_captions
          << ", \"contraction_pairs\": " << d.contraction.pairs
          << ", \"contraction_mean\": " << fixed6(d.contraction.mean)
          << ", \"contraction_median\": " << fixed6(d.contraction.median)
          << ", \"contraction_max\": " << fixed6(d.contraction.max) << "}";
      first = false;
    }
    out << (diagnostics->empty() ? "}" : "\n  }");
  }
  out << "\n}\n";
  return out.str();
}

void write_predictions(const std::filesystem::path& path, const Predictions& predictions,
                       const std::map<std::string, VideoDiagnostics>* diagnostics) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << predictions_json(predictions, diagnostics);
  if (!out) throw DataError("failed writing " + path.string());
}

Predictions read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open predictions " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
  if (!doc.is_object() || !doc.contains("results") || !doc["results"].is_object()) {
    throw DataError(path.string() + ": missing object key 'results'");
  }
  Predictions out;
  for (const auto& [id, list] : doc["results"].items()) {
    if (!list.is_array()) throw DataError("results." + id + " must be an array");
    auto& events = out[id];
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto& e = list[i];
      const std::string where = "results." + id + "[" + std::to_string(i) + "]";
      if (!e.is_object() || !e.contains("sentence") || !e["sentence"].is_string()) {
        throw DataError(where + ".sentence missing or not a string");
      }
      if (!e.contains("timestamp") || !e["timestamp"].is_array() || e["timestamp"].size() != 2 ||
          !e["timestamp"][0].is_number() || !e["timestamp"][1].is_number()) {
        throw DataError(where + ".timestamp must be [start, end]");
      }
      PredictedEvent p;
      p.sentence = e["sentence"].get<std::string>();
      p.start_seconds = e["timestamp"][0].get<double>();
      p.end_seconds = e["timestamp"][1].get<double>();
      if (e.contains("self_iou")) {
        if (!e["self_iou"].is_number()) throw DataError(where + ".self_iou must be a number");
        p.self_iou = e["self_iou"].get<double>();
      }
      events.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace wsdec
