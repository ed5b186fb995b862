#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wsdec/segment.hpp"

namespace wsdec {

using Tokens = std::vector<std::string>;

// Sentence-level BLEU@n: geometric mean of clipped n-gram precisions over
// orders 1..min(n, |candidate|) times the brevity penalty exp(1 - r/c) when
// c <= r. Zero when any of those precisions is zero or the candidate is empty.
double bleu(const Tokens& candidate, const Tokens& reference, int n);

// LCS-based F-measure with beta = 1.2.
double rouge_l(const Tokens& candidate, const Tokens& reference);

// Unigram F-mean of exact matches, 10PR / (R + 9P). A labelled stand-in for
// METEOR without stemming, synonyms or fragmentation penalty.
double meteor_proxy(const Tokens& candidate, const Tokens& reference);

// CIDEr with document frequencies from a fixed reference corpus: 10 times the
// mean over orders 1..min(4, max(|c|, |r|)) of the cosine between TF-IDF
// n-gram vectors, idf = log(N / max(1, df)).
class CiderScorer {
 public:
  explicit CiderScorer(const std::vector<Tokens>& reference_corpus);
  double score(const Tokens& candidate, const Tokens& reference) const;
  std::size_t documents() const { return documents_; }

 private:
  std::array<std::map<std::string, double>, 4> df_;
  std::size_t documents_ = 0;
};

struct SentenceScores {
  std::array<double, 4> bleu{};
  double rouge_l = 0.0;
  double cider = 0.0;
  double meteor_proxy = 0.0;
};

SentenceScores score_sentence(const Tokens& candidate, const Tokens& reference,
                              const CiderScorer& cider);

struct ScoredSegment {
  std::string sentence;
  TemporalSegment segment;
};

using VideoEvents = std::map<std::string, std::vector<ScoredSegment>>;

// Metric names in report order.
inline const std::array<const char*, 7> kCaptionMetrics{
    "Bleu_1", "Bleu_2", "Bleu_3", "Bleu_4", "ROUGE_L", "CIDEr", "meteor_proxy"};

struct CaptionScoreReport {
  std::map<std::string, double> scores;  // averaged over thresholds
  std::vector<std::pair<double, std::map<std::string, double>>> per_threshold;
  std::size_t videos = 0;
};

// For each threshold, each prediction is scored against the ground-truth
// event with the highest tIoU (ties: lowest index) when that tIoU clears the
// threshold, otherwise 0. Scores are averaged over a video's predictions
// (0 for a video without predictions), then over the videos that carry
// ground truth, then over thresholds. Only videos present in both maps count.
CaptionScoreReport caption_scores(const VideoEvents& predictions, const VideoEvents& references,
                                  const std::vector<double>& thresholds);

// recall(theta) = fraction of gt segments hit by >= 1 prediction with
// tIoU >= theta. Empty when there is no ground truth.
std::optional<std::vector<std::pair<double, double>>> recall_curve(
    const std::map<std::string, std::vector<TemporalSegment>>& predictions,
    const std::map<std::string, std::vector<TemporalSegment>>& ground_truth,
    const std::vector<double>& grid);

// 0.1, 0.2, ..., 0.9
std::vector<double> default_recall_grid();

struct LocalizationReport {
  std::vector<std::pair<double, double>> recall_at_1;  // (sigma, R@1)
  double miou = 0.0;
  std::size_t sentences = 0;
};

LocalizationReport localization_scores(const std::vector<TemporalSegment>& predictions,
                                       const std::vector<TemporalSegment>& ground_truth,
                                       const std::vector<double>& sigmas);

std::string caption_report_json(const CaptionScoreReport& report);
std::string localization_report_json(const LocalizationReport& report);
std::string recall_report_json(const std::vector<std::pair<double, double>>& curve);
std::string recall_csv(const std::vector<std::pair<double, double>>& curve);

// Threshold label as used for JSON keys, e.g. 0.3 -> "0.3".
std::string threshold_label(double t);

}  // namespace wsdec
