#include "wsdec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "wsdec/data.hpp"
#include "wsdec/format.hpp"

namespace wsdec {

namespace {

constexpr double kTol = 1e-9;

using NgramCounts = std::map<std::string, double>;

NgramCounts ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t j = 1; j < n; ++j) {
      key += ' ';
      key += tokens[i + j];
    }
    out[key] += 1.0;
  }
  return out;
}

double clipped_matches(const NgramCounts& cand, const NgramCounts& ref) {
  double m = 0.0;
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double bleu(const Tokens& candidate, const Tokens& reference, int n) {
  if (n < 1) throw std::invalid_argument("bleu order must be >= 1");
  if (candidate.empty()) return 0.0;
  const std::size_t orders = std::min<std::size_t>(static_cast<std::size_t>(n), candidate.size());
  double log_sum = 0.0;
  for (std::size_t k = 1; k <= orders; ++k) {
    const double matched = clipped_matches(ngrams(candidate, k), ngrams(reference, k));
    if (matched == 0.0) return 0.0;
    log_sum += std::log(matched / static_cast<double>(candidate.size() - k + 1));
  }
  const auto c = static_cast<double>(candidate.size());
  const auto r = static_cast<double>(reference.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / static_cast<double>(orders));
}

double rouge_l(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(candidate, reference));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  constexpr double beta2 = 1.2 * 1.2;
  return (1.0 + beta2) * p * r / (r + beta2 * p);
}

double meteor_proxy(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const double m = clipped_matches(ngrams(candidate, 1), ngrams(reference, 1));
  if (m == 0.0) return 0.0;
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  return 10.0 * p * r / (r + 9.0 * p);
}

CiderScorer::CiderScorer(const std::vector<Tokens>& reference_corpus)
    : documents_(reference_corpus.size()) {
  for (const Tokens& doc : reference_corpus) {
    for (std::size_t n = 1; n <= 4; ++n) {
      for (const auto& entry : ngrams(doc, n)) df_[n - 1][entry.first] += 1.0;
    }
  }
}

double CiderScorer::score(const Tokens& candidate, const Tokens& reference) const {
  const std::size_t orders = std::min<std::size_t>(4, std::max(candidate.size(), reference.size()));
  if (orders == 0 || documents_ == 0) return 0.0;
  const auto docs = static_cast<double>(documents_);
  double total = 0.0;
  for (std::size_t n = 1; n <= orders; ++n) {
    const NgramCounts c = ngrams(candidate, n);
    const NgramCounts r = ngrams(reference, n);
    auto idf = [&](const std::string& g) {
      auto it = df_[n - 1].find(g);
      const double df = it == df_[n - 1].end() ? 0.0 : it->second;
      return std::log(docs / std::max(1.0, df));
    };
    double dot = 0.0, nc = 0.0, nr = 0.0;
    for (const auto& [g, v] : c) {
      const double x = v * idf(g);
      nc += x * x;
      auto it = r.find(g);
      if (it != r.end()) dot += x * it->second * idf(g);
    }
    for (const auto& [g, v] : r) {
      const double y = v * idf(g);
      nr += y * y;
    }
    if (nc == 0.0 || nr == 0.0) {
      // Every n-gram carries zero weight; fall back to exact agreement.
      total += c == r ? 1.0 : 0.0;
    } else {
      total += dot / (std::sqrt(nc) * std::sqrt(nr));
    }
  }
  return 10.0 * total / static_cast<double>(orders);
}

SentenceScores score_sentence(const Tokens& candidate, const Tokens& reference,
                              const CiderScorer& cider) {
  SentenceScores s;
  for (int n = 1; n <= 4; ++n) s.bleu[n - 1] = bleu(candidate, reference, n);
  s.rouge_l = rouge_l(candidate, reference);
  s.cider = cider.score(candidate, reference);
  s.meteor_proxy = meteor_proxy(candidate, reference);
  return s;
}

namespace {

std::array<double, 7> as_array(const SentenceScores& s) {
  return {s.bleu[0], s.bleu[1], s.bleu[2], s.bleu[3], s.rouge_l, s.cider, s.meteor_proxy};
}

}  // namespace

CaptionScoreReport caption_scores(const VideoEvents& predictions, const VideoEvents& references,
                                  const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw std::invalid_argument("caption_scores needs thresholds");
  std::vector<Tokens> corpus;
  for (const auto& entry : references) {
    for (const ScoredSegment& r : entry.second) corpus.push_back(tokenize(r.sentence));
  }
  const CiderScorer cider(corpus);

  // Per video: each prediction's best-match tIoU and its scores against that
  // reference; thresholds only gate these.
  struct Scored {
    double iou = 0.0;
    std::array<double, 7> values{};
  };
  std::vector<std::vector<Scored>> videos;
  for (const auto& [id, refs] : references) {
    if (refs.empty()) continue;
    auto it = predictions.find(id);
    if (it == predictions.end()) continue;
    std::vector<Scored> scored;
    for (const ScoredSegment& p : it->second) {
      std::size_t best = 0;
      double best_iou = -1.0;
      for (std::size_t j = 0; j < refs.size(); ++j) {
        const double v = tiou(p.segment, refs[j].segment);
        if (v > best_iou) {
          best_iou = v;
          best = j;
        }
      }
      scored.push_back({best_iou, as_array(score_sentence(tokenize(p.sentence),
                                                          tokenize(refs[best].sentence), cider))});
    }
    videos.push_back(std::move(scored));
  }

  CaptionScoreReport report;
  report.videos = videos.size();
  std::array<double, 7> overall{};
  for (double theta : thresholds) {
    std::array<double, 7> sums{};
    for (const auto& preds : videos) {
      if (preds.empty()) continue;
      std::array<double, 7> video{};
      for (const Scored& s : preds) {
        if (s.iou < theta - kTol) continue;
        for (std::size_t m = 0; m < 7; ++m) video[m] += s.values[m];
      }
      for (std::size_t m = 0; m < 7; ++m) sums[m] += video[m] / static_cast<double>(preds.size());
    }
    std::map<std::string, double> row;
    for (std::size_t m = 0; m < 7; ++m) {
      const double v = videos.empty() ? 0.0 : sums[m] / static_cast<double>(videos.size());
      row[kCaptionMetrics[m]] = v;
      overall[m] += v;
    }
    report.per_threshold.emplace_back(theta, std::move(row));
  }
  for (std::size_t m = 0; m < 7; ++m) {
    report.scores[kCaptionMetrics[m]] = overall[m] / static_cast<double>(thresholds.size());
  }
  return report;
}

std::optional<std::vector<std::pair<double, double>>> recall_curve(
    const std::map<std::string, std::vector<TemporalSegment>>& predictions,
    const std::map<std::string, std::vector<TemporalSegment>>& ground_truth,
    const std::vector<double>& grid) {
  // Best tIoU reached by any prediction, per gt segment.
  std::vector<double> best;
  for (const auto& [id, gts] : ground_truth) {
    auto it = predictions.find(id);
    for (const TemporalSegment& g : gts) {
      double b = 0.0;
      if (it != predictions.end()) {
        for (const TemporalSegment& p : it->second) b = std::max(b, tiou(p, g));
      }
      best.push_back(b);
    }
  }
  if (best.empty()) return std::nullopt;
  std::vector<std::pair<double, double>> curve;
  for (double theta : grid) {
    const auto hits = std::count_if(best.begin(), best.end(),
                                    [&](double b) { return b >= theta - kTol; });
    curve.emplace_back(theta, static_cast<double>(hits) / static_cast<double>(best.size()));
  }
  return curve;
}

std::vector<double> default_recall_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 9; ++i) grid.push_back(i / 10.0);
  return grid;
}

LocalizationReport localization_scores(const std::vector<TemporalSegment>& predictions,
                                       const std::vector<TemporalSegment>& ground_truth,
                                       const std::vector<double>& sigmas) {
  if (predictions.size() != ground_truth.size()) {
    throw std::invalid_argument("localization_scores: " + std::to_string(predictions.size()) +
                                " predictions for " + std::to_string(ground_truth.size()) +
                                " sentences");
  }
  LocalizationReport report;
  report.sentences = predictions.size();
  std::vector<double> ious(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    ious[i] = tiou(predictions[i], ground_truth[i]);
  }
  for (double sigma : sigmas) {
    double r = 0.0;
    if (!ious.empty()) {
      const auto hits =
          std::count_if(ious.begin(), ious.end(), [&](double v) { return v >= sigma - kTol; });
      r = static_cast<double>(hits) / static_cast<double>(ious.size());
    }
    report.recall_at_1.emplace_back(sigma, r);
  }
  if (!ious.empty()) {
    report.miou = std::accumulate(ious.begin(), ious.end(), 0.0) / static_cast<double>(ious.size());
  }
  return report;
}

std::string threshold_label(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", t);
  return buf;
}

std::string caption_report_json(const CaptionScoreReport& report) {
  std::ostringstream out;
  out << "{\n";
  for (const char* m : kCaptionMetrics) {
    out << "  " << json_string(m) << ": " << fixed6(report.scores.at(m)) << ",\n";
  }
  out << "  \"per_threshold\": {";
  for (std::size_t i = 0; i < report.per_threshold.size(); ++i) {
    const auto& [theta, row] = report.per_threshold[i];
    out << (i == 0 ? "\n" : ",\n") << "    " << json_string(threshold_label(theta)) << ": {";
    for (std::size_t m = 0; m < kCaptionMetrics.size(); ++m) {
      out << (m == 0 ? "" : ", ") << json_string(kCaptionMetrics[m]) << ": "
          << fixed6(row.at(kCaptionMetrics[m]));
    }
    out << "}";
  }
  out << (report.per_threshold.empty() ? "}" : "\n  }") << "\n}\n";
  return out.str();
}

std::string localization_report_json(const LocalizationReport& report) {
  std::ostringstream out;
  out << "{\n";
  for (const auto& [sigma, r] : report.recall_at_1) {
    out << "  " << json_string("R@1,IoU=" + threshold_label(sigma)) << ": " << fixed6(r) << ",\n";
  }
  out << "  \"mIoU\": " << fixed6(report.miou) << "\n}\n";
  return out.str();
}

std::string recall_report_json(const std::vector<std::pair<double, double>>& curve) {
  std::ostringstream out;
  out << "{";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    out << (i == 0 ? "\n" : ",\n") << "  " << json_string("recall@" + threshold_label(curve[i].first))
        << ": " << fixed6(curve[i].second);
  }
  out << (curve.empty() ? "}\n" : "\n}\n");
  return out.str();
}

std::string recall_csv(const std::vector<std::pair<double, double>>& curve) {
  std::ostringstream out;
  out << "threshold,recall\n";
  for (const auto& [theta, r] : curve) out << threshold_label(theta) << "," << fixed6(r) << "\n";
  return out.str();
}

}  // namespace wsdec
