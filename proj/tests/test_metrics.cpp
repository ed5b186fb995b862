#include <cmath>

#include "doctest.h"
#include "json.hpp"
#include "wsdec/metrics.hpp"
#include "wsdec/random.hpp"

using namespace wsdec;

namespace {

// tIoU by counting cells of a fine grid over [0, 1].
double grid_tiou(const TemporalSegment& a, const TemporalSegment& b, std::size_t cells) {
  std::size_t inter = 0, uni = 0;
  const double step = 1.0 / static_cast<double>(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    const double x = (static_cast<double>(i) + 0.5) * step;
    const bool in_a = x >= a.start() && x <= a.end();
    const bool in_b = x >= b.start() && x <= b.end();
    inter += in_a && in_b;
    uni += in_a || in_b;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

VideoEvents two_video_references() {
  return {{"v1", {{"a man jumps high", {0.2, 0.2}}, {"the dog runs", {0.7, 0.3}}}},
          {"v2", {{"a woman sings a song", {0.5, 0.6}}}}};
}

}  // namespace

TEST_CASE("tIoU interval oracle") {
  CHECK(tiou(segment_from_bounds(0.3, 0.7), segment_from_bounds(0.4, 0.8)) ==
        doctest::Approx(0.6).epsilon(1e-12));
  CHECK(tiou({0.2, 0.2}, {0.8, 0.2}) == 0.0);
  CHECK(tiou({0.5, 0.4}, {0.5, 0.4}) == 1.0);
}

TEST_CASE("tIoU matches grid brute force on random pairs") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const TemporalSegment a{rng.uniform(-0.1, 1.1), rng.uniform(0.1, 1.0)};
    const TemporalSegment b{rng.uniform(-0.1, 1.1), rng.uniform(0.1, 1.0)};
    CHECK(std::abs(tiou(a, b) - grid_tiou(a, b, 200000)) < 2e-4);
    CHECK(tiou(a, b) == tiou(b, a));
  }
}

TEST_CASE("BLEU, ROUGE-L and the METEOR stand-in on a worked pair") {
  const Tokens c{"a", "b", "c"}, r{"a", "b", "d"};
  CHECK(std::abs(bleu(c, r, 1) - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(bleu(c, r, 2) - std::sqrt(2.0 / 3.0 * 0.5)) < 1e-12);
  CHECK(bleu(c, r, 3) == 0.0);
  // LCS 2 of 3 both ways: F = 2/3 for any beta.
  CHECK(std::abs(rouge_l(c, r) - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(meteor_proxy(c, r) - 2.0 / 3.0) < 1e-12);
  // Brevity penalty: c = 2, r = 4.
  CHECK(std::abs(bleu({"a", "b"}, {"a", "b", "x", "y"}, 1) - std::exp(1.0 - 2.0)) < 1e-12);
  CHECK(bleu({}, r, 1) == 0.0);
}

TEST_CASE("self-match scores BLEU 1 and CIDEr 10 at every threshold") {
  const VideoEvents refs = two_video_references();
  const CaptionScoreReport rep = caption_scores(refs, refs, {0.3, 0.5, 0.7, 0.9});
  CHECK(rep.videos == 2);
  REQUIRE(rep.per_threshold.size() == 4);
  for (const auto& [theta, row] : rep.per_threshold) {
    for (const char* m : {"Bleu_1", "Bleu_2", "Bleu_3", "Bleu_4", "ROUGE_L", "meteor_proxy"}) {
      CHECK(std::abs(row.at(m) - 1.0) < 1e-6);
    }
    CHECK(std::abs(row.at("CIDEr") - 10.0) < 1e-6);
  }
  CHECK(std::abs(rep.scores.at("CIDEr") - 10.0) < 1e-6);

  const CaptionScoreReport empty = caption_scores({}, refs, {0.5});
  CHECK(empty.videos == 0);
  VideoEvents none{{"v1", {}}, {"v2", {}}};
  CHECK(caption_scores(none, refs, {0.5}).scores.at("Bleu_1") == 0.0);
}

TEST_CASE("caption scores gate on tIoU to the best-matching event") {
  const VideoEvents refs = two_video_references();
  // Right sentence, segment overlapping its event at tIoU 0.5.
  const VideoEvents preds{{"v1", {{"a man jumps high", segment_from_bounds(0.1, 0.4)}}},
                          {"v2", {{"a woman sings a song", {0.5, 0.6}}}}};
  const CaptionScoreReport rep = caption_scores(preds, refs, {0.3, 0.7});
  CHECK(rep.per_threshold[0].second.at("Bleu_1") == doctest::Approx(1.0));
  CHECK(rep.per_threshold[1].second.at("Bleu_1") == doctest::Approx(0.5));
}

TEST_CASE("CIDEr is symmetric in its document-frequency weighting") {
  const std::vector<Tokens> corpus{{"a", "b"}, {"a", "c"}, {"d"}};
  const CiderScorer s(corpus);
  CHECK(s.documents() == 3);
  CHECK(s.score({"a", "b"}, {"a", "b"}) == doctest::Approx(10.0));
  CHECK(s.score({"a", "b"}, {"a", "c"}) == doctest::Approx(s.score({"a", "c"}, {"a", "b"})));
  CHECK(s.score({"x"}, {"d"}) == 0.0);
}

TEST_CASE("recall rule at a single best tIoU of 0.6") {
  const std::map<std::string, std::vector<TemporalSegment>> gt{{"v", {segment_from_bounds(0.3, 0.7)}}};
  const std::map<std::string, std::vector<TemporalSegment>> pred{
      {"v", {segment_from_bounds(0.4, 0.8), segment_from_bounds(0.0, 0.1)}}};
  const auto curve = recall_curve(pred, gt, {0.1, 0.5, 0.6, 0.61, 0.9});
  REQUIRE(curve);
  const double expected[] = {1, 1, 1, 0, 0};
  for (std::size_t i = 0; i < 5; ++i) CHECK((*curve)[i].second == expected[i]);
  CHECK_FALSE(recall_curve(pred, {}, {0.5}));
  CHECK(default_recall_grid().size() == 9);
}

TEST_CASE("recall is monotone in threshold and in added predictions") {
  Rng rng(2);
  const auto grid = default_recall_grid();
  for (int trial = 0; trial < 100; ++trial) {
    std::map<std::string, std::vector<TemporalSegment>> gt, pred;
    for (int v = 0; v < 4; ++v) {
      const std::string id = "v" + std::to_string(v);
      for (int k = 0; k < 3; ++k) gt[id].push_back({rng.uniform(), rng.uniform(0.05, 0.5)});
      for (int k = 0; k < 4; ++k) pred[id].push_back({rng.uniform(), rng.uniform(0.05, 0.8)});
    }
    const auto base = *recall_curve(pred, gt, grid);
    for (std::size_t i = 1; i < base.size(); ++i) CHECK(base[i].second <= base[i - 1].second);
    auto more = pred;
    more["v0"].push_back({rng.uniform(), rng.uniform(0.05, 0.8)});
    const auto grown = *recall_curve(more, gt, grid);
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(grown[i].second >= base[i].second);
  }
}

TEST_CASE("R@1 and mIoU on two sentences with tIoUs 0.2 and 0.6") {
  const std::vector<TemporalSegment> gt{{0.5, 1.0}, {0.5, 1.0}};
  const std::vector<TemporalSegment> pred{{0.5, 0.2}, {0.5, 0.6}};
  const LocalizationReport r = localization_scores(pred, gt, {0.1, 0.3, 0.5});
  CHECK(r.recall_at_1[0].second == 1.0);
  CHECK(r.recall_at_1[1].second == 0.5);
  CHECK(r.recall_at_1[2].second == 0.5);
  CHECK(std::abs(r.miou - 0.4) < 1e-12);
  const auto j = nlohmann::json::parse(localization_report_json(r));
  CHECK(j.size() == 4);
  CHECK(j.at("mIoU").get<double>() == doctest::Approx(0.4));
  CHECK_THROWS(localization_scores(pred, {gt[0]}, {0.5}));
}

TEST_CASE("R@1 is non-increasing in sigma") {
  Rng rng(3);
  std::vector<TemporalSegment> pred, gt;
  for (int i = 0; i < 200; ++i) {
    pred.push_back({rng.uniform(), rng.uniform(0.05, 1.0)});
    gt.push_back({rng.uniform(), rng.uniform(0.05, 1.0)});
  }
  const std::vector<double> sigmas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const LocalizationReport r = localization_scores(pred, gt, sigmas);
  for (std::size_t i = 1; i < sigmas.size(); ++i) {
    CHECK(r.recall_at_1[i].second <= r.recall_at_1[i - 1].second);
  }
}

TEST_CASE("report writers") {
  CHECK(threshold_label(0.3) == "0.3");
  CHECK(threshold_label(0.5) == "0.5");
  const std::vector<std::pair<double, double>> curve{{0.1, 0.75}, {0.5, 0.25}};
  CHECK(recall_csv(curve) == "threshold,recall\n0.1,0.750000\n0.5,0.250000\n");
  const auto j = nlohmann::json::parse(recall_report_json(curve));
  CHECK(j.at("recall@0.5").get<double>() == 0.25);
}
