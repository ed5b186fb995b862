#include <utility>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "doctest.h"
#include "support.hpp"
#include "wsdec/checkpoint.hpp"
#include "wsdec/training.hpp"

using namespace wsdec;

namespace {

struct Fixture {
  SynthSpec spec = test::small_spec(6, 21);
  Corpus corpus = generate_synthetic_corpus(spec);
  ModelConfig model_config =
      test::small_model_config(corpus, synthetic_vocabulary(spec).size());
  TrainConfig config;

  Fixture() {
    config.batch_size = 4;
    config.pretrain_epochs = 1;
    config.stage1_epochs = 1;
    config.stage2_epochs = 1;
  }

  TrainState fresh(std::uint64_t seed = 5) const {
    return TrainState::init(Model::init(model_config, seed), seed);
  }
  std::vector<CaptionRef> batch() const {
    auto refs = caption_refs(corpus);
    refs.resize(std::min<std::size_t>(refs.size(), 4));
    return refs;
  }
};

bool same_parameters(const Model& a, const Model& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!(pa[i]->value == pb[i]->value)) return false;
  }
  return true;
}

struct StopTraining {};

}  // namespace

TEST_CASE("caption loss oracles") {
  const std::size_t V = 6000;
  const CaptionTokens cap{{tokens::kBos, 7, 9, tokens::kEos}};
  Tape t;
  CHECK(caption_loss(t.constant(Matrix(3, V)), cap).scalar() ==
        doctest::Approx(std::log(6000.0)).epsilon(1e-12));
  CHECK(std::log(6000.0) == doctest::Approx(8.6995).epsilon(1e-5));

  // Two positions with probabilities 0.5 and 0.25 on the true token.
  const CaptionTokens two{{tokens::kBos, tokens::kUnk, tokens::kEos}};
  Matrix logits(2, 4);
  const double p0[4] = {0.5 / 3, 0.5 / 3, 0.5 / 3, 0.5};
  for (std::size_t j = 0; j < 4; ++j) {
    logits(0, j) = std::log(p0[j]);
    logits(1, j) = std::log(0.25);
  }
  const double expected = -(std::log(0.5) + std::log(0.25)) / 2.0;
  CHECK(caption_loss(t.constant(logits), two).scalar() ==
        doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(1.0397).epsilon(1e-4));

  Matrix sure(2, 4, -1e4);
  sure(0, tokens::kUnk) = sure(1, tokens::kEos) = 0.0;
  CHECK(caption_loss(t.constant(sure), two).scalar() < 1e-12);

  CHECK_THROWS(caption_loss(t.constant(Matrix(2, 4)), cap));
  const CaptionTokens pads{{tokens::kBos, tokens::kPad, tokens::kPad}};
  CHECK_THROWS(caption_loss(t.constant(Matrix(2, 4)), pads));
}

TEST_CASE("reconstruction loss oracles") {
  CHECK(reconstruction_loss({0.5, 0.4}, {0.6, 0.2}) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(reconstruction_loss({0.3, 0.3}, {0.3, 0.3}) == 0.0);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const TemporalSegment a{rng.uniform(), rng.uniform()}, b{rng.uniform(), rng.uniform()};
    CHECK(reconstruction_loss(a, b) == reconstruction_loss(b, a));
    Tape t;
    CHECK(reconstruction_loss(segment_var(t, a), segment_var(t, b)).scalar() ==
          doctest::Approx(reconstruction_loss(a, b)).epsilon(1e-14));
  }
}

TEST_CASE("anchor loss oracles") {
  Tape t;
  CHECK(anchor_loss(t.constant(Matrix(1, 26)), 3).scalar() ==
        doctest::Approx(std::log(26.0)).epsilon(1e-12));
  CHECK(std::log(26.0) == doctest::Approx(3.2581).epsilon(1e-4));

  Matrix sharp(1, 5, -1e4);
  sharp[2] = 0.0;
  CHECK(anchor_loss(t.constant(sharp), 2).scalar() < 1e-12);

  Rng rng(2);
  Matrix logits(1, 6);
  for (double& v : logits.values()) v = rng.normal();
  const std::size_t perm[6] = {4, 0, 5, 1, 3, 2};
  Matrix permuted(1, 6);
  for (std::size_t i = 0; i < 6; ++i) permuted[perm[i]] = logits[i];
  for (std::size_t best = 0; best < 6; ++best) {
    CHECK(anchor_loss(t.constant(logits), best).scalar() ==
          doctest::Approx(anchor_loss(t.constant(permuted), perm[best]).scalar()).epsilon(1e-14));
  }
}

TEST_CASE("pick_anchor: argmax at zero tolerance, coarse-first within tolerance") {
  const AnchorSet anchors = build_anchor_grid({1.0, 0.5});  // (0.5,1) (0.25,.5) (0.5,.5) (0.75,.5)
  const std::vector<double> scores{-2.4, -2.0, -2.0, -3.0};
  CHECK(pick_anchor(anchors, scores, 0.0) == 1);          // tie, lowest index
  CHECK(pick_anchor(anchors, scores, 0.25) == 0);         // cut -2.5 admits the whole video
  CHECK(pick_anchor(anchors, scores, 0.1) == 1);          // cut -2.2 does not
  const std::vector<double> positive{8.0, 10.0, 9.0, 1.0};
  CHECK(pick_anchor(anchors, positive, 0.0) == 1);
  CHECK(pick_anchor(anchors, positive, 0.15) == 1);       // cut 8.5: two fine anchors, higher wins
  CHECK(pick_anchor(anchors, positive, 0.2) == 0);        // cut 8.0 admits the coarse one
  CHECK_THROWS(pick_anchor(anchors, std::vector<double>{1.0}, 0.0));
}

TEST_CASE("anchor labelling with a stub captioner follows tIoU") {
  const AnchorSet anchors = build_anchor_grid({1.0, 0.5, 0.25, 0.125});
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const TemporalSegment event{rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.5)};
    // Likelihood-like score: a strictly increasing function of overlap.
    auto stub = [&](const TemporalSegment& a) { return std::log(1e-3 + tiou(a, event)); };
    std::size_t best = 0;
    for (std::size_t i = 1; i < anchors.size(); ++i) {
      if (tiou(anchors.anchors[i], event) > tiou(anchors.anchors[best], event)) best = i;
    }
    CHECK(label_best_anchor(anchors, stub) == best);
  }
  const AnchorSet single = build_anchor_grid({1.0});
  CHECK(label_best_anchor(single, [](const TemporalSegment&) { return -1.0; }) == 0);
}

TEST_CASE("model-scored anchor labelling: one score per anchor, no tape") {
  Fixture f;
  const TrainState s = f.fresh();
  const CorpusEntry& e = f.corpus.entry(0);
  Tape t;
  t.set_grad_enabled(false);
  const ModelVars vars = bind_model(t, std::as_const(s.model));
  const EncodedSequence video = encode_video(t, vars.encoder, e.features);
  const auto scores = anchor_likelihoods(s.model, e.features, video.hiddens.value(), e.captions[0]);
  REQUIRE(scores.size() == s.model.anchors.size());
  for (double v : scores) CHECK(v < 0.0);
  CHECK(label_best_anchor(s.model, e.features, video.hiddens.value(), e.captions[0]) ==
        pick_anchor(s.model.anchors, scores));
}

TEST_CASE("loss composition and zero weights") {
  Fixture f;
  const auto batch = f.batch();
  for (Stage stage : {Stage::kStage1, Stage::kStage2}) {
    TrainState s = f.fresh();
    s.stage = stage;
    TrainConfig c = f.config;
    c.weights.lambda_s = 0.37;
    c.weights.lambda_a = 0.21;
    const StepLosses l = batch_losses(s, f.corpus, batch, c, false);
    const double composed = l.l_c + c.weights.lambda_s * l.l_s +
                            (l.has_l_a ? c.weights.lambda_a * l.l_a : 0.0);
    CHECK(std::abs(l.total - composed) <= 1e-12);
    CHECK(l.has_l_s);
    CHECK(l.has_l_a == (stage == Stage::kStage2));

    c.weights.lambda_s = 0.0;
    c.weights.lambda_a = 0.0;
    const StepLosses zero = batch_losses(s, f.corpus, batch, c, false);
    CHECK(zero.total == zero.l_c);
    CHECK(zero.l_c == l.l_c);
  }
}

TEST_CASE("stage gating") {
  Fixture f;
  const auto batch = f.batch();
  TrainState s = f.fresh();
  CHECK_THROWS(cycle_step(s, f.corpus, batch, f.config));
  const StepLosses p = pretrain_step(s, f.corpus, batch, f.config);
  CHECK_FALSE(p.has_l_s);
  CHECK_FALSE(p.has_l_a);
  CHECK(p.total == p.l_c);
  s.stage = Stage::kStage1;
  CHECK_THROWS(pretrain_step(s, f.corpus, batch, f.config));
  CHECK_FALSE(cycle_step(s, f.corpus, batch, f.config).has_l_a);
  s.stage = Stage::kStage2;
  CHECK(cycle_step(s, f.corpus, batch, f.config).has_l_a);
}

TEST_CASE("pretraining leaves the localizer head untouched") {
  Fixture f;
  TrainState s = f.fresh();
  const LocalizerHead before = s.model.head;
  for (int i = 0; i < 3; ++i) pretrain_step(s, f.corpus, f.batch(), f.config);
  CHECK(s.model.head.attn_caption.value == before.attn_caption.value);
  CHECK(s.model.head.cls_w.value == before.cls_w.value);
  CHECK(s.model.head.reg_b.value == before.reg_b.value);
  CHECK_FALSE(s.model.decoder.out_w.value == Model::init(f.model_config, 5).decoder.out_w.value);
}

TEST_CASE("training never reads ground truth") {
  Fixture f;
  TrainState s = f.fresh();
  const auto reads = f.corpus.ground_truth_reads();
  train(s, f.corpus, f.config);
  CHECK(s.finished);
  CHECK(f.corpus.ground_truth_reads() == reads);
  CHECK(f.corpus.mode() == AccessMode::kEvaluation);
}

TEST_CASE("seeded training is deterministic") {
  Fixture f;
  std::vector<double> first, second;
  TrainState a = f.fresh(), b = f.fresh();
  TrainHooks ha, hb;
  ha.on_step = [&](const TrainState&, const StepLosses& l) { first.push_back(l.total); };
  hb.on_step = [&](const TrainState&, const StepLosses& l) { second.push_back(l.total); };
  train(a, f.corpus, f.config, ha);
  train(b, f.corpus, f.config, hb);
  REQUIRE(first.size() >= 3);
  CHECK(first == second);
  CHECK(same_parameters(a.model, b.model));
  CHECK(epoch_order(f.corpus, 5, Stage::kStage1, 2).size() == f.corpus.caption_count());
}

TEST_CASE("resuming from a checkpoint reproduces the uninterrupted run") {
  Fixture f;
  f.config.pretrain_epochs = 2;
  TrainState whole = f.fresh();
  train(whole, f.corpus, f.config);

  for (std::uint64_t stop_at : {1, 4, 7}) {
    TrainState part = f.fresh();
    TrainHooks hooks;
    hooks.on_step = [&](const TrainState& st, const StepLosses&) {
      if (st.step == stop_at) throw StopTraining{};
    };
    CHECK_THROWS_AS(train(part, f.corpus, f.config, hooks), StopTraining);
    const auto path = std::filesystem::temp_directory_path() / "wsdec_resume.bin";
    save_checkpoint(path, part, 99);
    LoadedCheckpoint back = load_checkpoint(path, f.model_config);
    CHECK(back.config_hash == 99);
    CHECK(back.state.step == stop_at);
    train(back.state, f.corpus, f.config);
    CHECK(back.state.step == whole.step);
    CHECK(same_parameters(back.state.model, whole.model));
  }
}

TEST_CASE("pretraining overfits a one-sentence corpus") {
  SynthSpec spec = test::small_spec(1, 4);
  spec.min_events = spec.max_events = 1;
  Corpus corpus = generate_synthetic_corpus(spec);
  ModelConfig mc = test::small_model_config(corpus, synthetic_vocabulary(spec).size());
  mc.hidden = 16;
  TrainConfig c;
  c.batch_size = 1;
  c.pretrain_epochs = 600;
  c.stage1_epochs = c.stage2_epochs = 0;
  TrainState s = TrainState::init(Model::init(mc, 1), 1);
  std::vector<double> losses;
  TrainHooks hooks;
  hooks.on_step = [&](const TrainState&, const StepLosses& l) { losses.push_back(l.l_c); };
  train(s, corpus, c, hooks);
  REQUIRE(losses.size() == 600);
  CHECK(losses.front() > 1.0);
  CHECK(losses.back() < 0.05);
}
