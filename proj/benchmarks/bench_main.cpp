// Hot paths: masked pooling, decoding, metrics and a cycle update.

#include <benchmark/benchmark.h>

#include "wsdec/inference.hpp"
#include "wsdec/metrics.hpp"
#include "wsdec/training.hpp"

using namespace wsdec;

namespace {

VideoFeatures random_features(std::size_t steps, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  VideoFeatures f;
  f.values = Matrix(steps, dim);
  for (double& x : f.values.values()) x = rng.normal();
  return f;
}

struct Fixture {
  SynthSpec spec;
  Corpus corpus;
  Vocabulary vocab;
  ModelConfig mc;

  Fixture() {
    spec.num_videos = 16;
    spec.seed = 3;
    corpus = generate_synthetic_corpus(spec);
    vocab = synthetic_vocabulary(spec);
    mc.feature_dim = spec.feature_dim;
    mc.vocab_size = vocab.size();
    mc.hidden = 64;
    mc.time_features = 8;
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

static void BM_MaskedPool(benchmark::State& state) {
  const VideoFeatures f = random_features(static_cast<std::size_t>(state.range(0)), 512, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(masked_pool(f, TemporalSegment{0.4, 0.3}, MaskConfig{}));
  }
}
BENCHMARK(BM_MaskedPool)->Arg(64)->Arg(256);

static void BM_MaskedPoolBackward(benchmark::State& state) {
  const VideoFeatures f = random_features(64, 512, 2);
  for (auto _ : state) {
    Tape t;
    Matrix seg(1, 2);
    seg[0] = 0.4;
    seg[1] = 0.3;
    Var s = t.variable(std::move(seg));
    Var out = ad::sum(masked_pool(f, s, MaskConfig{}));
    t.backward(out);
    benchmark::DoNotOptimize(t.grad_if_any(s));
  }
}
BENCHMARK(BM_MaskedPoolBackward);

static void BM_DenseCaption(benchmark::State& state) {
  Fixture& fx = fixture();
  const Model model = Model::init(fx.mc, 1);
  const VideoFeatures& f = fx.corpus.entry(0).features;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(dense_caption(model, f, fx.vocab, InferenceConfig{}, ++seed));
  }
}
BENCHMARK(BM_DenseCaption)->Unit(benchmark::kMillisecond);

static void BM_CycleStep(benchmark::State& state) {
  Fixture& fx = fixture();
  TrainState s = TrainState::init(Model::init(fx.mc, 2), 2);
  s.stage = Stage::kStage2;
  TrainConfig tc;
  auto refs = caption_refs(fx.corpus);
  refs.resize(std::min<std::size_t>(refs.size(), 8));
  for (auto _ : state) benchmark::DoNotOptimize(cycle_step(s, fx.corpus, refs, tc));
}
BENCHMARK(BM_CycleStep)->Unit(benchmark::kMillisecond);

static void BM_Tiou(benchmark::State& state) {
  Rng rng(4);
  std::vector<TemporalSegment> segs(1024);
  for (auto& s : segs) s = {rng.uniform(), rng.uniform(0.05, 0.5)};
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tiou(segs[i & 1023], segs[(i + 7) & 1023]));
    ++i;
  }
}
BENCHMARK(BM_Tiou);

static void BM_SentenceScores(benchmark::State& state) {
  const Tokens cand = tokenize("a man is riding a bike down a long dusty road");
  const Tokens ref = tokenize("a person rides a bicycle along the dusty road slowly");
  for (auto _ : state) {
    benchmark::DoNotOptimize(bleu(cand, ref, 4));
    benchmark::DoNotOptimize(rouge_l(cand, ref));
    benchmark::DoNotOptimize(meteor_proxy(cand, ref));
  }
}
BENCHMARK(BM_SentenceScores);
BENCHMARK_MAIN();
