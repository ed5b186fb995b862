#include <filesystem>
#include <sstream>

#include "commands.hpp"
#include "doctest.h"
#include "support.hpp"
#include "wsdec/checkpoint.hpp"
#include "wsdec/config.hpp"

using namespace wsdec;
namespace fs = std::filesystem;

TEST_CASE("resolved config text parses back to the same config") {
  RunConfig c;
  c.set("train.lambda_s", "0.25");
  c.set("model.anchor_scales", "1,0.5");
  c.apply_override("seed=19");
  RunConfig back;
  back.parse(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.hash() == c.hash());
  CHECK(back.seed == 19);
  CHECK(back.model.anchor_scales == std::vector<double>{1.0, 0.5});
  CHECK(RunConfig::keys().size() > 30);
}

TEST_CASE("config errors name the key and line") {
  RunConfig c;
  CHECK_THROWS_AS(c.set("train.nope", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("train.batch_size", "-3"), ConfigError);
  try {
    c.parse("seed = 1\ntrain.lambda_s = abc\n", "x.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("x.cfg:2") != std::string::npos);
  }
  c = RunConfig{};
  c.set("model.time_features", "3");
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("shipped synthetic config is valid") {
  RunConfig c;
  c.load(fs::path(WSDEC_SOURCE_DIR) / "configs" / "synthetic.cfg");
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("checkpoint round-trip and shape mismatch") {
  const SynthSpec spec = test::small_spec(2);
  const Corpus corpus = generate_synthetic_corpus(spec);
  ModelConfig mc = test::small_model_config(corpus, synthetic_vocabulary(spec).size());
  mc.time_features = 2;
  TrainState s = TrainState::init(Model::init(mc, 3), 3);
  s.stage = Stage::kStage1;
  s.step = 12;
  s.epoch = 1;
  s.batch = 2;
  s.momentum[0].fill(0.5);
  const fs::path path = fs::temp_directory_path() / "wsdec_ckpt.bin";
  save_checkpoint(path, s, 0xabcdef);

  const LoadedCheckpoint back = load_checkpoint(path, mc);
  CHECK(back.config_hash == 0xabcdef);
  CHECK(back.state.stage == Stage::kStage1);
  CHECK(back.state.step == 12);
  CHECK(back.state.epoch == 1);
  CHECK(back.state.batch == 2);
  CHECK(back.state.momentum[0] == s.momentum[0]);
  const auto pa = s.model.parameters();
  const auto pb = back.state.model.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);

  ModelConfig wrong = mc;
  wrong.hidden = 7;
  try {
    load_checkpoint(path, wrong);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    const std::string what = e.what();
    CHECK(what.find("hidden=7") != std::string::npos);
    CHECK(what.find("hidden=6") != std::string::npos);
  }
}

TEST_CASE("CLI refuses to overwrite without --force") {
  RunConfig c;
  c.synth.num_videos = 2;
  c.synth_test_videos = 1;
  c.synth.steps = 8;
  c.synth.feature_dim = 3;
  const fs::path out = fs::temp_directory_path() / "wsdec_cli_synth";
  fs::remove_all(out);
  std::ostringstream log;
  cli::cmd_synth(c, {out, false}, log);
  CHECK(fs::exists(out / "vocab.txt"));
  CHECK(fs::exists(out / "train.json"));
  CHECK(fs::exists(out / "test.json"));
  CHECK_THROWS_AS(cli::cmd_synth(c, {out, false}, log), cli::UsageError);
  CHECK_NOTHROW(cli::cmd_synth(c, {out, true}, log));
}
