#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "wsdec/checkpoint.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Config file (key = value lines)");
  cmd->add_option("--seed", c.seed, "Overrides the config seed");
  cmd->add_option("--set", c.overrides, "Config override key=value (repeatable)");
}

wsdec::RunConfig resolve(const Common& c) {
  wsdec::RunConfig cfg;
  if (!c.config.empty()) cfg.load(c.config);
  for (const auto& o : c.overrides) cfg.apply_override(o);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace wsdec::cli;
  CLI::App app{"Weakly supervised dense event captioning"};
  app.require_subcommand(1);

  Common common;
  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate the synthetic corpus");
  add_common(synth_cmd, common);
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_flag("--force", synth.force, "Overwrite an existing output directory");

  TrainArgs train;
  std::string resume;
  auto* train_cmd = app.add_subcommand("train", "Pretrain, then run both cycle stages");
  add_common(train_cmd, common);
  train_cmd->add_option("--corpus", train.corpus, "Corpus directory from synth")->required();
  train_cmd->add_option("--out", train.out, "Run directory")->required();
  train_cmd->add_option("--resume", resume, "Checkpoint to resume from");
  train_cmd->add_flag("--force", train.force, "Overwrite an existing run directory");

  InferArgs infer;
  std::string infer_mode = "dense";
  auto* infer_cmd = app.add_subcommand("infer", "Dense captioning or sentence localization");
  add_common(infer_cmd, common);
  infer_cmd->add_option("--corpus", infer.corpus, "Corpus directory")->required();
  infer_cmd->add_option("--checkpoint", infer.checkpoint, "Trained checkpoint")->required();
  infer_cmd->add_option("--out", infer.out, "Prediction JSON path")->required();
  infer_cmd->add_option("--split", infer.split, "Annotation split (train|test)");
  infer_cmd->add_option("--mode", infer_mode, "dense | localization")
      ->check(CLI::IsMember({"dense", "localization"}));
  infer_cmd->add_flag("--dump-diagnostics", infer.dump_diagnostics,
                      "Add proposal and contraction diagnostics");

  EvalArgs eval;
  std::string eval_mode = "captioning";
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against annotations");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--predictions", eval.predictions, "Prediction JSON")->required();
  eval_cmd->add_option("--annotations", eval.annotations, "Annotation JSON")->required();
  eval_cmd->add_option("--out", eval.out, "Report JSON path")->required();
  eval_cmd->add_option("--mode", eval_mode, "captioning | localization | recall")
      ->check(CLI::IsMember({"captioning", "localization", "recall"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    const wsdec::RunConfig cfg = resolve(common);
    if (*synth_cmd) {
      cmd_synth(cfg, synth, std::cout);
    } else if (*train_cmd) {
      if (!resume.empty()) train.resume = resume;
      cmd_train(cfg, train, std::cout);
    } else if (*infer_cmd) {
      infer.mode = infer_mode == "dense" ? InferMode::kDense : InferMode::kLocalization;
      cmd_infer(cfg, infer, std::cout);
    } else if (*eval_cmd) {
      eval.mode = eval_mode == "captioning"     ? EvalMode::kCaptioning
                  : eval_mode == "localization" ? EvalMode::kLocalization
                                                : EvalMode::kRecall;
      cmd_eval(cfg, eval, std::cout);
    }
  } catch (const wsdec::NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
