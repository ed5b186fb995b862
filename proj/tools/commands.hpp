#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "wsdec/config.hpp"

namespace wsdec::cli {

// Thrown for bad command-line input or refused operations (exit code 2).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthArgs {
  std::filesystem::path out;
  bool force = false;
};

struct TrainArgs {
  std::filesystem::path corpus;
  std::filesystem::path out;
  std::optional<std::filesystem::path> resume;
  bool force = false;
};

enum class InferMode { kDense, kLocalization };

struct InferArgs {
  std::filesystem::path corpus;
  std::filesystem::path checkpoint;
  std::filesystem::path out;
  std::string split = "test";
  InferMode mode = InferMode::kDense;
  bool dump_diagnostics = false;
};

enum class EvalMode { kCaptioning, kLocalization, kRecall };

struct EvalArgs {
  std::filesystem::path predictions;
  std::filesystem::path annotations;
  std::filesystem::path out;
  EvalMode mode = EvalMode::kCaptioning;
};

void cmd_synth(const RunConfig& config, const SynthArgs& args, std::ostream& log);
void cmd_train(const RunConfig& config, const TrainArgs& args, std::ostream& log);
void cmd_infer(const RunConfig& config, const InferArgs& args, std::ostream& log);
void cmd_eval(const RunConfig& config, const EvalArgs& args, std::ostream& log);

// Model shape implied by a config plus the corpus it trains on.
ModelConfig model_config_for(const RunConfig& config, std::size_t feature_dim,
                             std::size_t vocab_size);

}  // namespace wsdec::cli
