#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "wsdec/data.hpp"
#include "wsdec/inference.hpp"
#include "wsdec/model.hpp"
#include "wsdec/training.hpp"

namespace wsdec {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Every tunable of a run, addressed by flat dotted keys such as
// `train.lambda_s`. The model's feature_dim and vocab_size are not keys:
// they come from the corpus.
struct RunConfig {
  std::uint64_t seed = 7;
  SynthSpec synth;
  std::size_t synth_test_videos = 100;
  std::size_t vocab_cap = 6000;
  ModelConfig model;
  TrainConfig train;
  InferenceConfig infer;
  std::vector<double> eval_thresholds{0.3, 0.5, 0.7, 0.9};
  std::vector<double> eval_sigmas{0.1, 0.3, 0.5};

  // Throws ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  // "key = value" lines; blank lines and '#' comments ignored.
  void parse(const std::string& text, const std::string& source = "<config>");
  void load(const std::filesystem::path& path);
  // Applies "key=value".
  void apply_override(const std::string& assignment);

  // Fully resolved config, one sorted "key = value" line per key; parsing it
  // back reproduces this config.
  std::string to_text() const;
  std::uint64_t hash() const;

  static std::vector<std::string> keys();

  // Throws ConfigError naming the first invalid field.
  void validate() const;
};

}  // namespace wsdec
