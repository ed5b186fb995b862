#include "wsdec/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace wsdec {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size()) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
  return out;
}

std::string format_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

struct Field {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

Field real(std::string key, double& slot) {
  return {key, [key, &slot](const std::string& v) { slot = parse_double(key, v); },
          [&slot] { return format_double(slot); }};
}

template <class T>
Field count(std::string key, T& slot) {
  return {key, [key, &slot](const std::string& v) { slot = static_cast<T>(parse_uint(key, v)); },
          [&slot] { return std::to_string(slot); }};
}

Field list(std::string key, std::vector<double>& slot) {
  return {key, [key, &slot](const std::string& v) { slot = parse_list(key, v); },
          [&slot] { return format_list(slot); }};
}

std::vector<Field> fields(RunConfig& c) {
  std::vector<Field> f{
      count("seed", c.seed),
      count("synth.num_videos", c.synth.num_videos),
      count("synth.test_videos", c.synth_test_videos),
      count("synth.steps", c.synth.steps),
      count("synth.feature_dim", c.synth.feature_dim),
      count("synth.num_event_types", c.synth.num_event_types),
      count("synth.min_events", c.synth.min_events),
      count("synth.max_events", c.synth.max_events),
      real("synth.noise_std", c.synth.noise_std),
      real("synth.signal_scale", c.synth.signal_scale),
      real("synth.min_event_fraction", c.synth.min_event_fraction),
      real("synth.max_event_fraction", c.synth.max_event_fraction),
      real("synth.seconds_per_step", c.synth.seconds_per_step),
      count("data.vocab_cap", c.vocab_cap),
      count("model.hidden", c.model.hidden),
      count("model.time_features", c.model.time_features),
      real("model.attention_init", c.model.attention_init),
      list("model.anchor_scales", c.model.anchor_scales),
      real("model.mask_k", c.model.mask.k),
      count("model.max_caption_len", c.model.max_caption_len),
      real("train.lambda_s", c.train.weights.lambda_s),
      real("train.lambda_a", c.train.weights.lambda_a),
      real("train.sigma", c.train.weights.sigma),
      real("train.anchor_tolerance", c.train.weights.anchor_tolerance),
      real("train.learning_rate", c.train.learning_rate),
      real("train.momentum", c.train.momentum),
      real("train.clip_norm", c.train.clip_norm),
      count("train.batch_size", c.train.batch_size),
      count("train.pretrain_epochs", c.train.pretrain_epochs),
      count("train.stage1_epochs", c.train.stage1_epochs),
      count("train.stage2_epochs", c.train.stage2_epochs),
      count("infer.num_proposals", c.infer.num_proposals),
      real("infer.iou_keep", c.infer.iou_keep),
      real("infer.dedup_iou", c.infer.dedup_iou),
      count("infer.rounds", c.infer.rounds),
      real("infer.min_width", c.infer.min_width),
      list("eval.thresholds", c.eval_thresholds),
      list("eval.sigmas", c.eval_sigmas),
  };
  std::sort(f.begin(), f.end(), [](const Field& a, const Field& b) { return a.key < b.key; });
  return f;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (Field& f : fields(*this)) {
    if (f.key == key) {
      f.set(value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::parse(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  parse(ss.str(), path.string());
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const Field& f : fields(const_cast<RunConfig&>(*this))) {
    out += f.key + " = " + f.get() + "\n";
  }
  return out;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(to_text()); }

std::vector<std::string> RunConfig::keys() {
  RunConfig c;
  std::vector<std::string> out;
  for (const Field& f : fields(c)) out.push_back(f.key);
  return out;
}

void RunConfig::validate() const {
  try {
    SynthSpec s = synth;
    s.seed = seed;
    s.validate();
    if (vocab_cap < 5) throw std::invalid_argument("data.vocab_cap must be at least 5");
    ModelConfig m = model;
    m.feature_dim = std::max<std::size_t>(m.feature_dim, 1);
    m.validate();
    train.validate();
    infer.validate();
    for (const auto* list : {&eval_thresholds, &eval_sigmas}) {
      for (double t : *list) {
        if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("eval thresholds must lie in [0, 1]");
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace wsdec
