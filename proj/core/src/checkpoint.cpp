#include "wsdec/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace wsdec {

using nlohmann::json;

namespace {

constexpr std::array<char, 8> kMagic{'W', 'S', 'D', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::ostream& out, T v) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <class T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw CheckpointError("checkpoint truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
  return v;
}

void put_tensor(std::ostream& out, const Matrix& m) {
  for (double v : m.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

void get_tensor(std::istream& in, Matrix& m) {
  for (double& v : m.values()) v = std::bit_cast<float>(get_le<std::uint32_t>(in));
}

json model_json(const ModelConfig& c) {
  return {{"feature_dim", c.feature_dim},   {"hidden", c.hidden},
          {"time_features", c.time_features},
          {"attention_init", c.attention_init},
          {"vocab_size", c.vocab_size},     {"anchor_scales", c.anchor_scales},
          {"mask_k", c.mask.k},             {"max_caption_len", c.max_caption_len}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig c;
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.time_features = j.value("time_features", std::size_t{0});
  c.attention_init = j.value("attention_init", 1.0);
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.anchor_scales = j.at("anchor_scales").get<std::vector<double>>();
  c.mask.k = j.at("mask_k").get<double>();
  c.max_caption_len = j.at("max_caption_len").get<std::size_t>();
  return c;
}

std::string shape_summary(const ModelConfig& c) {
  std::ostringstream s;
  s << "feature_dim=" << c.feature_dim << " hidden=" << c.hidden
    << " time_features=" << c.time_features << " vocab_size=" << c.vocab_size
    << " anchors=" << build_anchor_grid(c.anchor_scales).size();
  return s.str();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     std::uint64_t config_hash) {
  const auto params = state.model.parameters();
  json tensors = json::array();
  for (const Parameter* p : params) {
    tensors.push_back({{"name", p->name}, {"shape", {p->value.rows(), p->value.cols()}}});
  }
  char hash_hex[17];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx", static_cast<unsigned long long>(config_hash));
  const json header = {{"model", model_json(state.model.config)},
                       {"tensors", tensors},
                       {"stage", stage_name(state.stage)},
                       {"step", state.step},
                       {"epoch", state.epoch},
                       {"batch", state.batch},
                       {"finished", state.finished},
                       {"seed", state.seed},
                       {"config_hash", hash_hex}};
  const std::string text = header.dump();

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const Parameter* p : params) put_tensor(out, p->value);
    for (const Matrix& m : state.momentum) put_tensor(out, m);
    out.flush();
    if (!out) throw CheckpointError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw CheckpointError(path.string() + " is not a checkpoint");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto length = get_le<std::uint64_t>(in);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw CheckpointError("checkpoint header truncated");

  json header;
  ModelConfig config;
  try {
    header = json::parse(text);
    config = model_from_json(header.at("model"));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  if (expected) {
    const ModelConfig& e = *expected;
    if (e.feature_dim != config.feature_dim || e.hidden != config.hidden ||
        e.time_features != config.time_features ||
        e.vocab_size != config.vocab_size || e.anchor_scales != config.anchor_scales) {
      throw CheckpointError("config/checkpoint shape mismatch: config has " + shape_summary(e) +
                            ", checkpoint has " + shape_summary(config));
    }
  }

  LoadedCheckpoint out;
  out.state = TrainState::init(Model::init(config, 0), header.at("seed").get<std::uint64_t>());
  auto params = out.state.model.parameters();
  const json& tensors = header.at("tensors");
  if (tensors.size() != params.size()) {
    throw CheckpointError("checkpoint lists " + std::to_string(tensors.size()) +
                          " tensors, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto shape = tensors[i].at("shape").get<std::vector<std::size_t>>();
    const std::string name = tensors[i].at("name").get<std::string>();
    if (name != params[i]->name || shape.size() != 2 || shape[0] != params[i]->value.rows() ||
        shape[1] != params[i]->value.cols()) {
      throw CheckpointError("tensor " + std::to_string(i) + " is " + name + " [" +
                            (shape.size() == 2 ? std::to_string(shape[0]) + "x" +
                                                     std::to_string(shape[1])
                                               : std::string("?")) +
                            "], model expects " + params[i]->name + " " +
                            params[i]->value.shape_string());
    }
  }
  for (Parameter* p : params) get_tensor(in, p->value);
  for (Matrix& m : out.state.momentum) get_tensor(in, m);
  in.peek();
  if (!in.eof()) throw CheckpointError("trailing bytes after checkpoint payload");

  out.state.stage = parse_stage(header.at("stage").get<std::string>());
  out.state.step = header.at("step").get<std::uint64_t>();
  out.state.epoch = header.at("epoch").get<std::size_t>();
  out.state.batch = header.at("batch").get<std::size_t>();
  out.state.finished = header.at("finished").get<bool>();
  out.config_hash = std::stoull(header.at("config_hash").get<std::string>(), nullptr, 16);
  return out;
}

}  // namespace wsdec
