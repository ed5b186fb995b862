#include "wsdec/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "wsdec/random.hpp"

namespace wsdec {

using nlohmann::json;

void VideoFeatures::validate() const {
  if (steps() < 2) {
    throw DataError("video features need at least 2 steps, got " + std::to_string(steps()));
  }
  if (dim() < 1) throw DataError("video features need a positive feature dimension");
  if (!all_finite(values)) throw DataError("video features contain non-finite values");
  if (!(duration_seconds > 0.0) || !std::isfinite(duration_seconds)) {
    throw DataError("video duration must be positive");
  }
}

std::vector<TokenId> CaptionTokens::body() const {
  if (ids.size() < 2) return {};
  return {ids.begin() + 1, ids.end() - 1};
}

CaptionTokens CaptionTokens::from_body(const std::vector<TokenId>& body, std::size_t max_len) {
  if (max_len < 2) throw DataError("max caption length must allow BOS and EOS");
  CaptionTokens c;
  const std::size_t keep = std::min(body.size(), max_len - 2);
  c.ids.reserve(keep + 2);
  c.ids.push_back(tokens::kBos);
  c.ids.insert(c.ids.end(), body.begin(), body.begin() + static_cast<long>(keep));
  c.ids.push_back(tokens::kEos);
  return c;
}

void CaptionTokens::validate(std::size_t vocab_size, std::size_t max_len) const {
  if (ids.size() < 2 || ids.size() > max_len) {
    throw DataError("caption length " + std::to_string(ids.size()) + " outside [2, " +
                    std::to_string(max_len) + "]");
  }
  if (ids.front() != tokens::kBos || ids.back() != tokens::kEos) {
    throw DataError("caption must start with BOS and end with EOS");
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab_size) {
      throw DataError("caption token id out of vocabulary range");
    }
    if (ids[i] == tokens::kEos && i + 1 != ids.size()) throw DataError("EOS before the end");
  }
}

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : sentence) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else if (!std::ispunct(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>"}) {
    token_to_id_.emplace(s, static_cast<TokenId>(id_to_token_.size()));
    id_to_token_.emplace_back(s);
  }
}

void Vocabulary::add(const std::string& token) {
  if (token.empty() || token_to_id_.contains(token)) {
    throw DataError("vocabulary token empty or duplicated: '" + token + "'");
  }
  token_to_id_.emplace(token, static_cast<TokenId>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end() || it->second < tokens::kNumSpecials) return tokens::kUnk;
  return it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  return id_to_token_.at(static_cast<std::size_t>(id));
}

CaptionTokens Vocabulary::encode(std::string_view sentence, std::size_t max_len) const {
  std::vector<TokenId> body;
  for (const auto& t : tokenize(sentence)) body.push_back(id(t));
  return CaptionTokens::from_body(body, max_len);
}

std::string Vocabulary::decode(const CaptionTokens& caption) const {
  std::string out;
  for (TokenId t : caption.ids) {
    if (t == tokens::kPad || t == tokens::kBos || t == tokens::kEos) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(t);
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write vocabulary file " + path.string());
  for (std::size_t i = tokens::kNumSpecials; i < id_to_token_.size(); ++i) {
    os << id_to_token_[i] << '\n';
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read vocabulary file " + path.string());
  Vocabulary v;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.add(line);
  }
  return v;
}

Vocabulary build_vocabulary(const std::vector<std::string>& sentences, std::size_t cap) {
  if (cap < 5) throw DataError("vocabulary cap must be at least 5");
  std::map<std::string, std::size_t> counts;
  for (const auto& s : sentences) {
    for (auto& t : tokenize(s)) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  const std::size_t keep = std::min(ranked.size(), cap - tokens::kNumSpecials);
  for (std::size_t i = 0; i < keep; ++i) {
    // Specials are spelled with brackets, which tokenize() strips, so no clash.
    v.add(ranked[i].first);
  }
  return v;
}

// ---------------------------------------------------------------- Corpus

Corpus::Corpus(const Corpus& other)
    : entries_(other.entries_), gt_(other.gt_), mode_(other.mode_), gt_reads_(0) {}

Corpus& Corpus::operator=(const Corpus& other) {
  if (this != &other) {
    entries_ = other.entries_;
    gt_ = other.gt_;
    mode_ = other.mode_;
    gt_reads_ = 0;
  }
  return *this;
}

Corpus::Corpus(Corpus&& other) noexcept
    : entries_(std::move(other.entries_)),
      gt_(std::move(other.gt_)),
      mode_(other.mode_),
      gt_reads_(other.gt_reads_.load()) {}

Corpus& Corpus::operator=(Corpus&& other) noexcept {
  entries_ = std::move(other.entries_);
  gt_ = std::move(other.gt_);
  mode_ = other.mode_;
  gt_reads_ = other.gt_reads_.load();
  return *this;
}

void Corpus::add(CorpusEntry entry, std::optional<std::vector<TemporalSegment>> gt) {
  if (gt && gt->size() != entry.captions.size()) {
    throw DataError("video " + entry.video_id + ": " + std::to_string(gt->size()) +
                    " segments for " + std::to_string(entry.captions.size()) + " captions");
  }
  if (entry.sentences.size() != entry.captions.size()) {
    throw DataError("video " + entry.video_id + ": sentences and captions differ in length");
  }
  entries_.push_back(std::move(entry));
  gt_.push_back(std::move(gt));
}

std::size_t Corpus::caption_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.captions.size();
  return n;
}

const std::vector<TemporalSegment>& Corpus::ground_truth(std::size_t i) const {
  ++gt_reads_;
  if (mode_ == AccessMode::kWeak) {
    throw WeakSupervisionViolation("ground-truth segments read while the corpus is in weak mode");
  }
  const auto& gt = gt_.at(i);
  if (!gt) throw DataError("video " + entries_.at(i).video_id + " has no ground truth");
  return *gt;
}

bool operator==(const Corpus& a, const Corpus& b) {
  if (a.entries_.size() != b.entries_.size() || a.gt_ != b.gt_) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    const auto& x = a.entries_[i];
    const auto& y = b.entries_[i];
    if (x.video_id != y.video_id || x.sentences != y.sentences ||
        x.features.values != y.features.values ||
        x.features.duration_seconds != y.features.duration_seconds ||
        x.captions.size() != y.captions.size()) {
      return false;
    }
    for (std::size_t j = 0; j < x.captions.size(); ++j) {
      if (x.captions[j].ids != y.captions[j].ids) return false;
    }
  }
  return true;
}

WeakModeGuard::WeakModeGuard(Corpus& corpus) : corpus_(corpus), previous_(corpus.mode()) {
  corpus_.set_mode(AccessMode::kWeak);
}

WeakModeGuard::~WeakModeGuard() { corpus_.set_mode(previous_); }

// ---------------------------------------------------------------- synthesis

void SynthSpec::validate() const {
  if (num_videos == 0 || steps < 2 || feature_dim == 0 || num_event_types == 0 ||
      min_events == 0 || max_events < min_events) {
    throw DataError("synthetic spec: counts must be positive and min_events <= max_events");
  }
  if (!(noise_std > 0.0) || !(signal_scale > 0.0) || !(seconds_per_step > 0.0)) {
    throw DataError("synthetic spec: noise, signal and step duration must be positive");
  }
  if (!(min_event_fraction > 0.0) || max_event_fraction < min_event_fraction ||
      max_event_fraction > 1.0) {
    throw DataError("synthetic spec: event fractions must satisfy 0 < min <= max <= 1");
  }
}

namespace {

constexpr std::array<const char*, 48> kWordBank = {
    "person",  "slices",   "bread",   "knife",    "dog",     "chases",  "ball",     "park",
    "woman",   "plays",    "guitar",  "stage",    "man",     "paints",  "fence",    "brush",
    "child",   "jumps",    "rope",    "yard",     "chef",    "stirs",   "soup",     "pot",
    "girl",    "rides",    "bicycle", "street",   "boy",     "throws",  "frisbee",  "beach",
    "athlete", "lifts",    "weights", "gym",      "dancer",  "spins",   "slowly",   "studio",
    "worker",  "hammers",  "nail",    "board",    "surfer",  "catches", "wave",     "ocean"};

struct SyntheticWorld {
  std::vector<std::vector<std::string>> templates;  // per type
  std::vector<std::vector<double>> means;           // per type, feature_dim
};

SyntheticWorld make_world(const SynthSpec& spec) {
  Rng rng(derive_seed(spec.seed, {0}));
  std::vector<std::size_t> order(kWordBank.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[rng.uniform_int(0, i)]);
  }
  SyntheticWorld world;
  std::size_t next = 0;
  for (std::size_t t = 0; t < spec.num_event_types; ++t) {
    const auto len = static_cast<std::size_t>(rng.uniform_int(3, 6));
    std::vector<std::string> words;
    for (std::size_t j = 0; j < len; ++j) {
      if (next < order.size()) {
        words.emplace_back(kWordBank[order[next++]]);
      } else {
        words.push_back("type" + std::to_string(t) + "word" + std::to_string(j));
      }
    }
    world.templates.push_back(std::move(words));

    std::vector<double> mean(spec.feature_dim);
    double norm = 0.0;
    for (double& v : mean) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : mean) v *= spec.signal_scale * spec.noise_std / norm;
    world.means.push_back(std::move(mean));
  }
  return world;
}

std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s.push_back(' ');
    s += w;
  }
  return s;
}

std::string video_name(std::size_t index) {
  std::ostringstream os;
  os << "v_";
  os.width(6);
  os.fill('0');
  os << index;
  return os.str();
}

}  // namespace

std::vector<std::string> synthetic_templates(const SynthSpec& spec) {
  spec.validate();
  std::vector<std::string> out;
  for (const auto& t : make_world(spec).templates) out.push_back(join(t));
  return out;
}

Vocabulary synthetic_vocabulary(const SynthSpec& spec) {
  return build_vocabulary(synthetic_templates(spec), 6000);
}

Corpus generate_synthetic_corpus(const SynthSpec& spec) {
  spec.validate();
  const SyntheticWorld world = make_world(spec);
  std::vector<std::string> sentences;
  for (const auto& t : world.templates) sentences.push_back(join(t));
  const Vocabulary vocab = build_vocabulary(sentences, 6000);

  const std::size_t T = spec.steps;
  const auto min_len = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::lround(spec.min_event_fraction * static_cast<double>(T))));
  const auto max_len = std::max<std::size_t>(
      min_len,
      std::min<std::size_t>(
          T, static_cast<std::size_t>(std::lround(spec.max_event_fraction * static_cast<double>(T)))));

  Corpus corpus;
  for (std::size_t v = 0; v < spec.num_videos; ++v) {
    const std::size_t index = spec.first_video + v;
    Rng rng(derive_seed(spec.seed, {1, index}));

    const auto wanted = static_cast<std::size_t>(rng.uniform_int(spec.min_events, spec.max_events));
    struct Event {
      std::size_t begin, end, type;
    };
    std::vector<Event> events;
    std::vector<std::size_t> type_cycle;
    for (std::size_t e = 0; e < wanted; ++e) {
      const auto len = static_cast<std::size_t>(rng.uniform_int(min_len, max_len));
      bool placed = false;
      for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
        const auto begin = static_cast<std::size_t>(rng.uniform_int(0, T - len));
        const std::size_t end = begin + len;
        // One free step between events keeps them non-overlapping and separable.
        const bool clash = std::any_of(events.begin(), events.end(), [&](const Event& o) {
          return begin < o.end + 1 && o.begin < end + 1;
        });
        if (!clash) {
          if (type_cycle.empty()) {
            for (std::size_t t = 0; t < spec.num_event_types; ++t) type_cycle.push_back(t);
            for (std::size_t i = type_cycle.size() - 1; i > 0; --i) {
              std::swap(type_cycle[i], type_cycle[rng.uniform_int(0, i)]);
            }
          }
          events.push_back({begin, end, type_cycle.back()});
          type_cycle.pop_back();
          placed = true;
        }
      }
      // Infeasible placement: keep the events placed so far.
      if (!placed) break;
    }
    std::sort(events.begin(), events.end(),
              [](const Event& a, const Event& b) { return a.begin < b.begin; });

    CorpusEntry entry;
    entry.video_id = video_name(index);
    entry.features.duration_seconds = static_cast<double>(T) * spec.seconds_per_step;
    entry.features.values = Matrix(T, spec.feature_dim);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < spec.feature_dim; ++j) {
        entry.features.values(t, j) = spec.noise_std * rng.normal();
      }
    }
    std::vector<TemporalSegment> gt;
    for (const Event& e : events) {
      for (std::size_t t = e.begin; t < e.end; ++t) {
        for (std::size_t j = 0; j < spec.feature_dim; ++j) {
          entry.features.values(t, j) += world.means[e.type][j];
        }
      }
      // Zero-based steps [begin, end) sit at normalized times (begin+1)/T .. end/T;
      // boundaries go half a step outside.
      gt.push_back(segment_from_bounds((static_cast<double>(e.begin) + 0.5) / static_cast<double>(T),
                                       (static_cast<double>(e.end) + 0.5) / static_cast<double>(T)));
      entry.sentences.push_back(sentences[e.type]);
      entry.captions.push_back(vocab.encode(sentences[e.type], 30));
    }
    // Stored precision matches the float32 feature file.
    for (double& x : entry.features.values.values()) x = static_cast<double>(static_cast<float>(x));
    corpus.add(std::move(entry), std::move(gt));
  }
  return corpus;
}

// ---------------------------------------------------------------- feature files

namespace {

constexpr std::array<char, 4> kMagic = {'W', 'S', 'D', 'C'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                 static_cast<char>((v >> 16) & 0xff),
                                 static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  is.read(reinterpret_cast<char*>(b.data()), 4);
  if (!is) throw DataError("feature file truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_feature_file(const std::filesystem::path& path, const Matrix& values) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write feature file " + path.string());
  os.write(kMagic.data(), 4);
  put_u32(os, 1);
  put_u32(os, static_cast<std::uint32_t>(values.rows()));
  put_u32(os, static_cast<std::uint32_t>(values.cols()));
  for (double v : values.values()) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!os) throw DataError("failed writing feature file " + path.string());
}

Matrix read_feature_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read feature file " + path.string());
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  if (!is || magic != kMagic) throw DataError("bad magic in feature file " + path.string());
  const std::uint32_t version = get_u32(is);
  if (version != 1) throw DataError("unsupported feature file version " + std::to_string(version));
  const std::uint32_t steps = get_u32(is);
  const std::uint32_t dim = get_u32(is);
  Matrix m(steps, dim);
  for (double& v : m.values()) v = static_cast<double>(std::bit_cast<float>(get_u32(is)));
  return m;
}

std::filesystem::path feature_path(const std::filesystem::path& dir, const std::string& video_id) {
  return dir / (video_id + ".wsdc");
}

// ---------------------------------------------------------------- annotations

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path,
                                               bool require_timestamps) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read annotation file " + path.string());
  json root;
  try {
    root = json::parse(is);
  } catch (const json::parse_error& e) {
    throw DataError("annotation file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!root.is_object()) throw DataError("annotation root must be an object keyed by video id");

  std::vector<AnnotationRecord> records;
  for (const auto& [video_id, item] : root.items()) {
    const std::string where = "annotation '" + video_id + "'";
    if (!item.is_object()) throw DataError(where + ": value must be an object");
    if (!item.contains("duration") || !item["duration"].is_number()) {
      throw DataError(where + ": key 'duration' missing or not a number");
    }
    if (!item.contains("sentences") || !item["sentences"].is_array()) {
      throw DataError(where + ": key 'sentences' missing or not an array");
    }
    AnnotationRecord rec;
    rec.video_id = video_id;
    rec.duration = item["duration"].get<double>();
    if (!(rec.duration > 0.0)) throw DataError(where + ": key 'duration' must be positive");
    for (const auto& s : item["sentences"]) {
      if (!s.is_string()) throw DataError(where + ": key 'sentences' must hold strings");
      rec.sentences.push_back(s.get<std::string>());
    }
    if (item.contains("timestamps")) {
      const auto& ts = item["timestamps"];
      if (!ts.is_array() || ts.size() != rec.sentences.size()) {
        throw DataError(where + ": key 'timestamps' must be an array aligned with 'sentences'");
      }
      rec.timestamps.emplace();
      for (const auto& pair : ts) {
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number()) {
          throw DataError(where + ": key 'timestamps' entries must be [start, end] numbers");
        }
        rec.timestamps->emplace_back(pair[0].get<double>(), pair[1].get<double>());
      }
    } else if (require_timestamps) {
      throw DataError(where + ": key 'timestamps' required for evaluation");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

LoadResult load_annotation_json(const std::filesystem::path& path,
                                const std::filesystem::path& features_dir,
                                const Vocabulary& vocab, const LoadOptions& options) {
  LoadResult result;
  for (const AnnotationRecord& rec : read_annotations(path, options.require_timestamps)) {
    const auto fpath = feature_path(features_dir, rec.video_id);
    if (!std::filesystem::exists(fpath)) {
      ++result.missing_features;
      continue;
    }
    CorpusEntry entry;
    entry.video_id = rec.video_id;
    entry.features.values = read_feature_file(fpath);
    entry.features.duration_seconds = rec.duration;
    entry.features.validate();

    std::vector<TemporalSegment> gt;
    for (std::size_t i = 0; i < rec.sentences.size(); ++i) {
      if (rec.timestamps) {
        const auto [s, e] = (*rec.timestamps)[i];
        if (!(e > s)) {
          ++result.dropped_timestamps;
          continue;
        }
        gt.push_back(segment_from_seconds(s, e, rec.duration));
      }
      entry.captions.push_back(vocab.encode(rec.sentences[i], options.max_caption_len));
      entry.sentences.push_back(rec.sentences[i]);
    }
    if (rec.timestamps) {
      result.corpus.add(std::move(entry), std::move(gt));
    } else {
      result.corpus.add(std::move(entry));
    }
  }
  return result;
}

void write_annotation_json(const std::filesystem::path& path, const Corpus& corpus,
                           bool include_timestamps) {
  json root = json::object();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& e = corpus.entry(i);
    json item = json::object();
    item["duration"] = e.features.duration_seconds;
    item["sentences"] = e.sentences;
    if (include_timestamps && corpus.has_ground_truth(i)) {
      json ts = json::array();
      for (const auto& s : corpus.ground_truth(i)) {
        const auto [a, b] = segment_to_seconds(s, e.features.duration_seconds);
        ts.push_back({a, b});
      }
      item["timestamps"] = std::move(ts);
    }
    root[e.video_id] = std::move(item);
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write annotation file " + path.string());
  os << root.dump(1) << '\n';
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats st;
  st.videos = corpus.size();
  st.captions = corpus.caption_count();
  if (st.videos > 0) st.events_per_video = static_cast<double>(st.captions) / static_cast<double>(st.videos);
  double width = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!corpus.has_ground_truth(i) || corpus.mode() == AccessMode::kWeak) continue;
    for (const auto& s : corpus.ground_truth(i)) {
      width += s.w;
      ++n;
    }
  }
  if (n > 0) st.mean_event_width = width / static_cast<double>(n);
  return st;
}

}  // namespace wsdec
