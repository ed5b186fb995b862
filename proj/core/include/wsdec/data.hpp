#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wsdec/segment.hpp"
#include "wsdec/tensor.hpp"

namespace wsdec {

using TokenId = int;

namespace tokens {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kNumSpecials = 4;
}  // namespace tokens

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-step feature vectors standing in for encoded video frames. Step t
// (1-based) sits at normalized time t / steps.
struct VideoFeatures {
  Matrix values;  // steps x dim
  double duration_seconds = 1.0;

  std::size_t steps() const { return values.rows(); }
  std::size_t dim() const { return values.cols(); }

  // Throws DataError unless steps >= 2, dim >= 1, all values finite and the
  // duration is positive.
  void validate() const;
};

// Token ids framed by BOS ... EOS.
struct CaptionTokens {
  std::vector<TokenId> ids;

  std::size_t size() const { return ids.size(); }
  // Ids strictly between the sentinels.
  std::vector<TokenId> body() const;

  // Frames `body` with sentinels, truncating it so the result fits max_len.
  static CaptionTokens from_body(const std::vector<TokenId>& body, std::size_t max_len);
  void validate(std::size_t vocab_size, std::size_t max_len) const;
};

// Lowercases, strips ASCII punctuation, splits on whitespace.
std::vector<std::string> tokenize(std::string_view sentence);

class Vocabulary {
 public:
  Vocabulary();

  std::size_t size() const { return id_to_token_.size(); }
  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const;
  bool contains(const std::string& token) const { return token_to_id_.contains(token); }

  CaptionTokens encode(std::string_view sentence, std::size_t max_len) const;
  // Joins non-special tokens with single spaces; UNK renders as "<unk>".
  std::string decode(const CaptionTokens& caption) const;

  // One non-special token per line; line i holds id i + 4.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  // Appends a token; used by build_vocabulary and load.
  void add(const std::string& token);

 private:
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Keeps the most frequent tokens up to cap - 4 (ties broken
// lexicographically). cap must be at least 5.
Vocabulary build_vocabulary(const std::vector<std::string>& sentences, std::size_t cap);

struct CorpusEntry {
  std::string video_id;
  VideoFeatures features;
  std::vector<CaptionTokens> captions;
  std::vector<std::string> sentences;  // raw text aligned with captions
};

enum class AccessMode { kWeak, kEvaluation };

class WeakSupervisionViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Videos with their caption lists. Ground-truth segments are held apart from
// the entries and are readable only in evaluation mode; every read is counted
// so tests can prove that training never touched them.
class Corpus {
 public:
  Corpus() = default;
  Corpus(const Corpus& other);
  Corpus& operator=(const Corpus& other);
  Corpus(Corpus&& other) noexcept;
  Corpus& operator=(Corpus&& other) noexcept;

  void add(CorpusEntry entry, std::optional<std::vector<TemporalSegment>> gt = std::nullopt);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const CorpusEntry& entry(std::size_t i) const { return entries_.at(i); }
  const std::vector<CorpusEntry>& entries() const { return entries_; }
  std::size_t caption_count() const;

  AccessMode mode() const { return mode_; }
  void set_mode(AccessMode mode) { mode_ = mode; }

  bool has_ground_truth(std::size_t i) const { return gt_.at(i).has_value(); }
  // Throws WeakSupervisionViolation in weak mode.
  const std::vector<TemporalSegment>& ground_truth(std::size_t i) const;
  std::uint64_t ground_truth_reads() const { return gt_reads_.load(); }

  friend bool operator==(const Corpus& a, const Corpus& b);

 private:
  std::vector<CorpusEntry> entries_;
  std::vector<std::optional<std::vector<TemporalSegment>>> gt_;
  AccessMode mode_ = AccessMode::kEvaluation;
  mutable std::atomic<std::uint64_t> gt_reads_{0};
};

// Switches a corpus to weak mode for the guard's lifetime.
class WeakModeGuard {
 public:
  explicit WeakModeGuard(Corpus& corpus);
  ~WeakModeGuard();
  WeakModeGuard(const WeakModeGuard&) = delete;
  WeakModeGuard& operator=(const WeakModeGuard&) = delete;

 private:
  Corpus& corpus_;
  AccessMode previous_;
};

struct SynthSpec {
  std::size_t num_videos = 200;
  std::size_t steps = 64;
  std::size_t feature_dim = 32;
  std::size_t num_event_types = 3;
  std::size_t min_events = 1;
  std::size_t max_events = 4;
  double noise_std = 1.0;
  // Norm of each type's mean shift, in units of noise_std.
  double signal_scale = 3.0;
  double min_event_fraction = 0.08;
  double max_event_fraction = 0.30;
  double seconds_per_step = 1.0;
  std::size_t first_video = 0;  // index offset; held-out splits use a disjoint range
  std::uint64_t seed = 7;

  void validate() const;
};

// Every template sentence of the synthetic world, in type order.
std::vector<std::string> synthetic_templates(const SynthSpec& spec);
Vocabulary synthetic_vocabulary(const SynthSpec& spec);

// Deterministic synthetic event videos. Captions are tokenized with
// synthetic_vocabulary(spec); ground truth is always recorded.
Corpus generate_synthetic_corpus(const SynthSpec& spec);

// Binary per-video feature file: "WSDC", u32 version (1), u32 steps, u32 dim,
// then steps*dim little-endian float32 values row-major.
void write_feature_file(const std::filesystem::path& path, const Matrix& values);
Matrix read_feature_file(const std::filesystem::path& path);
std::filesystem::path feature_path(const std::filesystem::path& dir, const std::string& video_id);

// One video's annotation as written in the file, before any feature lookup.
struct AnnotationRecord {
  std::string video_id;
  double duration = 0.0;
  std::vector<std::string> sentences;
  std::optional<std::vector<std::pair<double, double>>> timestamps;  // seconds
};

// Parses and shape-checks the annotation schema. Throws DataError naming
// the offending video id and key.
std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path,
                                               bool require_timestamps = false);

struct LoadOptions {
  bool require_timestamps = false;
  std::size_t max_caption_len = 30;
};

struct LoadResult {
  Corpus corpus;
  std::size_t missing_features = 0;
  std::size_t dropped_timestamps = 0;
};

LoadResult load_annotation_json(const std::filesystem::path& path,
                                const std::filesystem::path& features_dir,
                                const Vocabulary& vocab, const LoadOptions& options = {});

// Writes the annotation schema for a corpus (timestamps only when the corpus
// carries ground truth and include_timestamps is set). Reads ground truth, so
// the corpus must be in evaluation mode.
void write_annotation_json(const std::filesystem::path& path, const Corpus& corpus,
                           bool include_timestamps);

struct CorpusStats {
  std::size_t videos = 0;
  std::size_t captions = 0;
  double events_per_video = 0.0;
  double mean_event_width = 0.0;
};

CorpusStats corpus_stats(const Corpus& corpus);

}  // namespace wsdec
