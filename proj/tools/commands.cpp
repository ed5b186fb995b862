#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include "wsdec/checkpoint.hpp"
#include "wsdec/format.hpp"
#include "wsdec/inference.hpp"
#include "wsdec/metrics.hpp"

namespace wsdec::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kInitTag = 0x696e6974;       // "init"
constexpr std::uint64_t kContractionTag = 0x636f6e;  // "con"
constexpr double kContractionRadius = 0.02;

const char* const kResolvedConfig = "config.resolved.cfg";

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

void prepare_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw UsageError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw UsageError(dir.string() + " already exists; pass --force to overwrite");
    }
  }
  fs::create_directories(dir);
}

SynthSpec split_spec(const RunConfig& config, bool test) {
  SynthSpec s = config.synth;
  s.seed = config.seed;
  if (test) {
    s.first_video = config.synth.num_videos;
    s.num_videos = config.synth_test_videos;
  }
  return s;
}

std::string format_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct LoadedSplit {
  Vocabulary vocab;
  Corpus corpus;
};

LoadedSplit load_split(const fs::path& corpus_dir, const std::string& split,
                       std::size_t max_caption_len, std::ostream& log) {
  LoadedSplit out;
  out.vocab = Vocabulary::load(corpus_dir / "vocab.txt");
  LoadOptions opts;
  opts.max_caption_len = max_caption_len;
  LoadResult r = load_annotation_json(corpus_dir / (split + ".json"), corpus_dir / "features",
                                      out.vocab, opts);
  if (r.missing_features > 0) {
    log << "warning: skipped " << r.missing_features << " videos without feature files\n";
  }
  if (r.dropped_timestamps > 0) {
    log << "warning: dropped " << r.dropped_timestamps << " sentences with end <= start\n";
  }
  if (r.corpus.empty()) throw DataError("split '" + split + "' has no usable videos");
  out.corpus = std::move(r.corpus);
  return out;
}

std::size_t corpus_feature_dim(const Corpus& corpus) {
  const std::size_t k = corpus.entry(0).features.dim();
  for (const CorpusEntry& e : corpus.entries()) {
    if (e.features.dim() != k) {
      throw DataError("video " + e.video_id + " has feature dim " + std::to_string(e.features.dim()) +
                      ", expected " + std::to_string(k));
    }
  }
  return k;
}

}  // namespace

ModelConfig model_config_for(const RunConfig& config, std::size_t feature_dim,
                             std::size_t vocab_size) {
  ModelConfig m = config.model;
  m.feature_dim = feature_dim;
  m.vocab_size = vocab_size;
  m.validate();
  return m;
}

void cmd_synth(const RunConfig& config, const SynthArgs& args, std::ostream& log) {
  prepare_dir(args.out, args.force);
  const fs::path features = args.out / "features";
  if (fs::exists(features)) {
    for (const auto& f : fs::directory_iterator(features)) {
      if (f.path().extension() == ".wsdc") fs::remove(f.path());
    }
  }
  fs::create_directories(features);

  const SynthSpec train_spec = split_spec(config, false);
  synthetic_vocabulary(train_spec).save(args.out / "vocab.txt");
  for (const bool test : {false, true}) {
    const SynthSpec spec = split_spec(config, test);
    if (spec.num_videos == 0) continue;
    const Corpus corpus = generate_synthetic_corpus(spec);
    for (const CorpusEntry& e : corpus.entries()) {
      write_feature_file(feature_path(features, e.video_id), e.features.values);
    }
    const std::string name = test ? "test" : "train";
    write_annotation_json(args.out / (name + ".json"), corpus, true);
    const CorpusStats st = corpus_stats(corpus);
    log << name << ": videos=" << st.videos << " captions=" << st.captions
        << " events_per_video=" << fixed6(st.events_per_video)
        << " mean_event_width=" << fixed6(st.mean_event_width) << "\n";
  }
  write_text(args.out / kResolvedConfig, config.to_text());
}

void cmd_train(const RunConfig& config, const TrainArgs& args, std::ostream& log) {
  LoadedSplit data = load_split(args.corpus, "train", config.model.max_caption_len, log);
  const ModelConfig mc =
      model_config_for(config, corpus_feature_dim(data.corpus), data.vocab.size());

  const bool resuming = args.resume.has_value();
  if (resuming) {
    fs::create_directories(args.out);
  } else {
    prepare_dir(args.out, args.force);
  }

  TrainState state;
  if (resuming) {
    LoadedCheckpoint ck = load_checkpoint(*args.resume, mc);
    if (ck.config_hash != config.hash()) {
      log << "warning: checkpoint was written under a different config\n";
    }
    state = std::move(ck.state);
    log << "resuming at " << stage_name(state.stage) << " epoch " << state.epoch << " batch "
        << state.batch << " (step " << state.step << ")\n";
  } else {
    state = TrainState::init(Model::init(mc, derive_seed(config.seed, {kInitTag})), config.seed);
  }
  write_text(args.out / kResolvedConfig, config.to_text());

  const fs::path csv_path = args.out / "losses.csv";
  std::ofstream csv;
  if (resuming && fs::exists(csv_path)) {
    csv.open(csv_path, std::ios::binary | std::ios::app);
  } else {
    csv.open(csv_path, std::ios::binary | std::ios::trunc);
    csv << "step,stage,L_c,L_s,L_a,total\n";
  }
  if (!csv) throw DataError("cannot write " + csv_path.string());

  log << "training " << state.model.parameter_count() << " parameters on "
      << data.corpus.caption_count() << " captions\n";
  double epoch_lc = 0.0;
  std::size_t epoch_steps = 0;
  TrainHooks hooks;
  hooks.on_step = [&](const TrainState& s, const StepLosses& l) {
    csv << s.step << "," << static_cast<int>(s.stage) << "," << format_g(l.l_c) << ","
        << format_g(l.l_s) << "," << format_g(l.l_a) << "," << format_g(l.total) << "\n";
    epoch_lc += l.l_c;
    ++epoch_steps;
    if (s.batch == 0 || s.batch * config.train.batch_size >= data.corpus.caption_count()) {
      log << stage_name(s.stage) << " epoch " << s.epoch + 1 << ": mean L_c "
          << fixed6(epoch_lc / static_cast<double>(epoch_steps)) << "\n";
      epoch_lc = 0.0;
      epoch_steps = 0;
    }
  };
  hooks.on_stage_end = [&](const TrainState& s, Stage done) {
    csv.flush();
    const fs::path path = args.out / ("checkpoint_" + std::string(stage_name(done)) + ".bin");
    save_checkpoint(path, s, config.hash());
    log << "wrote " << path.string() << "\n";
  };
  train(state, data.corpus, config.train, hooks);
  save_checkpoint(args.out / "model.bin", state, config.hash());
  log << "wrote " << (args.out / "model.bin").string() << "\n";
}

void cmd_infer(const RunConfig& config, const InferArgs& args, std::ostream& log) {
  LoadedSplit data = load_split(args.corpus, args.split, config.model.max_caption_len, log);
  const ModelConfig mc =
      model_config_for(config, corpus_feature_dim(data.corpus), data.vocab.size());
  const LoadedCheckpoint ck = load_checkpoint(args.checkpoint, mc);
  Model model = ck.state.model;
  // Inference-time settings come from the run config.
  model.config.mask = mc.mask;
  model.config.max_caption_len = mc.max_caption_len;
  InferenceConfig ic = config.infer;
  ic.seed = config.seed;

  WeakModeGuard guard(data.corpus);
  Predictions predictions;
  std::map<std::string, VideoDiagnostics> diagnostics;
  std::size_t emitted = 0;
  for (const CorpusEntry& entry : data.corpus.entries()) {
    auto& events = predictions[entry.video_id];
    if (args.mode == InferMode::kLocalization) {
      VideoSession session(model, entry.features);
      for (std::size_t i = 0; i < entry.captions.size(); ++i) {
        const TemporalSegment s = session.localize(entry.captions[i]);
        const Refinement back = refine_segment(session, s, 1);
        PredictedEvent p;
        p.sentence = entry.sentences[i];
        std::tie(p.start_seconds, p.end_seconds) =
            segment_to_seconds(s, entry.features.duration_seconds);
        p.self_iou = back.empty_caption ? 0.0 : tiou(s, back.segment);
        events.push_back(std::move(p));
      }
      continue;
    }
    const std::uint64_t seed = video_seed(ic.seed, entry.video_id);
    const DenseCaptionResult r = dense_caption(model, entry.features, data.vocab, ic, seed);
    for (const DenseEvent& e : r.events) {
      events.push_back({e.sentence, e.start_seconds, e.end_seconds, e.self_iou});
    }
    emitted += r.events.size();
    if (args.dump_diagnostics) {
      VideoSession session(model, entry.features);
      VideoDiagnostics d;
      d.proposals = r.initials.size();
      d.empty_captions = r.empty_captions;
      d.contraction =
          contraction_ratios(session, r.refineds, kContractionRadius,
                             derive_seed(seed, {kContractionTag}));
      diagnostics[entry.video_id] = d;
    }
  }
  if (!args.out.parent_path().empty()) fs::create_directories(args.out.parent_path());
  write_predictions(args.out, predictions, args.dump_diagnostics ? &diagnostics : nullptr);
  fs::path cfg_path = args.out;
  cfg_path += ".config.cfg";
  write_text(cfg_path, config.to_text());
  if (args.mode == InferMode::kDense) {
    log << "videos=" << predictions.size() << " events=" << emitted << " events_per_video="
        << fixed6(static_cast<double>(emitted) / static_cast<double>(predictions.size())) << "\n";
  } else {
    log << "videos=" << predictions.size() << " localized sentences\n";
  }
}

void cmd_eval(const RunConfig& config, const EvalArgs& args, std::ostream& log) {
  const Predictions predictions = read_predictions(args.predictions);
  const auto records = read_annotations(args.annotations, true);

  std::set<std::string> annotated;
  for (const AnnotationRecord& r : records) annotated.insert(r.video_id);
  std::vector<std::string> only_pred, only_ref;
  for (const auto& entry : predictions) {
    if (!annotated.contains(entry.first)) only_pred.push_back(entry.first);
  }
  for (const auto& id : annotated) {
    if (!predictions.contains(id)) only_ref.push_back(id);
  }
  if (!only_pred.empty() || !only_ref.empty()) {
    log << "warning: video ids differ; scoring the " << annotated.size() - only_ref.size()
        << " shared videos\n";
    for (const auto& id : only_pred) log << "  only in predictions: " << id << "\n";
    for (const auto& id : only_ref) log << "  only in annotations: " << id << "\n";
  }

  std::string report;
  if (args.mode == EvalMode::kLocalization) {
    std::vector<TemporalSegment> pred, gt;
    for (const AnnotationRecord& r : records) {
      auto it = predictions.find(r.video_id);
      if (it == predictions.end()) continue;
      if (it->second.size() != r.sentences.size()) {
        throw DataError("video " + r.video_id + ": " + std::to_string(it->second.size()) +
                        " localizations for " + std::to_string(r.sentences.size()) +
                        " sentences");
      }
      for (std::size_t i = 0; i < r.sentences.size(); ++i) {
        const auto [s, e] = (*r.timestamps)[i];
        if (!(e > s)) continue;
        gt.push_back(segment_from_seconds(s, e, r.duration));
        pred.push_back(segment_from_seconds(it->second[i].start_seconds,
                                            it->second[i].end_seconds, r.duration));
      }
    }
    report = localization_report_json(localization_scores(pred, gt, config.eval_sigmas));
  } else {
    VideoEvents pred_events, ref_events;
    std::map<std::string, std::vector<TemporalSegment>> pred_segs, gt_segs;
    for (const AnnotationRecord& r : records) {
      auto it = predictions.find(r.video_id);
      if (it == predictions.end()) continue;
      auto& refs = ref_events[r.video_id];
      auto& gts = gt_segs[r.video_id];
      for (std::size_t i = 0; i < r.sentences.size(); ++i) {
        const auto [s, e] = (*r.timestamps)[i];
        if (!(e > s)) continue;
        refs.push_back({r.sentences[i], segment_from_seconds(s, e, r.duration)});
        gts.push_back(refs.back().segment);
      }
      auto& preds = pred_events[r.video_id];
      auto& psegs = pred_segs[r.video_id];
      for (const PredictedEvent& p : it->second) {
        preds.push_back({p.sentence, segment_from_seconds(p.start_seconds, p.end_seconds, r.duration)});
        psegs.push_back(preds.back().segment);
      }
    }
    if (args.mode == EvalMode::kCaptioning) {
      report = caption_report_json(caption_scores(pred_events, ref_events, config.eval_thresholds));
    } else {
      const auto curve = recall_curve(pred_segs, gt_segs, default_recall_grid());
      if (!curve) throw DataError("no ground-truth segments to compute recall against");
      report = recall_report_json(*curve);
      fs::path csv = args.out;
      csv.replace_extension(".csv");
      write_text(csv, recall_csv(*curve));
    }
  }
  if (!args.out.parent_path().empty()) fs::create_directories(args.out.parent_path());
  write_text(args.out, report);
  log << report;
}

}  // namespace wsdec::cli
