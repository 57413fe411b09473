// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "s2ag/binary_io.hpp"
#include "s2ag/data.hpp"
#include "s2ag/error.hpp"
#include "s2ag/metrics.hpp"
#include "s2ag/pipeline.hpp"
#include "s2ag/render.hpp"
#include "s2ag/training.hpp"

namespace s2ag::cli {

namespace {

using nlohmann::json;

// Sections of the single config file. Missing keys keep their defaults.
struct FileConfig {
  json synthetic = json::object();
  json model = json::object();
  json train = json::object();
  json autoencoder = json::object();
  json split = json::object();
  std::string embeddings;
};

FileConfig load_config(const std::string& path) {
  FileConfig fc;
  if (path.empty()) return fc;
  json j;
  try {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path);
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, "config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "config " + path + " must be a JSON object");
  static const std::set<std::string> known{"synthetic", "model", "train", "autoencoder", "split", "embeddings"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error(ErrorCode::ConfigInvalid, "config " + path + ": unknown section '" + key + "'");
  }
  fc.synthetic = j.value("synthetic", fc.synthetic);
  fc.model = j.value("model", fc.model);
  fc.train = j.value("train", fc.train);
  fc.autoencoder = j.value("autoencoder", fc.autoencoder);
  fc.split = j.value("split", fc.split);
  fc.embeddings = j.value("embeddings", fc.embeddings);
  return fc;
}

SyntheticConfig synthetic_from(const json& j) {
  SyntheticConfig c;
  try {
    c.speakers = j.value("speakers", c.speakers);
    c.records = j.value("records", c.records);
    c.frames = j.value("frames", c.frames);
    c.fps = j.value("fps", c.fps);
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("synthetic config: ") + e.what());
  }
  return c;
}

struct SplitConfig {
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 1;
};

SplitConfig split_from(const json& j) {
  SplitConfig c;
  try {
    if (j.contains("ratios")) c.ratios = j["ratios"].get<std::array<double, 3>>();
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("split config: ") + e.what());
  }
  return c;
}

const std::vector<std::size_t>& pick(const SplitIndices& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  return s.test;
}

WordEmbeddingTable embeddings_for(const std::string& path) {
  return path.empty() ? WordEmbeddingTable::hashed()
                      : WordEmbeddingTable::load_text(path, WordEmbeddingTable::UnknownPolicy::Hashed);
}

template <typename T>
void apply(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

// Options shared by every verb, filled while parsing.
struct Common {
  std::string config_path;
  std::string embeddings;
};

struct GenArgs {
  std::optional<std::size_t> speakers, records, frames;
  std::optional<double> fps, sample_rate;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct InspectArgs {
  std::string path;
  bool as_json = false;
};

struct TrainArgs {
  std::string data, out, history, checkpoint_dir;
  std::optional<std::size_t> epochs, batch_size, checkpoint_every, warmup;
  std::optional<double> lr_g, lr_d;
  std::optional<std::uint64_t> seed, split_seed;
  bool no_mfcc = false, no_affective = false, no_wall_clock = false;
};

struct SynthArgs {
  std::string checkpoint, data, audio, transcript, transcript_file, out;
  std::optional<std::size_t> record;
  std::size_t speaker = 0, chain = 1;
  std::uint64_t seed = 1;
  std::string seed_pose = "rest";
  std::string style = "sample";
};

struct EvalArgs {
  std::string checkpoint, data, split = "val", out, per_sample;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::size_t> ae_epochs;
  bool as_json = false;
};

struct RenderArgs {
  std::string pose, out;
  int width = 400, height = 400;
};

int dataset_gen(const Common& c, const GenArgs& a, std::ostream& out) {
  const FileConfig fc = load_config(c.config_path);
  SyntheticConfig sc = synthetic_from(fc.synthetic);
  apply(a.speakers, sc.speakers);
  apply(a.records, sc.records);
  apply(a.frames, sc.frames);
  apply(a.fps, sc.fps);
  apply(a.sample_rate, sc.sample_rate);
  apply(a.seed, sc.seed);
  const Dataset ds = generate_synthetic(sc);
  save_dataset(a.out, ds);
  out << "wrote " << ds.records.size() << " records (" << ds.speakers << " speakers, T=" << ds.frames << ") to "
      << a.out << "\n";
  return kExitOk;
}

int dataset_inspect(const InspectArgs& a, std::ostream& out) {
  const Dataset ds = load_dataset(a.path);
  std::map<std::size_t, std::size_t> per_speaker;
  double seconds = 0.0, rate = 0.0;
  for (const auto& r : ds.records) {
    ++per_speaker[r.speaker_id];
    seconds += static_cast<double>(r.waveform.samples.size()) / r.waveform.sample_rate;
    rate = r.waveform.sample_rate;
  }
  if (a.as_json) {
    json j{{"speakers", ds.speakers},
           {"frames", ds.frames},
           {"fps", ds.fps},
           {"records", ds.records.size()},
           {"sample_rate", rate},
           {"audio_seconds", seconds}};
    json counts = json::object();
    for (const auto& [s, n] : per_speaker) counts[std::to_string(s)] = n;
    j["records_per_speaker"] = counts;
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  out << "speakers: " << ds.speakers << "\n"
      << "frames (T): " << ds.frames << "\n"
      << "fps: " << ds.fps << "\n"
      << "records: " << ds.records.size() << "\n"
      << "sample rate: " << rate << "\n"
      << "audio seconds: " << fmt(seconds) << "\n";
  for (const auto& [s, n] : per_speaker) out << "  speaker " << s << ": " << n << "\n";
  return kExitOk;
}

int train_verb(const Common& c, const TrainArgs& a, std::ostream& out) {
  const FileConfig fc = load_config(c.config_path);
  const Dataset ds = load_dataset(a.data);

  TrainConfig tc = TrainConfig::from_json(fc.train);
  apply(a.epochs, tc.epochs);
  apply(a.batch_size, tc.batch_size);
  apply(a.checkpoint_every, tc.checkpoint_every);
  apply(a.warmup, tc.warmup_epochs);
  apply(a.lr_g, tc.lr_generator);
  apply(a.lr_d, tc.lr_discriminator);
  apply(a.seed, tc.seed);
  if (a.no_wall_clock) tc.wall_clock = false;
  tc.validate();

  // Dataset-derived fields first, then the file's model section, then flags.
  json mj = model_config_for(ds).to_json();
  mj.merge_patch(fc.model);
  if (a.seed) mj["seed"] = *a.seed;
  if (a.no_mfcc) mj["no_mfcc_encoder"] = true;
  if (a.no_affective) mj["no_affective_encoder"] = true;
  const ModelConfig mc = ModelConfig::from_json(mj);
  if (mc.frames != ds.frames || mc.speakers < ds.speakers) {
    throw Error(ErrorCode::ConfigInvalid, "model config does not match the dataset (T or speaker count)");
  }

  SplitConfig sp = split_from(fc.split);
  apply(a.split_seed, sp.seed);
  const SplitIndices parts = split(ds.records.size(), sp.ratios, sp.seed);
  const WordEmbeddingTable table = embeddings_for(c.embeddings.empty() ? fc.embeddings : c.embeddings);
  const TrainingSet set = build_training_set(ds, parts.train, mc, table);

  GanModel model(mc);
  TrainHooks hooks;
  if (!a.checkpoint_dir.empty()) {
    std::filesystem::create_directories(a.checkpoint_dir);
    hooks.checkpoint_dir = a.checkpoint_dir;
  }
  const std::size_t report_every = std::max<std::size_t>(1, tc.epochs / 10);
  hooks.on_epoch = [&](const EpochLosses& e) {
    if (e.epoch % report_every == 0 || e.epoch == tc.epochs) {
      out << "epoch " << e.epoch << "  L_G " << fmt(e.total_g) << "  L_Hub " << fmt(e.huber) << "  L_D "
          << fmt(e.disc) << "\n";
    }
  };
  const auto history = train(model, set, tc, hooks);
  model.save(a.out, {{"train", tc.to_json()},
                     {"split", {{"ratios", sp.ratios}, {"seed", sp.seed}}},
                     {"epoch", tc.epochs},
                     {"train_records", parts.train.size()}});
  const std::string history_path = a.history.empty() ? a.out + ".history.csv" : a.history;
  io::write_text_atomic(history_path, history_csv(history));
  out << "wrote checkpoint " << a.out << " and loss history " << history_path << "\n";
  return kExitOk;
}

int synthesize_verb(const Common& c, const SynthArgs& a, std::ostream& out) {
  const FileConfig fc = load_config(c.config_path);
  const auto model = GanModel::load(a.checkpoint);
  const ModelConfig& mc = model->config();
  const WordEmbeddingTable table = embeddings_for(c.embeddings.empty() ? fc.embeddings : c.embeddings);

  Waveform audio;
  std::vector<std::string> words;
  std::size_t speaker = a.speaker;
  EdgeDirectionSequence seed = rest_directions(mc.frames);
  Skeleton skel = Skeleton::upper_body();
  Vec3 root{0.0, 1000.0, 0.0};

  if (!a.data.empty()) {
    if (!a.record) throw Error(ErrorCode::Usage, "--data needs --record");
    const Dataset ds = load_dataset(a.data);
    if (*a.record >= ds.records.size()) {
      throw Error(ErrorCode::IdOutOfRange, "record " + std::to_string(*a.record) + " of " +
                                               std::to_string(ds.records.size()));
    }
    const DatasetRecord& r = ds.records[*a.record];
    audio = r.waveform;
    words = r.transcript;
    speaker = r.speaker_id;
    skel = Skeleton::upper_body(r.bone_lengths);
    const PoseSequence target = r.pose.slice(ds.frames, ds.frames);
    root = root_trajectory(target).front();
    if (a.seed_pose == "record") seed = to_edge_directions(r.pose.slice(0, ds.frames), skel);
  } else {
    if (a.audio.empty()) throw Error(ErrorCode::Usage, "give either --data/--record or --audio");
    if (a.seed_pose == "record") throw Error(ErrorCode::Usage, "--seed-pose record needs --data");
    audio = read_wav(a.audio);
    std::string text = a.transcript;
    if (!a.transcript_file.empty()) {
      std::ifstream in(a.transcript_file);
      if (!in) throw Error(ErrorCode::IoError, "cannot open " + a.transcript_file);
      std::stringstream s;
      s << in.rdbuf();
      text = s.str();
    }
    words = split_words(text);
  }
  if (speaker >= mc.speakers) {
    throw Error(ErrorCode::IdOutOfRange, "speaker " + std::to_string(speaker) + " but the model knows " +
                                             std::to_string(mc.speakers));
  }

  std::vector<double> noise(mc.dims.style, 0.0);
  if (a.style == "sample") {
    Rng rng(a.seed);
    for (double& z : noise) z = rng.normal();
  }
  const auto windows = window_features(audio, words, speaker, a.chain, mc, table);
  const Synthesis s = synthesize_sequence(*model, windows, seed, noise, skel, root);
  save_pose(a.out, s.pose);
  out << "wrote " << s.pose.frames << " frames to " << a.out << "\n";
  return kExitOk;
}

int evaluate_verb(const Common& c, const EvalArgs& a, std::ostream& out) {
  const FileConfig fc = load_config(c.config_path);
  const auto model = GanModel::load(a.checkpoint);
  const Dataset ds = load_dataset(a.data);
  SplitConfig sp = split_from(fc.split);
  apply(a.split_seed, sp.seed);
  const SplitIndices parts = split(ds.records.size(), sp.ratios, sp.seed);
  const std::vector<std::size_t>& idx = pick(parts, a.split);
  if (idx.empty()) throw Error(ErrorCode::TooFewSamples, "the " + a.split + " split is empty");
  const WordEmbeddingTable table = embeddings_for(c.embeddings.empty() ? fc.embeddings : c.embeddings);
  const TrainingSet set = build_training_set(ds, idx, model->config(), table);

  // The FGD feature extractor learns from training-split ground truth and is
  // checked on the evaluated split's ground truth.
  AutoencoderConfig ac = AutoencoderConfig::from_json(fc.autoencoder);
  ac.frames = ds.frames;
  apply(a.ae_epochs, ac.epochs);
  const AutoencoderTraining ae =
      train_feature_autoencoder(target_directions(ds, parts.train), target_directions(ds, idx), ac);

  const Evaluation ev = evaluate_model(*model, ds, idx, set, ae.model.get());
  json report = ev.report.to_json();
  report["split"] = a.split;
  report["autoencoder_heldout_mse"] = ae.final_mse;
  if (!a.out.empty()) io::write_text_atomic(a.out, report.dump(2) + "\n");
  if (!a.per_sample.empty()) io::write_text_atomic(a.per_sample, per_sample_csv(ev, idx));
  if (a.as_json) {
    out << report.dump(2) << "\n";
  } else {
    out << "split: " << a.split << " (" << idx.size() << " records)\n"
        << "MAJE: " << fmt(ev.report.maje_mm) << " mm\n"
        << "MAD: " << fmt(ev.report.mad_mm_per_s2) << " mm/s^2\n"
        << "FGD: " << fmt(ev.report.fgd) << "\n";
  }
  return kExitOk;
}

int render_verb(const RenderArgs& a, std::ostream& out) {
  const PoseSequence pose = load_pose(a.pose);
  RenderOptions opts;
  opts.width = a.width;
  opts.height = a.height;
  std::filesystem::create_directories(a.out);
  const std::size_t n = render_sequence(pose, a.out, Skeleton::upper_body(), opts);
  out << "wrote " << n << " frames to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speech-driven affective gesture synthesis: data, training, synthesis, evaluation", "s2ag"};
  app.require_subcommand(1);
  Common common;
  if (const char* env = std::getenv(kConfigEnv)) common.config_path = env;
  app.add_option("--config", common.config_path, std::string("JSON config file (default: $") + kConfigEnv + ")");
  app.add_option("--embeddings", common.embeddings, "word vectors in text format; hashed vectors when omitted");

  auto* dataset = app.add_subcommand("dataset", "generate or inspect dataset files");
  dataset->require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = dataset->add_subcommand("gen", "write a synthetic dataset");
  gen_cmd->add_option("--speakers", gen.speakers, "speaker count");
  gen_cmd->add_option("--records", gen.records, "record count");
  gen_cmd->add_option("--frames", gen.frames, "frames per window (T)");
  gen_cmd->add_option("--fps", gen.fps, "pose frame rate");
  gen_cmd->add_option("--sample-rate", gen.sample_rate, "audio sample rate");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("out", gen.out, "output file")->required();

  InspectArgs inspect;
  auto* inspect_cmd = dataset->add_subcommand("inspect", "print dataset header counts");
  inspect_cmd->add_option("path", inspect.path, "dataset file")->required();
  inspect_cmd->add_flag("--json", inspect.as_json, "machine-readable output");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "adversarial training on the training split");
  train_cmd->add_option("--data", tr.data, "dataset file")->required();
  train_cmd->add_option("--out", tr.out, "checkpoint to write")->required();
  train_cmd->add_option("--history", tr.history, "loss history CSV (default: <out>.history.csv)");
  train_cmd->add_option("--epochs", tr.epochs, "epochs");
  train_cmd->add_option("--batch-size", tr.batch_size, "batch size");
  train_cmd->add_option("--lr-generator", tr.lr_g, "generator learning rate");
  train_cmd->add_option("--lr-discriminator", tr.lr_d, "discriminator learning rate");
  train_cmd->add_option("--warmup-epochs", tr.warmup, "epochs without the adversarial term");
  train_cmd->add_option("--seed", tr.seed, "seed for initialization, shuffling and noise");
  train_cmd->add_option("--split-seed", tr.split_seed, "seed of the train/val/test split");
  train_cmd->add_option("--checkpoint-dir", tr.checkpoint_dir, "directory for periodic checkpoints");
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "epochs between periodic checkpoints");
  train_cmd->add_flag("--no-mfcc-encoder", tr.no_mfcc, "replace the MFCC encoder with a raw-waveform conv encoder");
  train_cmd->add_flag("--no-affective-encoder", tr.no_affective,
                      "feed raw seed poses to the generator and a plain conv front end to the discriminator");
  train_cmd->add_flag("--no-wall-clock", tr.no_wall_clock, "write 0 in the wall_seconds column");

  SynthArgs syn;
  auto* syn_cmd = app.add_subcommand("synthesize", "generate a gesture sequence from speech");
  syn_cmd->add_option("--checkpoint", syn.checkpoint, "trained model")->required();
  syn_cmd->add_option("--data", syn.data, "dataset file to take audio, words and speaker from");
  syn_cmd->add_option("--record", syn.record, "record index in --data");
  syn_cmd->add_option("--audio", syn.audio, "16-bit PCM WAV file");
  syn_cmd->add_option("--transcript", syn.transcript, "transcript text");
  syn_cmd->add_option("--transcript-file", syn.transcript_file, "transcript text file");
  syn_cmd->add_option("--speaker", syn.speaker, "speaker id (ignored with --data)");
  syn_cmd->add_option("--chain", syn.chain, "number of T-frame windows to chain")->check(CLI::PositiveNumber);
  syn_cmd->add_option("--seed", syn.seed, "seed for the style noise");
  syn_cmd->add_option("--seed-pose", syn.seed_pose, "initial seed poses: rest or record")
      ->check(CLI::IsMember({"rest", "record"}));
  syn_cmd->add_option("--style", syn.style, "style noise: sample or zero")->check(CLI::IsMember({"sample", "zero"}));
  syn_cmd->add_option("--out", syn.out, "pose JSON to write")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "MAJE, MAD and FGD on a dataset split");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "trained model")->required();
  eval_cmd->add_option("--data", ev.data, "dataset file")->required();
  eval_cmd->add_option("--split", ev.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--split-seed", ev.split_seed, "seed of the train/val/test split");
  eval_cmd->add_option("--ae-epochs", ev.ae_epochs, "epochs for the FGD feature autoencoder");
  eval_cmd->add_option("--out", ev.out, "report JSON to write");
  eval_cmd->add_option("--per-sample", ev.per_sample, "per-record CSV to write");
  eval_cmd->add_flag("--json", ev.as_json, "print the report as JSON");

  RenderArgs rd;
  auto* render_cmd = app.add_subcommand("render", "write one SVG per frame plus index.html");
  render_cmd->add_option("pose", rd.pose, "pose JSON")->required();
  render_cmd->add_option("--out", rd.out, "output directory")->required();
  render_cmd->add_option("--width", rd.width, "frame width in pixels")->check(CLI::PositiveNumber);
  render_cmd->add_option("--height", rd.height, "frame height in pixels")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    // Verb-specific help when a verb was named.
    const CLI::App* target = &app;
    for (const CLI::App* sub = &app; sub != nullptr;) {
      const auto subs = sub->get_subcommands();
      sub = subs.empty() ? nullptr : subs.front();
      if (sub) target = sub;
    }
    out << target->help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* target = &app;
    for (const CLI::App* sub = &app; sub != nullptr;) {
      const auto subs = sub->get_subcommands();
      sub = subs.empty() ? nullptr : subs.front();
      if (sub) target = sub;
    }
    err << target->help();
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return dataset_gen(common, gen, out);
    if (inspect_cmd->parsed()) return dataset_inspect(inspect, out);
    if (train_cmd->parsed()) return train_verb(common, tr, out);
    if (syn_cmd->parsed()) return synthesize_verb(common, syn, out);
    if (eval_cmd->parsed()) return evaluate_verb(common, ev, out);
    if (render_cmd->parsed()) return render_verb(rd, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::Usage ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace s2ag::cli
