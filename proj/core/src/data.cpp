// SPDX-License-Identifier: Apache-2.0
#include "s2ag/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "s2ag/binary_io.hpp"
#include "s2ag/error.hpp"
#include "s2ag/random.hpp"

namespace s2ag {

namespace {

constexpr std::string_view kMagic = "S2AG";

double as_float(double v) { return static_cast<double>(static_cast<float>(v)); }

void write_record(io::Writer& w, const DatasetRecord& r) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(r.speaker_id));
  w.put<double>(r.waveform.sample_rate);
  w.put<std::uint64_t>(r.waveform.samples.size());
  for (double s : r.waveform.samples) w.put<float>(static_cast<float>(s));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(r.transcript.size()));
  for (const auto& word : r.transcript) w.put_string(word);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(r.pose.frames));
  w.put<double>(r.pose.frame_rate);
  for (double p : r.pose.positions) w.put<float>(static_cast<float>(p));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(r.bone_lengths.size()));
  for (double b : r.bone_lengths) w.put<float>(static_cast<float>(b));
}

DatasetRecord read_record(io::Reader& in) {
  DatasetRecord r;
  r.speaker_id = in.get<std::uint32_t>();
  r.waveform.sample_rate = in.get<double>();
  const auto samples = in.get<std::uint64_t>();
  in.need(samples * sizeof(float));
  r.waveform.samples.resize(samples);
  for (auto& s : r.waveform.samples) s = in.get<float>();
  const auto words = in.get<std::uint32_t>();
  r.transcript.reserve(words);
  for (std::uint32_t i = 0; i < words; ++i) r.transcript.push_back(in.get_string());
  const auto frames = in.get<std::uint32_t>();
  const auto fps = in.get<double>();
  in.need(static_cast<std::size_t>(frames) * kNumJoints * 3 * sizeof(float));
  r.pose = PoseSequence(frames, fps);
  for (auto& p : r.pose.positions) p = in.get<float>();
  const auto bones = in.get<std::uint32_t>();
  r.bone_lengths.resize(bones);
  for (auto& b : r.bone_lengths) b = in.get<float>();
  return r;
}

}  // namespace

void Dataset::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const DatasetRecord& r = records[i];
    const std::string at = "record " + std::to_string(i) + ": ";
    if (r.pose.frames != 2 * frames) {
      throw Error(ErrorCode::ShapeMismatch, at + "pose has " + std::to_string(r.pose.frames) + " frames, expected 2T");
    }
    if (r.speaker_id >= speakers) throw Error(ErrorCode::IdOutOfRange, at + "speaker id out of range");
    if (r.bone_lengths.size() != kNumEdges) throw Error(ErrorCode::ShapeMismatch, at + "expected 9 bone lengths");
    for (double b : r.bone_lengths) {
      if (!(b > 0.0)) throw Error(ErrorCode::DegenerateBone, at + "bone lengths must be positive");
    }
    r.pose.validate();
  }
}

std::vector<unsigned char> serialize(const Dataset& ds) {
  io::Writer w;
  w.put_bytes(kMagic);
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.speakers));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.frames));
  w.put<double>(ds.fps);
  w.put<std::uint64_t>(ds.records.size());
  for (const auto& r : ds.records) {
    io::Writer body;
    write_record(body, r);
    w.put<std::uint64_t>(body.size());
    w.bytes().insert(w.bytes().end(), body.bytes().begin(), body.bytes().end());
  }
  return std::move(w.bytes());
}

Dataset deserialize(const std::vector<unsigned char>& bytes) {
  io::Reader in(bytes);
  if (bytes.size() < kMagic.size() && std::equal(bytes.begin(), bytes.end(), kMagic.begin())) {
    throw Error(ErrorCode::Truncated, "file ends inside the magic at offset " + std::to_string(bytes.size()));
  }
  if (bytes.size() < kMagic.size() || in.get_bytes(kMagic.size()) != kMagic) {
    throw Error(ErrorCode::BadMagic, "not a dataset file (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kDatasetVersion) {
    throw Error(ErrorCode::VersionUnsupported, "dataset version " + std::to_string(version) + " is not supported");
  }
  Dataset ds;
  ds.speakers = in.get<std::uint32_t>();
  ds.frames = in.get<std::uint32_t>();
  ds.fps = in.get<double>();
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = in.get<std::uint64_t>();
    in.need(len);
    const std::size_t begin = in.offset();
    ds.records.push_back(read_record(in));
    if (in.offset() - begin != len) {
      throw Error(ErrorCode::Truncated, "record " + std::to_string(i) + " length mismatch at offset " +
                                            std::to_string(begin));
    }
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  ds.validate();
  io::write_file_atomic(path, serialize(ds));
}

Dataset load_dataset(const std::filesystem::path& path) { return deserialize(io::read_file(path)); }

namespace {

struct SpeakerStyle {
  double swing_hz;      // arm swing rate
  double reach;         // peak swing angle, radians
  double elbow_bend;    // resting forearm flexion
  double head_tilt;
  double pitch_hz;      // voice fundamental
  double bone_scale;
};

SpeakerStyle speaker_style(std::size_t s, std::size_t speakers) {
  const double u = speakers > 1 ? static_cast<double>(s) / static_cast<double>(speakers - 1) : 0.0;
  return {0.7 + 1.1 * u, 0.45 + 0.4 * u, 0.3 + 0.5 * (1.0 - u), -0.12 + 0.24 * u, 110.0 + 120.0 * u, 0.92 + 0.16 * u};
}

// Smooth random curve through knots every `spacing` frames, values in [lo, hi].
std::vector<double> envelope(std::size_t frames, std::size_t spacing, double lo, double hi, Rng& rng) {
  const std::size_t knots = frames / spacing + 2;
  std::vector<double> k(knots);
  for (double& v : k) v = rng.uniform(lo, hi);
  std::vector<double> out(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const double pos = static_cast<double>(t) / static_cast<double>(spacing);
    const auto i = static_cast<std::size_t>(pos);
    const double f = pos - static_cast<double>(i);
    const double w = 0.5 - 0.5 * std::cos(std::numbers::pi * f);
    out[t] = k[i] * (1.0 - w) + k[i + 1] * w;
  }
  return out;
}

Vec3 unit(double x, double y, double z) {
  const double n = std::sqrt(x * x + y * y + z * z);
  return {x / n, y / n, z / n};
}

// Arm hanging down, abducted sideways by `side` and swung forward by `fwd`.
Vec3 arm_dir(double side_sign, double side, double fwd) {
  return unit(side_sign * std::sin(side) * std::cos(fwd), -std::cos(side) * std::cos(fwd), std::sin(fwd));
}

const char* const kNeutralWords[] = {"the", "a", "we", "and", "so", "then", "it", "is", "to", "of", "you", "that"};
const char* const kAffectWords[] = {"great", "amazing", "never", "absolutely", "wow", "huge", "incredible", "love"};

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.speakers < 2) throw Error(ErrorCode::ConfigInvalid, "synthetic data needs at least 2 speakers");
  if (cfg.records < 8) throw Error(ErrorCode::ConfigInvalid, "synthetic data needs at least 8 records");
  if (cfg.frames < 4) throw Error(ErrorCode::ConfigInvalid, "synthetic data needs at least 4 frames per window");
  if (!(cfg.fps > 0.0) || !(cfg.sample_rate >= 2000.0)) {
    throw Error(ErrorCode::ConfigInvalid, "fps must be positive and the sample rate at least 2 kHz");
  }
  Rng rng(cfg.seed);
  Dataset ds;
  ds.speakers = cfg.speakers;
  ds.frames = cfg.frames;
  ds.fps = cfg.fps;
  const std::size_t T = cfg.frames, total = 2 * T;
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < cfg.records; ++i) {
    DatasetRecord r;
    r.speaker_id = i % cfg.speakers;
    const SpeakerStyle st = speaker_style(r.speaker_id, cfg.speakers);
    for (double b : default_bone_lengths()) r.bone_lengths.push_back(as_float(b * st.bone_scale));
    const Skeleton skel = Skeleton::upper_body(r.bone_lengths);

    const std::vector<double> energy = envelope(total, 6, 0.1, 1.0, rng);
    const double phase = rng.uniform(0.0, two_pi);
    const double rate = st.swing_hz;
    const double sway = rng.uniform(0.0, two_pi);

    EdgeDirectionSequence dirs(total);
    std::vector<Vec3> roots(total);
    for (std::size_t t = 0; t < total; ++t) {
      const double time = static_cast<double>(t) / cfg.fps;
      const double e = energy[t];
      const double swing = std::sin(two_pi * rate * time + phase);
      const double beat = std::sin(two_pi * 2.0 * rate * time + phase);
      const double amp = st.reach * e;
      const Vec3 edges[kNumEdges] = {
          unit(0.04 * std::sin(two_pi * 0.3 * time + sway), 1.0, 0.0),
          unit(0.06 * e * swing, 1.0, 0.05 * e),
          unit(std::sin(st.head_tilt + 0.15 * e * beat), std::cos(st.head_tilt), 0.1 * e * swing),
          unit(1.0, -0.08 + 0.1 * e * std::max(beat, 0.0), 0.0),
          arm_dir(1.0, 0.25 + 0.5 * amp * (1.0 + swing), amp * std::max(swing, -0.2)),
          arm_dir(1.0, 0.1 + 0.3 * amp * (1.0 + swing), st.elbow_bend + 0.8 * amp * (1.0 + beat) * 0.5 + 0.2),
          unit(-1.0, -0.08 + 0.1 * e * std::max(-beat, 0.0), 0.0),
          arm_dir(-1.0, 0.25 + 0.5 * amp * (1.0 - swing), amp * std::max(-swing, -0.2)),
          arm_dir(-1.0, 0.1 + 0.3 * amp * (1.0 - swing), st.elbow_bend + 0.8 * amp * (1.0 - beat) * 0.5 + 0.2),
      };
      for (std::size_t k = 0; k < kNumEdges; ++k) {
        for (int c = 0; c < 3; ++c) dirs.edge(t, k)[c] = edges[k][c];
      }
      roots[t] = {0.0, 1000.0, 0.0};
    }
    r.pose = reconstruct_positions(dirs, skel, roots, cfg.fps);
    for (double& p : r.pose.positions) p = as_float(p);

    // Voice for the target window: a harmonic source whose pitch rises with
    // arousal and drifts slowly, random start phase, some unvoiced (noise)
    // segments, and loudness following the energy envelope with stresses on
    // the swing beats.
    const auto samples = static_cast<std::size_t>(std::lround(static_cast<double>(T) * cfg.sample_rate / cfg.fps));
    const std::vector<double> drift = envelope(total, 4, -1.0, 1.0, rng);
    std::vector<bool> voiced(total);
    for (std::size_t t = 0; t < total; ++t) voiced[t] = rng.uniform() < 0.8;
    r.waveform.sample_rate = cfg.sample_rate;
    r.waveform.samples.resize(samples);
    double phase_v = rng.uniform(0.0, two_pi);
    for (std::size_t n = 0; n < samples; ++n) {
      const double time = static_cast<double>(n) / cfg.sample_rate;
      const double frame = static_cast<double>(T) + time * cfg.fps;
      const auto f0 = std::min(static_cast<std::size_t>(frame), total - 1);
      const auto f1 = std::min(f0 + 1, total - 1);
      const double w = frame - static_cast<double>(f0);
      const double e = energy[f0] * (1.0 - w) + energy[f1] * w;
      const double d = drift[f0] * (1.0 - w) + drift[f1] * w;
      phase_v += two_pi * st.pitch_hz * (1.0 + 0.25 * e + 0.08 * d) / cfg.sample_rate;
      const double source = voiced[f0]
                                ? 0.6 * std::sin(phase_v) + 0.3 * std::sin(2.0 * phase_v) + 0.1 * std::sin(3.0 * phase_v)
                                : 0.5 * rng.normal();
      const double clip_time = static_cast<double>(T) / cfg.fps + time;
      const double gate = 0.55 + 0.45 * std::sin(two_pi * rate * clip_time + phase);
      r.waveform.samples[n] = as_float(0.8 * e * e * gate * source + 0.005 * rng.normal());
    }

    for (std::size_t t = T; t < total; ++t) {
      const bool affect = energy[t] > 0.65 && rng.uniform() < 0.7;
      if (affect) {
        r.transcript.emplace_back(kAffectWords[rng.below(std::size(kAffectWords))]);
      } else {
        r.transcript.emplace_back(kNeutralWords[rng.below(std::size(kNeutralWords))]);
      }
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

SplitIndices split(std::size_t count, const std::array<double, 3>& ratios, std::uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  for (double r : ratios) {
    if (!(r >= 0.0)) throw Error(ErrorCode::RatioInvalid, "split ratios must be nonnegative");
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::RatioInvalid, "split ratios must sum to 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::floor(ratios[0] * static_cast<double>(count) + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(count) + 1e-9));
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

}  // namespace s2ag
