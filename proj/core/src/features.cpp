// SPDX-License-Identifier: Apache-2.0
#include "s2ag/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <unsupported/Eigen/FFT>

#include "s2ag/binary_io.hpp"
#include "s2ag/error.hpp"

namespace s2ag {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

std::vector<double> mel_filterbank(std::size_t fft_size, double sample_rate, std::size_t filters) {
  const std::size_t bins = fft_size / 2 + 1;
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(filters + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(filters + 1));
  }
  std::vector<double> bank(filters * bins, 0.0);
  for (std::size_t m = 0; m < filters; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      bank[m * bins + k] = w;
    }
  }
  return bank;
}

MfccFeatures compute_mfcc(const Waveform& wave, std::size_t window) {
  const std::size_t length = wave.samples.size();
  if (length == 0) throw Error(ErrorCode::EmptySignal, "waveform has no samples");
  if (window < 32) throw Error(ErrorCode::WindowTooLarge, "window must be at least 32 samples");
  if (window > length) {
    throw Error(ErrorCode::WindowTooLarge,
                "window " + std::to_string(window) + " exceeds signal length " + std::to_string(length));
  }
  const std::size_t frames = (length + window - 1) / window;
  const std::size_t fft_size = next_pow2(window);
  const std::size_t bins = fft_size / 2 + 1;
  const std::vector<double> bank = mel_filterbank(fft_size, wave.sample_rate);

  std::vector<double> hann(window);
  for (std::size_t n = 0; n < window; ++n) {
    hann[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(window - 1));
  }
  // Orthonormal DCT-II basis, first kCepstra rows.
  std::vector<double> dct(kCepstra * kMelFilters);
  for (std::size_t k = 0; k < kCepstra; ++k) {
    const double s = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(kMelFilters));
    for (std::size_t n = 0; n < kMelFilters; ++n) {
      dct[k * kMelFilters + n] = s * std::cos(std::numbers::pi * static_cast<double>(k) *
                                              (2.0 * static_cast<double>(n) + 1.0) / (2.0 * kMelFilters));
    }
  }

  MfccFeatures out;
  out.columns = frames;
  out.window_size = window;
  out.values.assign(kMfccRows * frames, 0.0);
  Eigen::FFT<double> fft;
  std::vector<double> frame(fft_size);
  std::vector<std::complex<double>> buf;
  std::vector<double> log_mel(kMelFilters);
  for (std::size_t f = 0; f < frames; ++f) {
    std::fill(frame.begin(), frame.end(), 0.0);
    for (std::size_t n = 0; n < window; ++n) {
      const std::size_t idx = f * window + n;
      const double s = idx < length ? wave.samples[idx] : 0.0;
      frame[n] = s * hann[n];
    }
    fft.fwd(buf, frame);
    for (std::size_t m = 0; m < kMelFilters; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += bank[m * bins + k] * std::norm(buf[k]);
      log_mel[m] = std::log(std::max(e, kLogFloor));
    }
    for (std::size_t k = 0; k < kCepstra; ++k) {
      double c = 0.0;
      for (std::size_t n = 0; n < kMelFilters; ++n) c += dct[k * kMelFilters + n] * log_mel[n];
      out.values[k * frames + f] = c;
    }
  }
  auto row = [&](std::size_t r) { return out.values.data() + r * frames; };
  constexpr std::size_t kDeltas = kCepstra - 1;
  constexpr std::size_t kSecondDeltas = kMfccRows - kCepstra - kDeltas;  // only room for 10
  for (std::size_t k = 0; k < kDeltas; ++k) {
    const double* c = row(k + 1);
    double* d1 = row(kCepstra + k);
    for (std::size_t f = 0; f + 1 < frames; ++f) d1[f] = c[f + 1] - c[f];
  }
  for (std::size_t k = 0; k < kSecondDeltas; ++k) {
    const double* d1 = row(kCepstra + k);
    double* d2 = row(kCepstra + kDeltas + k);
    for (std::size_t f = 0; f + 1 < frames; ++f) d2[f] = d1[f + 1] - d1[f];
  }
  for (double v : out.values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "MFCC produced non-finite values");
  }
  return out;
}

std::size_t mfcc_window_for(double sample_rate, double fps, std::size_t per_frame) {
  return static_cast<std::size_t>(std::lround(sample_rate / fps / static_cast<double>(per_frame)));
}

std::vector<std::string> pad_transcript(const std::vector<std::string>& words, std::size_t frames) {
  std::vector<std::string> out(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(std::min(words.size(), frames)));
  out.resize(frames, std::string(kPadToken));
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<double> hashed_embedding(std::string_view word) {
  std::mt19937_64 engine(fnv1a64(word));
  std::vector<double> v(kEmbeddingDim);
  double n2 = 0.0;
  for (double& x : v) {
    x = static_cast<double>(engine() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    n2 += x * x;
  }
  const double n = std::sqrt(n2);
  for (double& x : v) x /= n;
  return v;
}

WordEmbeddingTable WordEmbeddingTable::hashed() { return WordEmbeddingTable{}; }

WordEmbeddingTable WordEmbeddingTable::load_text(const std::filesystem::path& path, UnknownPolicy unknown) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open embedding table " + path.string());
  WordEmbeddingTable table;
  table.unknown_ = unknown;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> vec;
    double x;
    while (fields >> x) vec.push_back(x);
    if (line_no == 1 && vec.size() == 1) continue;  // "vocab_size dim" header
    if (vec.size() != kEmbeddingDim) {
      throw Error(ErrorCode::ShapeMismatch, path.string() + ":" + std::to_string(line_no) + " has " +
                                                std::to_string(vec.size()) + " values, expected 300");
    }
    table.insert(std::move(token), std::move(vec));
  }
  return table;
}

void WordEmbeddingTable::insert(std::string word, std::vector<double> vec) {
  if (vec.size() != kEmbeddingDim) throw Error(ErrorCode::ShapeMismatch, "embedding must have 300 values");
  if (word == kPadToken) {
    padding_ = std::move(vec);
  } else {
    table_[std::move(word)] = std::move(vec);
  }
}

std::vector<double> WordEmbeddingTable::lookup(std::string_view token) const {
  if (token == kPadToken) return padding_;
  if (auto it = table_.find(std::string(token)); it != table_.end()) return it->second;
  if (unknown_ == UnknownPolicy::Hashed) return hashed_embedding(token);
  return std::vector<double>(kEmbeddingDim, 0.0);
}

TranscriptFeatures embed_tokens(const std::vector<std::string>& tokens, const WordEmbeddingTable& table) {
  TranscriptFeatures out;
  out.tokens = tokens;
  const std::size_t frames = tokens.size();
  out.values.assign(kEmbeddingDim * frames, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::vector<double> v = table.lookup(tokens[t]);
    for (std::size_t d = 0; d < kEmbeddingDim; ++d) out.values[d * frames + t] = v[d];
  }
  return out;
}

std::vector<double> speaker_one_hot(std::size_t id, std::size_t speakers) {
  if (id >= speakers) {
    throw Error(ErrorCode::IdOutOfRange,
                "speaker id " + std::to_string(id) + " outside [0, " + std::to_string(speakers) + ")");
  }
  std::vector<double> v(speakers, 0.0);
  v[id] = 1.0;
  return v;
}

Waveform read_wav(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = io::read_file(path);
  io::Reader in(bytes);
  if (in.get_bytes(4) != "RIFF") throw Error(ErrorCode::BadMagic, path.string() + " is not a RIFF file");
  in.get<std::uint32_t>();
  if (in.get_bytes(4) != "WAVE") throw Error(ErrorCode::BadMagic, path.string() + " is not a WAVE file");
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (in.remaining() >= 8) {
    const std::string id = in.get_bytes(4);
    const auto size = in.get<std::uint32_t>();
    if (id == "fmt ") {
      in.need(size);
      format = in.get<std::uint16_t>();
      channels = in.get<std::uint16_t>();
      rate = in.get<std::uint32_t>();
      in.get<std::uint32_t>();
      in.get<std::uint16_t>();
      bits = in.get<std::uint16_t>();
      if (size > 16) in.get_bytes(size - 16);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(ErrorCode::BadMagic, "data chunk before fmt chunk");
      if (format != 1 || bits != 16 || channels == 0) {
        throw Error(ErrorCode::VersionUnsupported, "only 16-bit PCM WAVE is supported");
      }
      in.need(size);
      const std::size_t frames = size / (2u * channels);
      Waveform w;
      w.sample_rate = rate;
      w.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::uint16_t c = 0; c < channels; ++c) acc += in.get<std::int16_t>() / 32768.0;
        w.samples[i] = acc / channels;
      }
      return w;
    } else {
      in.get_bytes(size + (size & 1u));
    }
  }
  throw Error(ErrorCode::Truncated, path.string() + " has no data chunk");
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  io::Writer out;
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  const auto rate = static_cast<std::uint32_t>(std::lround(wave.sample_rate));
  out.put_bytes("RIFF");
  out.put<std::uint32_t>(36 + data_bytes);
  out.put_bytes("WAVE");
  out.put_bytes("fmt ");
  out.put<std::uint32_t>(16);
  out.put<std::uint16_t>(1);
  out.put<std::uint16_t>(1);
  out.put<std::uint32_t>(rate);
  out.put<std::uint32_t>(rate * 2);
  out.put<std::uint16_t>(2);
  out.put<std::uint16_t>(16);
  out.put_bytes("data");
  out.put<std::uint32_t>(data_bytes);
  for (double s : wave.samples) {
    out.put<std::int16_t>(static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0, 32767.0 / 32768.0) * 32768.0)));
  }
  io::write_file_atomic(path, out.bytes());
}

Waveform resample_linear(const Waveform& wave, double target_rate) {
  if (wave.sample_rate == target_rate || wave.samples.empty()) {
    Waveform w = wave;
    w.sample_rate = target_rate;
    return w;
  }
  const double ratio = wave.sample_rate / target_rate;
  const auto n = static_cast<std::size_t>(std::floor(static_cast<double>(wave.samples.size() - 1) / ratio)) + 1;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto k = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(k);
    const double a = wave.samples[k];
    const double b = k + 1 < wave.samples.size() ? wave.samples[k + 1] : a;
    out.samples[i] = a + frac * (b - a);
  }
  return out;
}

Waveform audio_window(const Waveform& wave, std::size_t begin, std::size_t count) {
  Waveform out;
  out.sample_rate = wave.sample_rate;
  out.samples.assign(count, 0.0);
  for (std::size_t i = 0; i < count && begin + i < wave.samples.size(); ++i) out.samples[i] = wave.samples[begin + i];
  return out;
}

}  // namespace s2ag
