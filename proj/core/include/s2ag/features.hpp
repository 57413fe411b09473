// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace s2ag {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  double sample_rate = 16000.0;

  bool operator==(const Waveform&) const = default;
};

inline constexpr std::size_t kMfccRows = 37;
inline constexpr std::size_t kCepstra = 14;  // log-energy term plus 13 coefficients
inline constexpr std::size_t kMelFilters = 40;
inline constexpr double kLogFloor = 1e-10;

/// 37 x M matrix, row-major by coefficient: row 0 is the log-energy term,
/// rows 1-13 the cepstra, rows 14-26 their first forward differences and
/// rows 27-36 the second forward differences.
struct MfccFeatures {
  std::size_t columns = 0;
  std::size_t window_size = 0;
  std::vector<double> values;

  double at(std::size_t row, std::size_t col) const { return values[row * columns + col]; }
};

/// Non-overlapping Hann-windowed frames of `window` samples (last frame
/// zero-padded) -> power spectrum -> 40 Mel filters over [0, Nyquist] -> log
/// with floor -> orthonormal DCT-II.
MfccFeatures compute_mfcc(const Waveform& wave, std::size_t window);

/// Window length that yields `per_frame` MFCC columns per pose frame.
std::size_t mfcc_window_for(double sample_rate, double fps, std::size_t per_frame = 4);

/// Triangular Mel filterbank [kMelFilters x (fft_size / 2 + 1)].
std::vector<double> mel_filterbank(std::size_t fft_size, double sample_rate, std::size_t filters = kMelFilters);

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::size_t kEmbeddingDim = 300;

/// Left-aligns `words` in a list of exactly `frames` tokens, padding with
/// kPadToken. Longer transcripts keep their first `frames` words.
std::vector<std::string> pad_transcript(const std::vector<std::string>& words, std::size_t frames);

std::vector<std::string> split_words(std::string_view text);

/// Word -> 300-vector lookup.
class WordEmbeddingTable {
 public:
  enum class UnknownPolicy { Zero, Hashed };

  /// Table with no stored words where every word gets a hash-seeded unit vector.
  static WordEmbeddingTable hashed();

  /// Parses "token v1 ... v300" lines; an optional first line "vocab dim" is skipped.
  static WordEmbeddingTable load_text(const std::filesystem::path& path, UnknownPolicy unknown = UnknownPolicy::Zero);

  void insert(std::string word, std::vector<double> vec);
  std::vector<double> lookup(std::string_view token) const;
  const std::vector<double>& padding() const { return padding_; }
  std::size_t vocabulary_size() const { return table_.size(); }
  UnknownPolicy unknown_policy() const { return unknown_; }

 private:
  std::unordered_map<std::string, std::vector<double>> table_;
  std::vector<double> padding_ = std::vector<double>(kEmbeddingDim, 0.0);
  UnknownPolicy unknown_ = UnknownPolicy::Hashed;
};

/// FNV-1a 64-bit over the UTF-8 bytes.
std::uint64_t fnv1a64(std::string_view s);

/// Deterministic unit vector: mt19937_64 seeded with fnv1a64(word), 300
/// draws mapped to [-1, 1) as ((x >> 11) * 2^-53) * 2 - 1, then normalized.
std::vector<double> hashed_embedding(std::string_view word);

/// 300 x T, row-major by dimension: column t is the vector of token t.
struct TranscriptFeatures {
  std::vector<std::string> tokens;
  std::vector<double> values;

  std::size_t frames() const { return tokens.size(); }
  double at(std::size_t dim, std::size_t t) const { return values[dim * tokens.size() + t]; }
};

TranscriptFeatures embed_tokens(const std::vector<std::string>& tokens, const WordEmbeddingTable& table);

std::vector<double> speaker_one_hot(std::size_t id, std::size_t speakers);

/// 16-bit PCM RIFF/WAVE. Multi-channel input is averaged to mono.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& wave);

Waveform resample_linear(const Waveform& wave, double target_rate);

/// Samples [begin, begin + count), zero-padded past the end.
Waveform audio_window(const Waveform& wave, std::size_t begin, std::size_t count);

}  // namespace s2ag
