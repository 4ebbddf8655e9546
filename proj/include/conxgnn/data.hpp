#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "conxgnn/tensor.hpp"

namespace conxgnn {

enum class Modality : int { text = 0, audio = 1, visual = 2 };

inline constexpr int kNumModalities = 3;
inline constexpr Modality kModalities[kNumModalities] = {Modality::text, Modality::audio,
                                                         Modality::visual};

const char* modality_name(Modality m);

struct Utterance {
  std::size_t speaker_id = 0;
  std::size_t label = 0;
  Vector text_feat;
  Vector audio_feat;
  Vector visual_feat;

  const Vector& features(Modality m) const;
  bool operator==(const Utterance& other) const;
};

struct Conversation {
  std::string id;
  std::vector<Utterance> utterances;

  std::size_t size() const { return utterances.size(); }
  bool operator==(const Conversation&) const = default;
};

struct FeatureDims {
  std::size_t text = 0;
  std::size_t audio = 0;
  std::size_t visual = 0;

  std::size_t operator[](Modality m) const;
  bool operator==(const FeatureDims&) const = default;
};

enum class Split { unspecified, train, val, test };

const char* split_name(Split s);

struct Dataset {
  std::size_t num_classes = 0;
  std::size_t num_speakers = 0;
  FeatureDims dims;
  std::vector<Conversation> conversations;
  Split split = Split::unspecified;

  std::size_t total_utterances() const;
  /// Throws DataError (line 0) on the first violated invariant.
  void validate() const;
  bool operator==(const Dataset&) const = default;
};

/// Loading and validation failures. `line()` is 1-based; 0 means "not tied
/// to a line".
class DataError : public std::runtime_error {
 public:
  enum class Kind { missing_file, malformed_json, invalid_value };

  DataError(Kind kind, std::size_t line, const std::string& what);

  Kind kind() const { return kind_; }
  std::size_t line() const { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

/// JSONL: a header object {num_classes, num_speakers, dims:[t,a,v], split?}
/// followed by one conversation object per line.
Dataset load_dataset(const std::filesystem::path& path);
Dataset read_dataset(std::istream& in);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
void write_dataset(const Dataset& dataset, std::ostream& out);

/// counts[c] = number of utterances labelled c.
std::vector<std::size_t> class_counts(const Dataset& dataset);

/// The first `n_first` conversations and the remainder, both sharing the
/// header of `dataset`.
std::pair<Dataset, Dataset> split_conversations(const Dataset& dataset, std::size_t n_first);

struct SyntheticConfig {
  std::size_t num_classes = 4;
  std::size_t num_speakers = 2;
  FeatureDims dims{32, 24, 16};
  std::size_t n_conversations = 40;
  std::size_t min_length = 4;
  std::size_t max_length = 8;
  std::vector<double> class_probs{0.55, 0.25, 0.15, 0.05};
  double separation = 8.0;
  double noise = 0.5;
};

/// Gaussian clusters: each class has a mean of norm `separation` in a shared
/// latent space, rotated by a per-modality random orthogonal matrix; samples
/// add isotropic noise of std `noise`. Deterministic in `seed`.
Dataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

}  // namespace conxgnn
