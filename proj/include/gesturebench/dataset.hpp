#pragma once

// On-disk dataset formats and the in-memory sample list both trainers use.
//
//   landmarks: JSON lines, {"label": int, "frames": [[63 floats], ...]}
//   volumes:   directory with manifest.json and one .gvol file per sample

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gesturebench/synth.hpp"
#include "gesturebench/tensor.hpp"

namespace gesturebench {

/// Malformed dataset or checkpoint content; the message carries the line
/// or byte offset.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Modality { landmarks, volumes };

/// Label of a clip that shows no complete gesture (a pause or the passage
/// between two gestures). Trained toward a uniform class distribution.
inline constexpr std::size_t kNoGesture = static_cast<std::size_t>(-1);

struct Sample {
  Tensor input;  // [T,63] or [T,H,W,C]
  std::size_t label = 0;

  bool is_gesture() const { return label != kNoGesture; }
};

struct Dataset {
  Modality modality = Modality::landmarks;
  std::size_t num_classes = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  std::vector<std::size_t> class_counts() const;
};

Dataset to_dataset(const std::vector<LandmarkSequence>& seqs, std::size_t num_classes);
Dataset to_dataset(const std::vector<FrameVolume>& vols, std::size_t num_classes);

std::string encode_landmark_jsonl(const std::vector<LandmarkSequence>& seqs);
std::vector<LandmarkSequence> decode_landmark_jsonl(std::string_view text);
void write_landmark_dataset(const std::filesystem::path& path,
                            const std::vector<LandmarkSequence>& seqs);
std::vector<LandmarkSequence> read_landmark_dataset(const std::filesystem::path& path);

/// "GVOL", u32 version, u32 dims[4], float32 data; all little-endian.
std::string encode_gvol(const Tensor& volume);
Tensor decode_gvol(std::string_view bytes);

/// Writes manifest.json and sample_NNNNN.gvol files into `dir`.
void write_volume_dataset(const std::filesystem::path& dir, const std::vector<FrameVolume>& vols,
                          std::size_t num_classes);
std::vector<FrameVolume> read_volume_dataset(const std::filesystem::path& dir,
                                             std::size_t* num_classes = nullptr);

/// Reads either form: a directory (or manifest.json path) is a volume set,
/// anything else is parsed as landmark JSON lines. num_classes for landmark
/// files is max label + 1 unless `num_classes_hint` is larger.
Dataset load_dataset(const std::filesystem::path& path, std::size_t num_classes_hint = 0);

/// Stratified split: per class, round(n * fraction) samples (clamped to
/// [1, n-1]) go to test. Original sample order is kept within each part.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double test_fraction,
                                          std::uint64_t seed);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace gesturebench
