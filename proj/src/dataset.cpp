#include "gesturebench/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "gesturebench/random.hpp"

namespace gesturebench {

namespace fs = std::filesystem;

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& s : samples) {
    if (!s.is_gesture()) continue;
    if (s.label >= counts.size()) counts.resize(s.label + 1, 0);
    ++counts[s.label];
  }
  return counts;
}

Dataset to_dataset(const std::vector<LandmarkSequence>& seqs, std::size_t num_classes) {
  Dataset d{Modality::landmarks, num_classes, {}};
  d.samples.reserve(seqs.size());
  for (const auto& s : seqs) {
    if (s.label != kNoGesture && s.label >= num_classes) {
      throw std::invalid_argument("label " + std::to_string(s.label) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
    d.samples.push_back({s.to_tensor(), s.label});
  }
  return d;
}

Dataset to_dataset(const std::vector<FrameVolume>& vols, std::size_t num_classes) {
  Dataset d{Modality::volumes, num_classes, {}};
  d.samples.reserve(vols.size());
  for (const auto& v : vols) {
    if (v.label != kNoGesture && v.label >= num_classes) {
      throw std::invalid_argument("label " + std::to_string(v.label) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
    d.samples.push_back({v.voxels, v.label});
  }
  return d;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw std::runtime_error("cannot move '" + tmp.string() + "' to '" + path.string() + "'");
  }
}

// --- landmark JSON lines ---------------------------------------------------

std::string encode_landmark_jsonl(const std::vector<LandmarkSequence>& seqs) {
  std::string out;
  for (const auto& s : seqs) {
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& f : s.frames) frames.push_back(f);
    const nlohmann::json label = s.label == kNoGesture ? nlohmann::json(-1) : nlohmann::json(s.label);
    out += nlohmann::json{{"label", label}, {"frames", std::move(frames)}}.dump();
    out += '\n';
  }
  return out;
}

std::vector<LandmarkSequence> decode_landmark_jsonl(std::string_view text) {
  std::vector<LandmarkSequence> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(where + ", offset " + std::to_string(e.byte) + ": malformed JSON");
    }
    if (!j.is_object() || !j.contains("label") || !j.contains("frames")) {
      throw ParseError(where + ": record needs 'label' and 'frames'");
    }
    for (const auto& [k, v] : j.items()) {
      if (k != "label" && k != "frames") throw ParseError(where + ": unknown key '" + k + "'");
    }
    if (!j["label"].is_number_integer() || j["label"].get<long long>() < -1) {
      throw ParseError(where + ": 'label' must be a class index or -1");
    }
    const auto& frames = j["frames"];
    if (!frames.is_array() || frames.empty()) {
      throw ParseError(where + ": 'frames' must be a non-empty array");
    }
    LandmarkSequence seq;
    const auto label = j["label"].get<long long>();
    seq.label = label < 0 ? kNoGesture : static_cast<std::size_t>(label);
    seq.frames.reserve(frames.size());
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const auto& fr = frames[t];
      if (!fr.is_array() || fr.size() != kFrameWidth) {
        throw ParseError(where + ": frame " + std::to_string(t) + " must hold 63 numbers");
      }
      LandmarkFrame f;
      for (std::size_t i = 0; i < kFrameWidth; ++i) {
        if (!fr[i].is_number()) {
          throw ParseError(where + ": frame " + std::to_string(t) + " value " + std::to_string(i) +
                           " is not a number");
        }
        f[i] = fr[i].get<double>();
      }
      seq.frames.push_back(f);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

void write_landmark_dataset(const fs::path& path, const std::vector<LandmarkSequence>& seqs) {
  write_file_atomic(path, encode_landmark_jsonl(seqs));
}

std::vector<LandmarkSequence> read_landmark_dataset(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("dataset file '" + path.string() + "' not found");
  try {
    return decode_landmark_jsonl(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// --- volumes -----------------------------------------------------------------

namespace {
constexpr char kGvolMagic[4] = {'G', 'V', 'O', 'L'};
constexpr std::uint32_t kGvolVersion = 1;
}  // namespace

std::string encode_gvol(const Tensor& v) {
  if (v.rank() != 4) throw DimensionError("gvol volume must be rank 4, got " + shape_to_string(v.shape()));
  detail::ByteWriter w;
  w.bytes({kGvolMagic, 4});
  w.put<std::uint32_t>(kGvolVersion);
  for (auto d : v.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  for (double x : v.data()) w.put<float>(static_cast<float>(x));
  return std::move(w.str());
}

Tensor decode_gvol(std::string_view bytes) {
  detail::ByteReader r(bytes, "gvol");
  if (r.bytes(4, "magic") != std::string_view(kGvolMagic, 4)) {
    throw ParseError("gvol: bad magic at byte offset 0");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kGvolVersion) r.fail("unsupported version " + std::to_string(version));
  Shape dims(4);
  for (auto& d : dims) {
    d = r.get<std::uint32_t>("dims");
    if (d == 0) r.fail("zero dimension");
  }
  const std::size_t n = shape_numel(dims);
  r.need(n * sizeof(float), "voxel data");
  std::vector<double> data(n);
  for (auto& x : data) {
    const std::size_t at = r.offset();
    x = r.get<float>("voxel data");
    if (!(x >= 0.0 && x <= 1.0)) {
      throw ParseError("gvol: voxel value outside [0,1] at byte offset " + std::to_string(at));
    }
  }
  if (!r.done()) r.fail(std::to_string(r.remaining()) + " trailing bytes");
  return Tensor(std::move(dims), std::move(data));
}

void write_volume_dataset(const fs::path& dir, const std::vector<FrameVolume>& vols,
                          std::size_t num_classes) {
  if (vols.empty()) throw std::invalid_argument("volume dataset is empty");
  fs::create_directories(dir);
  const Shape dims = vols.front().voxels.shape();
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t i = 0; i < vols.size(); ++i) {
    if (vols[i].voxels.shape() != dims) {
      throw DimensionError("volume " + std::to_string(i) + " has shape " +
                           shape_to_string(vols[i].voxels.shape()) + ", expected " +
                           shape_to_string(dims));
    }
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05zu.gvol", i);
    write_file_atomic(dir / name, encode_gvol(vols[i].voxels));
    const nlohmann::json label =
        vols[i].label == kNoGesture ? nlohmann::json(-1) : nlohmann::json(vols[i].label);
    samples.push_back({{"label", label}, {"file", name}});
  }
  nlohmann::json manifest{{"dims", dims}, {"classes", num_classes}, {"samples", samples}};
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<FrameVolume> read_volume_dataset(const fs::path& dir, std::size_t* num_classes) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw std::runtime_error("manifest '" + mpath.string() + "' not found");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(mpath));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(mpath.string() + ": offset " + std::to_string(e.byte) + ": malformed JSON");
  }
  Shape dims;
  std::size_t classes = 0;
  try {
    dims = m.at("dims").get<Shape>();
    classes = m.at("classes").get<std::size_t>();
    if (!m.at("samples").is_array()) throw ParseError("'samples' must be an array");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(mpath.string() + ": " + e.what());
  }
  if (dims.size() != 4) throw ParseError(mpath.string() + ": 'dims' must have 4 entries");
  std::vector<FrameVolume> out;
  for (const auto& s : m["samples"]) {
    std::string file;
    std::size_t label = 0;
    try {
      file = s.at("file").get<std::string>();
      const auto l = s.at("label").get<long long>();
      if (l < -1) throw ParseError("label must be a class index or -1");
      label = l < 0 ? kNoGesture : static_cast<std::size_t>(l);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(mpath.string() + ": sample " + std::to_string(out.size()) + ": " + e.what());
    }
    if (label != kNoGesture && label >= classes) {
      throw ParseError(mpath.string() + ": sample " + std::to_string(out.size()) + " label " +
                       std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    }
    const fs::path fpath = dir / file;
    if (!fs::exists(fpath)) {
      throw std::runtime_error("manifest references missing file '" + fpath.string() + "'");
    }
    Tensor v;
    try {
      v = decode_gvol(read_file(fpath));
    } catch (const ParseError& e) {
      throw ParseError(fpath.string() + ": " + e.what());
    }
    if (v.shape() != dims) {
      throw DimensionError(fpath.string() + ": dims " + shape_to_string(v.shape()) +
                           " do not match manifest " + shape_to_string(dims));
    }
    out.push_back({std::move(v), label});
  }
  if (num_classes) *num_classes = classes;
  return out;
}

Dataset load_dataset(const fs::path& path, std::size_t num_classes_hint) {
  if (fs::is_directory(path) || path.filename() == "manifest.json") {
    const fs::path dir = fs::is_directory(path) ? path : path.parent_path();
    std::size_t classes = 0;
    auto vols = read_volume_dataset(dir, &classes);
    return to_dataset(vols, std::max(classes, num_classes_hint));
  }
  auto seqs = read_landmark_dataset(path);
  std::size_t classes = num_classes_hint;
  for (const auto& s : seqs) {
    if (s.label != kNoGesture) classes = std::max(classes, s.label + 1);
  }
  return to_dataset(seqs, classes);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double test_fraction,
                                          std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test_fraction must be in (0, 1)");
  }
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.samples.size(); ++i) by_class[data.samples[i].label].push_back(i);
  std::vector<bool> is_test(data.samples.size(), false);
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2) {
      throw std::invalid_argument("class " + std::to_string(label) +
                                  " has a single sample; cannot split");
    }
    Rng rng(child_seed(seed, label));
    rng.shuffle(idx.begin(), idx.end());
    const auto n = static_cast<double>(idx.size());
    const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(n * test_fraction)),
                                           1, idx.size() - 1);
    for (std::size_t j = 0; j < k; ++j) is_test[idx[j]] = true;
  }
  Dataset train{data.modality, data.num_classes, {}}, test{data.modality, data.num_classes, {}};
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    (is_test[i] ? test : train).samples.push_back(data.samples[i]);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace gesturebench
