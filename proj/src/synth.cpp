#include "gesturebench/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gesturebench/random.hpp"

namespace gesturebench {
namespace {

constexpr double kHalfPi = 1.5707963267948966;

using Vec3 = std::array<double, 3>;

struct Finger {
  std::size_t first;    // landmark index of the fixed base joint
  double base_x, base_y;
  double angle;         // in-plane direction, radians from +x
  std::array<double, 3> bones;
};

// Right hand, palm facing the camera, fingers along +y. Middle MCP sits at
// distance 1 from the wrist so the rest pose is already normalized.
constexpr std::array<Finger, 5> kFingers{{
    {1, -0.22, 0.18, 2.27, {0.33, 0.30, 0.25}},   // thumb: CMC,MCP,IP,TIP
    {5, -0.20, 0.90, 1.66, {0.40, 0.25, 0.20}},   // index
    {9, 0.00, 1.00, 1.5708, {0.45, 0.28, 0.22}},  // middle
    {13, 0.18, 0.92, 1.48, {0.42, 0.26, 0.20}},   // ring
    {17, 0.34, 0.78, 1.36, {0.32, 0.20, 0.18}},   // pinky
}};

// Joint bend per unit of finger flexion; the tip segment is bent (k+1) times.
constexpr double kBendPerJoint = 0.6;

// Hand roll about z tracks the wrist's horizontal position on its path.
constexpr double kRollGain = 0.8;

constexpr std::array<double, 5> kRestFlexion{0.2, 0.2, 0.2, 0.2, 0.2};

// The motion itself takes kMotionShare of a clip and starts at a random
// time in [0, 1 - kMotionShare]; the hand holds its start and end shapes
// around it.
constexpr double kMotionShare = 0.6;

// Region of the normalized hand plane covered by the pixel grid.
constexpr double kViewCenterX = 0.0;
constexpr double kViewCenterY = 0.95;
constexpr double kViewHalfExtent = 1.25;

LandmarkFrame posed(const Vec3& wrist, double roll, const std::array<double, 5>& flexion) {
  LandmarkFrame f{};
  const double cr = std::cos(roll), sr = std::sin(roll);
  auto put = [&](std::size_t idx, double x, double y, double z) {
    f[3 * idx] = wrist[0] + cr * x - sr * y;
    f[3 * idx + 1] = wrist[1] + sr * x + cr * y;
    f[3 * idx + 2] = wrist[2] + z;
  };
  put(0, 0.0, 0.0, 0.0);
  for (std::size_t k = 0; k < kFingers.size(); ++k) {
    const Finger& fg = kFingers[k];
    double x = fg.base_x, y = fg.base_y, z = 0.0;
    put(fg.first, x, y, z);
    const double dx = std::cos(fg.angle), dy = std::sin(fg.angle);
    for (std::size_t j = 0; j < 3; ++j) {
      const double theta = flexion[k] * kBendPerJoint * static_cast<double>(j + 1);
      const double c = std::cos(theta), s = std::sin(theta);
      x += fg.bones[j] * c * dx;
      y += fg.bones[j] * c * dy;
      z -= fg.bones[j] * s;
      put(fg.first + j + 1, x, y, z);
    }
  }
  return f;
}

// A held hand shape as seen in a frame: five flexion angles plus the roll.
using Shape6 = std::array<double, 6>;

Shape6 start_shape(const GestureTemplate& t) {
  const auto& f = t.flexion_start;
  return {f[0], f[1], f[2], f[3], f[4], kRollGain * (t.control_points[0][0] - 0.5)};
}

Shape6 end_shape(const GestureTemplate& t) {
  const auto& f = t.flexion_end;
  return {f[0], f[1], f[2], f[3], f[4], kRollGain * (t.control_points[3][0] - 0.5)};
}

double shape_distance(const Shape6& a, const Shape6& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(d);
}

// Separation between two classes: every start or end hand shape of one must
// differ from every start or end shape of the other. In a continuous
// stream a window often shows only the tail or head of a gesture, so
// sharing any single shape would make two classes confusable.
double template_distance(const GestureTemplate& a, const GestureTemplate& b) {
  const Shape6 as = start_shape(a), ae = end_shape(a), bs = start_shape(b), be = end_shape(b);
  return std::min({shape_distance(as, bs), shape_distance(ae, be), shape_distance(ae, bs),
                   shape_distance(as, be)});
}

}  // namespace

LandmarkFrame normalize_landmarks(std::span<const double> raw) {
  if (raw.size() != kFrameWidth) {
    throw DimensionError("landmark frame must have 63 values, got " + std::to_string(raw.size()));
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) {
      throw std::invalid_argument("landmark frame value " + std::to_string(i) + " is not finite");
    }
  }
  const double ox = raw[0], oy = raw[1], oz = raw[2];
  const double dx = raw[27] - ox, dy = raw[28] - oy, dz = raw[29] - oz;
  const double scale = std::sqrt(dx * dx + dy * dy + dz * dz);
  if (!(scale > 0.0)) {
    throw DegenerateFrameError("landmarks 0 and 9 coincide; cannot normalize frame");
  }
  LandmarkFrame out;
  for (std::size_t i = 0; i < kNumLandmarks; ++i) {
    out[3 * i] = (raw[3 * i] - ox) / scale;
    out[3 * i + 1] = (raw[3 * i + 1] - oy) / scale;
    out[3 * i + 2] = (raw[3 * i + 2] - oz) / scale;
  }
  return out;
}

bool is_normalized(const LandmarkFrame& f, double tol) {
  if (std::abs(f[0]) > tol || std::abs(f[1]) > tol || std::abs(f[2]) > tol) return false;
  const double d = std::sqrt(f[27] * f[27] + f[28] * f[28] + f[29] * f[29]);
  return std::abs(d - 1.0) <= tol;
}

Tensor LandmarkSequence::to_tensor() const {
  if (frames.empty()) throw DimensionError("landmark sequence is empty");
  Tensor t({frames.size(), kFrameWidth});
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::copy(frames[i].begin(), frames[i].end(), t.raw() + i * kFrameWidth);
  }
  return t;
}

void GestureTemplate::validate() const {
  for (const auto& p : control_points) {
    for (double v : p) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("template " + std::to_string(class_id) +
                                    ": control point outside the unit cube");
      }
    }
  }
  for (std::size_t k = 0; k < 5; ++k) {
    for (double a : {flexion_start[k], flexion_end[k]}) {
      if (!(a >= 0.0 && a <= kHalfPi)) {
        throw std::invalid_argument("template " + std::to_string(class_id) +
                                    ": flexion angle outside [0, pi/2]");
      }
    }
  }
}

std::vector<GestureTemplate> default_templates(std::size_t num_classes, std::uint64_t seed) {
  // Farthest-point selection among random candidates keeps classes apart;
  // template k only depends on templates 0..k-1, so smaller sets are
  // prefixes of larger ones.
  constexpr int kCandidates = 64;
  Rng rng(seed);
  std::vector<GestureTemplate> out;
  out.reserve(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    GestureTemplate best;
    double best_score = -1.0;
    for (int trial = 0; trial < kCandidates; ++trial) {
      GestureTemplate t;
      t.class_id = c;
      for (auto& p : t.control_points) {
        for (double& v : p) v = rng.uniform();
      }
      for (std::size_t k = 0; k < 5; ++k) {
        t.flexion_start[k] = rng.uniform(0.0, kHalfPi);
        t.flexion_end[k] = rng.uniform(0.0, kHalfPi);
      }
      // The relaxed hand between gestures must not read as any class's
      // start or end shape either.
      const Shape6 rest{kRestFlexion[0], kRestFlexion[1], kRestFlexion[2], kRestFlexion[3],
                        kRestFlexion[4], 0.0};
      double score = std::min(shape_distance(start_shape(t), rest),
                              shape_distance(end_shape(t), rest));
      for (const auto& prev : out) score = std::min(score, template_distance(t, prev));
      if (score > best_score) {
        best_score = score;
        best = t;
      }
    }
    out.push_back(best);
  }
  return out;
}

std::array<double, 3> catmull_rom(const std::array<std::array<double, 3>, 4>& pts, double s) {
  s = std::clamp(s, 0.0, 1.0);
  const double u = s * 3.0;
  const std::size_t seg = std::min<std::size_t>(2, static_cast<std::size_t>(u));
  const double t = u - static_cast<double>(seg);
  const auto& p0 = pts[seg == 0 ? 0 : seg - 1];
  const auto& p1 = pts[seg];
  const auto& p2 = pts[seg + 1];
  const auto& p3 = pts[std::min<std::size_t>(3, seg + 2)];
  const double t2 = t * t, t3 = t2 * t;
  Vec3 r;
  for (std::size_t a = 0; a < 3; ++a) {
    r[a] = 0.5 * (2.0 * p1[a] + (-p0[a] + p2[a]) * t +
                  (2.0 * p0[a] - 5.0 * p1[a] + 4.0 * p2[a] - p3[a]) * t2 +
                  (-p0[a] + 3.0 * p1[a] - 3.0 * p2[a] + p3[a]) * t3);
  }
  return r;
}

double ease(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

double motion_progress(double t, double onset) {
  return ease((t - onset) / kMotionShare);
}

LandmarkFrame pose_hand(const GestureTemplate& tmpl, double s) {
  const Vec3 wrist = catmull_rom(tmpl.control_points, s);
  std::array<double, 5> flex;
  for (std::size_t k = 0; k < 5; ++k) {
    flex[k] = tmpl.flexion_start[k] + (tmpl.flexion_end[k] - tmpl.flexion_start[k]) * s;
  }
  return posed(wrist, kRollGain * (wrist[0] - 0.5), flex);
}

LandmarkSequence generate_gesture(const GestureTemplate& tmpl, std::size_t frames,
                                  double noise_sigma, std::uint64_t seed) {
  if (frames < 2) throw std::invalid_argument("generate_gesture needs T >= 2");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
  Rng rng(seed);
  const double onset = rng.uniform(0.0, 1.0 - kMotionShare);
  LandmarkSequence seq;
  seq.label = tmpl.class_id;
  seq.frames.reserve(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const double time = static_cast<double>(t) / static_cast<double>(frames - 1);
    LandmarkFrame raw = pose_hand(tmpl, motion_progress(time, onset));
    if (noise_sigma > 0.0) {
      for (double& v : raw) v += noise_sigma * rng.normal();
    }
    seq.frames.push_back(normalize_landmarks(raw));
  }
  return seq;
}

LandmarkFrame rest_pose() { return posed({0.5, 0.5, 0.5}, 0.0, kRestFlexion); }

std::vector<LandmarkFrame> idle_frames(std::size_t count, double noise_sigma, std::uint64_t seed) {
  return hold_frames(rest_pose(), count, noise_sigma, seed);
}

std::vector<LandmarkFrame> hold_frames(const LandmarkFrame& raw_pose, std::size_t count,
                                       double noise_sigma, std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
  Rng rng(seed);
  std::vector<LandmarkFrame> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    LandmarkFrame raw = raw_pose;
    if (noise_sigma > 0.0) {
      for (double& v : raw) v += noise_sigma * rng.normal();
    }
    out.push_back(normalize_landmarks(raw));
  }
  return out;
}

FrameVolume render_volume(const LandmarkSequence& seq, const Shape& dims, double blob_sigma_px) {
  if (dims.size() != 4) throw DimensionError("volume dims must be [T,H,W,C]");
  for (std::size_t a = 0; a < 4; ++a) {
    if (dims[a] == 0) throw DimensionError("volume axis " + std::to_string(a) + " must be positive");
  }
  if (seq.length() != dims[0]) {
    throw DimensionError("volume axis 0: sequence has " + std::to_string(seq.length()) +
                         " frames, dims ask for " + std::to_string(dims[0]));
  }
  if (!(blob_sigma_px > 0.0)) throw std::invalid_argument("blob_sigma_px must be > 0");
  const std::size_t T = dims[0], H = dims[1], W = dims[2], C = dims[3];
  const double radius = 3.0 * blob_sigma_px;
  const auto reach = static_cast<long>(std::ceil(radius));
  const double inv2s2 = 1.0 / (2.0 * blob_sigma_px * blob_sigma_px);
  const double col_scale = static_cast<double>(W) / (2.0 * kViewHalfExtent);
  const double row_scale = static_cast<double>(H) / (2.0 * kViewHalfExtent);

  FrameVolume vol{Tensor(Shape(dims)), seq.label};
  std::vector<double> plane(H * W);
  for (std::size_t t = 0; t < T; ++t) {
    std::fill(plane.begin(), plane.end(), 0.0);
    const LandmarkFrame& f = seq.frames[t];
    for (std::size_t l = 0; l < kNumLandmarks; ++l) {
      // Grid centre is pixel (H/2, W/2); image rows grow downward.
      const double pc = static_cast<double>(W / 2) + (f[3 * l] - kViewCenterX) * col_scale;
      const double pr = static_cast<double>(H / 2) - (f[3 * l + 1] - kViewCenterY) * row_scale;
      if (!(pc >= -0.5 && pc < static_cast<double>(W) - 0.5 && pr >= -0.5 &&
            pr < static_cast<double>(H) - 0.5)) {
        continue;
      }
      const long r0 = std::lround(pr), c0 = std::lround(pc);
      for (long r = std::max(0L, r0 - reach); r <= std::min<long>(H - 1, r0 + reach); ++r) {
        for (long c = std::max(0L, c0 - reach); c <= std::min<long>(W - 1, c0 + reach); ++c) {
          const double d2 = (r - pr) * (r - pr) + (c - pc) * (c - pc);
          if (d2 > radius * radius) continue;
          plane[r * W + c] += std::exp(-d2 * inv2s2);
        }
      }
    }
    double* out = vol.voxels.raw() + t * H * W * C;
    for (std::size_t p = 0; p < H * W; ++p) {
      // Stored at float precision so a volume survives the .gvol round trip.
      const double v = static_cast<float>(std::min(1.0, plane[p]));
      for (std::size_t ch = 0; ch < C; ++ch) out[p * C + ch] = v;
    }
  }
  return vol;
}

std::vector<Tensor> window_stream(std::span<const LandmarkFrame> frames, std::size_t len,
                                  std::size_t stride) {
  if (len == 0) throw std::invalid_argument("window length must be >= 1");
  if (stride == 0) throw std::invalid_argument("window stride must be >= 1");
  std::vector<Tensor> out;
  if (frames.size() < len) return out;
  for (std::size_t start = 0; start + len <= frames.size(); start += stride) {
    Tensor w({len, kFrameWidth});
    for (std::size_t i = 0; i < len; ++i) {
      std::copy(frames[start + i].begin(), frames[start + i].end(), w.raw() + i * kFrameWidth);
    }
    out.push_back(std::move(w));
  }
  return out;
}

LandmarkSequence generate_pause(const std::vector<GestureTemplate>& templates,
                                std::size_t frames, std::size_t gap, double noise_sigma,
                                std::uint64_t seed) {
  if (templates.empty()) throw std::invalid_argument("generate_pause needs templates");
  if (gap == 0 || gap >= frames) throw std::invalid_argument("pause gap must be in [1, T)");
  Rng rng(seed);
  const auto& a = templates[rng.below(templates.size())];
  const auto& b = templates[rng.below(templates.size())];
  const std::size_t before = rng.below(frames - gap + 1);
  const auto head = generate_gesture(a, frames, noise_sigma, child_seed(seed, 1));
  const auto idle = idle_frames(gap, noise_sigma, child_seed(seed, 2));
  const auto tail = generate_gesture(b, frames, noise_sigma, child_seed(seed, 3));
  LandmarkSequence seq;
  seq.label = static_cast<std::size_t>(-1);
  seq.frames.assign(head.frames.end() - static_cast<std::ptrdiff_t>(before), head.frames.end());
  seq.frames.insert(seq.frames.end(), idle.begin(), idle.end());
  seq.frames.insert(seq.frames.end(), tail.frames.begin(),
                    tail.frames.begin() + static_cast<std::ptrdiff_t>(frames - gap - before));
  return seq;
}

LandmarkSequence shift_into_idle(const LandmarkSequence& seq, std::ptrdiff_t shift,
                                 double noise_sigma, std::uint64_t seed) {
  const auto T = static_cast<std::ptrdiff_t>(seq.length());
  if (shift <= -T || shift >= T) throw std::invalid_argument("shift must be inside the clip");
  const auto idle = idle_frames(static_cast<std::size_t>(std::abs(shift)), noise_sigma, seed);
  LandmarkSequence out;
  out.label = seq.label;
  if (shift >= 0) {
    out.frames.assign(seq.frames.begin() + shift, seq.frames.end());
    out.frames.insert(out.frames.end(), idle.begin(), idle.end());
  } else {
    out.frames = idle;
    out.frames.insert(out.frames.end(), seq.frames.begin(), seq.frames.end() + shift);
  }
  return out;
}

std::vector<LandmarkFrame> generate_stream(const std::vector<GestureTemplate>& templates,
                                           std::span<const std::size_t> labels,
                                           std::size_t frames, std::size_t gap,
                                           double noise_sigma, std::uint64_t seed) {
  std::vector<LandmarkFrame> out;
  auto add = [&](const std::vector<LandmarkFrame>& f) { out.insert(out.end(), f.begin(), f.end()); };
  add(idle_frames(gap, noise_sigma, child_seed(seed, 0)));
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] >= templates.size()) {
      throw std::invalid_argument("stream label " + std::to_string(labels[k]) + " has no template");
    }
    add(generate_gesture(templates[labels[k]], frames, noise_sigma, child_seed(seed, 2 * k + 1))
            .frames);
    add(idle_frames(gap, noise_sigma, child_seed(seed, 2 * k + 2)));
  }
  return out;
}

std::vector<PairedSample> generate_dataset(const GenerateOptions& o) {
  if (o.num_classes < 2) throw std::invalid_argument("need at least 2 classes");
  if (o.samples_per_class == 0) throw std::invalid_argument("samples_per_class must be >= 1");
  if (o.volume_dims && o.volume_dims->size() != 4) {
    throw DimensionError("volume dims must be [T,H,W,C]");
  }
  if (2 * o.edge_idle >= o.frames) throw std::invalid_argument("edge_idle must be < T/2");
  const auto templates = default_templates(o.num_classes, o.template_seed);
  const std::size_t n = o.num_classes * o.samples_per_class;
  // frame counts in the volume's time base
  auto rescale = [&](std::size_t k, std::size_t T) {
    return static_cast<std::size_t>(
        std::llround(static_cast<double>(k * T) / static_cast<double>(o.frames)));
  };

  std::vector<PairedSample> out;
  out.reserve(n + o.pause_samples);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& tmpl = templates[i % o.num_classes];
    const std::uint64_t s = child_seed(o.seed, i);
    std::ptrdiff_t shift = 0;
    if (o.edge_idle > 0) {
      Rng rng(child_seed(s, 7));
      shift = static_cast<std::ptrdiff_t>(rng.below(2 * o.edge_idle + 1)) -
              static_cast<std::ptrdiff_t>(o.edge_idle);
    }
    auto make = [&](std::size_t T, std::ptrdiff_t k) {
      auto g = generate_gesture(tmpl, T, o.noise_sigma, s);
      return k == 0 ? g : shift_into_idle(g, k, o.noise_sigma, child_seed(s, 8));
    };
    PairedSample p{make(o.frames, shift), std::nullopt};
    if (o.volume_dims) {
      const Shape& d = *o.volume_dims;
      const auto k = static_cast<std::ptrdiff_t>(rescale(static_cast<std::size_t>(std::abs(shift)), d[0]));
      p.volume = render_volume(d[0] == o.frames ? p.sequence : make(d[0], shift < 0 ? -k : k), d,
                               o.blob_sigma_px);
    }
    out.push_back(std::move(p));
  }
  for (std::size_t j = 0; j < o.pause_samples; ++j) {
    const std::uint64_t s = child_seed(o.seed, n + j);
    PairedSample p{generate_pause(templates, o.frames, o.pause_gap, o.noise_sigma, s),
                   std::nullopt};
    if (o.volume_dims) {
      const Shape& d = *o.volume_dims;
      const auto gap = std::clamp<std::size_t>(rescale(o.pause_gap, d[0]), 1, d[0] - 1);
      p.volume = render_volume(
          d[0] == o.frames ? p.sequence : generate_pause(templates, d[0], gap, o.noise_sigma, s), d,
          o.blob_sigma_px);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace gesturebench
