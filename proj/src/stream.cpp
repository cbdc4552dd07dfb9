#include "gesturebench/stream.hpp"

#include <cmath>
#include <stdexcept>

#include "json_util.hpp"

namespace gesturebench {

void StreamConfig::validate(std::size_t num_classes) const {
  if (window_len == 0) throw std::invalid_argument("window_len must be >= 1");
  if (infer_every == 0) throw std::invalid_argument("infer_every must be >= 1");
  if (!(confidence_threshold > 0.0 && confidence_threshold <= 1.0)) {
    throw std::invalid_argument("confidence_threshold must be in (0, 1]");
  }
  if (stability_count == 0) throw std::invalid_argument("stability_count must be >= 1");
  if (cooldown_frames == 0) throw std::invalid_argument("cooldown_frames must be >= 1");
  if (charset.size() < num_classes) {
    throw std::invalid_argument("charset has " + std::to_string(charset.size()) +
                                " characters for " + std::to_string(num_classes) + " classes");
  }
}

nlohmann::json StreamConfig::to_json() const {
  return {{"window_len", window_len},
          {"infer_every", infer_every},
          {"confidence_threshold", confidence_threshold},
          {"stability_count", stability_count},
          {"cooldown_frames", cooldown_frames},
          {"charset", charset}};
}

StreamConfig StreamConfig::from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(j,
                              {"window_len", "infer_every", "confidence_threshold",
                               "stability_count", "cooldown_frames", "charset"},
                              "stream");
  StreamConfig c;
  detail::read_key(j, "window_len", c.window_len);
  detail::read_key(j, "infer_every", c.infer_every);
  detail::read_key(j, "confidence_threshold", c.confidence_threshold);
  detail::read_key(j, "stability_count", c.stability_count);
  detail::read_key(j, "cooldown_frames", c.cooldown_frames);
  detail::read_key(j, "charset", c.charset);
  c.validate(0);
  return c;
}

const char* to_string(PredictionEvent::Kind k) {
  switch (k) {
    case PredictionEvent::Kind::candidate: return "candidate";
    case PredictionEvent::Kind::emit: return "emit";
    case PredictionEvent::Kind::diagnostic: return "diagnostic";
  }
  return "?";
}

nlohmann::json PredictionEvent::to_json() const {
  if (kind == Kind::diagnostic) {
    return {{"kind", "diagnostic"}, {"at_frame", at_frame}, {"message", message}};
  }
  return {{"kind", to_string(kind)},
          {"class", class_index},
          {"char", std::string(1, character)},
          {"confidence", confidence},
          {"at_frame", at_frame}};
}

bool Debouncer::offer(std::size_t class_index, double confidence, std::uint64_t frame) {
  State& s = state_;
  if (confidence >= config_.confidence_threshold) {
    if (s.run_class == class_index) {
      s.run_length = std::min(s.run_length + 1, config_.stability_count);
    } else {
      s.run_class = class_index;
      s.run_length = 1;
      s.latched = false;
    }
  } else {
    s.run_class.reset();
    s.run_length = 0;
    s.latched = false;
  }
  const bool cooled = !s.last_emit || frame - *s.last_emit > config_.cooldown_frames;
  if (s.run_length >= config_.stability_count && !s.latched && cooled) {
    s.latched = true;
    s.last_emit = frame;
    return true;
  }
  return false;
}

void Debouncer::reset() { state_ = State{}; }

StreamPipeline::StreamPipeline(StreamConfig config, Predictor predictor, std::size_t num_classes)
    : config_(std::move(config)),
      predictor_(std::move(predictor)),
      num_classes_(num_classes),
      debouncer_(config_) {
  config_.validate(num_classes_);
  if (!predictor_) throw std::invalid_argument("stream pipeline needs a predictor");
}

StreamPipeline StreamPipeline::for_model(const Model& model, StreamConfig config) {
  if (model.family() != Family::lstm) {
    throw std::invalid_argument("stream mode needs a landmark (lstm) model");
  }
  const Model* m = &model;
  return StreamPipeline(std::move(config), [m](const Tensor& w) { return m->predict(w); },
                        model.num_classes());
}

std::vector<PredictionEvent> StreamPipeline::push_frame(std::span<const double> frame) {
  std::vector<PredictionEvent> events;
  auto reject = [&](std::string msg) {
    PredictionEvent e;
    e.kind = PredictionEvent::Kind::diagnostic;
    e.at_frame = count_;
    e.message = std::move(msg);
    events.push_back(std::move(e));
    return events;
  };
  if (frame.size() != kFrameWidth) {
    return reject("frame has " + std::to_string(frame.size()) + " values, expected 63");
  }
  LandmarkFrame f;
  std::copy(frame.begin(), frame.end(), f.begin());
  for (double v : f) {
    if (!std::isfinite(v)) return reject("frame contains a non-finite value");
  }
  if (!is_normalized(f, 1e-6)) {
    try {
      f = normalize_landmarks(f);
    } catch (const DegenerateFrameError& e) {
      return reject(e.what());
    }
  }

  buffer_.push_back(f);
  if (buffer_.size() > config_.window_len) buffer_.pop_front();
  ++count_;
  if (buffer_.size() < config_.window_len || count_ % config_.infer_every != 0) return events;

  Tensor window({config_.window_len, kFrameWidth});
  for (std::size_t i = 0; i < buffer_.size(); ++i) {
    std::copy(buffer_[i].begin(), buffer_[i].end(), window.raw() + i * kFrameWidth);
  }
  const Tensor probs = predictor_(window);
  if (probs.numel() != num_classes_) {
    throw DimensionError("predictor returned " + std::to_string(probs.numel()) +
                         " probabilities for " + std::to_string(num_classes_) + " classes");
  }
  PredictionEvent cand;
  cand.class_index = ops::argmax(probs.data());
  cand.character = config_.charset[cand.class_index];
  cand.confidence = probs[cand.class_index];
  cand.at_frame = count_;
  events.push_back(cand);
  if (debouncer_.offer(cand.class_index, cand.confidence, count_)) {
    PredictionEvent emit = cand;
    emit.kind = PredictionEvent::Kind::emit;
    events.push_back(emit);
  }
  return events;
}

std::vector<PredictionEvent> StreamPipeline::run(std::span<const LandmarkFrame> frames) {
  std::vector<PredictionEvent> all;
  for (const auto& f : frames) {
    auto ev = push_frame(f);
    all.insert(all.end(), ev.begin(), ev.end());
  }
  return all;
}

std::string assemble_sentence(std::span<const PredictionEvent> events) {
  std::string out;
  for (const auto& e : events) {
    if (e.kind == PredictionEvent::Kind::emit) out += e.character;
  }
  return out;
}

}  // namespace gesturebench
