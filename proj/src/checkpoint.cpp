#include "gesturebench/checkpoint.hpp"

#include <stdexcept>

#include "binary_io.hpp"
#include "gesturebench/dataset.hpp"

namespace gesturebench {

namespace {

constexpr char kMagic[4] = {'G', 'S', 'N', 'C'};

void put_tensor(detail::ByteWriter& w, const NamedTensor& t) {
  if (t.name.size() > 0xffff) throw std::invalid_argument("tensor name too long: " + t.name);
  if (t.value.rank() > 0xff) throw std::invalid_argument("tensor rank too large: " + t.name);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
  w.bytes(t.name);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(t.value.rank()));
  for (auto d : t.value.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  for (double x : t.value.data()) w.put<double>(x);
}

// Reads the next tensor and checks it against what the descriptor implies.
Tensor get_tensor(detail::ByteReader& r, const NamedTensor& expected) {
  const auto start = r.offset();
  const auto len = r.get<std::uint16_t>("tensor name length");
  const std::string name(r.bytes(len, "tensor name"));
  if (name != expected.name) {
    throw ParseError("checkpoint: expected tensor '" + expected.name + "', found '" + name +
                     "' at byte offset " + std::to_string(start));
  }
  const auto rank = r.get<std::uint8_t>("tensor rank");
  Shape shape(rank);
  for (auto& d : shape) d = r.get<std::uint32_t>("tensor dims");
  if (shape != expected.value.shape()) {
    r.fail("tensor '" + name + "' has shape " + shape_to_string(shape) + ", expected " +
           shape_to_string(expected.value.shape()));
  }
  const std::size_t n = shape_numel(shape);
  r.need(n * sizeof(double), "tensor data");
  std::vector<double> data(n);
  for (auto& x : data) x = r.get<double>("tensor data");
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace

std::string encode_checkpoint(const Model& model) {
  const std::string desc = model.descriptor().dump();
  detail::ByteWriter w;
  w.bytes({kMagic, 4});
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(desc.size()));
  w.bytes(desc);
  for (const auto& p : model.params()) put_tensor(w, p);
  for (const auto& b : model.buffers()) put_tensor(w, b);
  return std::move(w.str());
}

std::unique_ptr<Model> decode_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (r.bytes(4, "magic") != std::string_view(kMagic, 4)) {
    throw ParseError("checkpoint: bad magic at byte offset 0");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  const auto desc_len = r.get<std::uint32_t>("descriptor length");
  const auto desc_at = r.offset();
  const auto desc = r.bytes(desc_len, "descriptor");

  std::unique_ptr<Model> model;
  try {
    model = make_model(nlohmann::json::parse(desc));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("checkpoint: malformed descriptor at byte offset " +
                     std::to_string(desc_at + (e.byte > 0 ? e.byte - 1 : 0)));
  } catch (const std::exception& e) {
    throw ParseError("checkpoint: invalid descriptor at byte offset " + std::to_string(desc_at) +
                     ": " + e.what());
  }

  for (auto& p : model->params()) p.value = get_tensor(r, p);
  auto buffers = model->buffers();
  for (auto& b : buffers) b.value = get_tensor(r, b);
  if (!r.done()) r.fail(std::to_string(r.remaining()) + " trailing bytes");
  try {
    model->load_buffers(buffers);
  } catch (const std::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  write_file_atomic(path, encode_checkpoint(model));
}

std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace gesturebench
