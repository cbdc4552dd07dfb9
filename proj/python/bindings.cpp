#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cli.hpp"
#include "gesturebench/checkpoint.hpp"
#include "gesturebench/dataset.hpp"
#include "gesturebench/model.hpp"
#include "gesturebench/stream.hpp"
#include "gesturebench/synth.hpp"

namespace py = pybind11;
using namespace gesturebench;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array a(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

Array frames_to_array(const std::vector<LandmarkFrame>& frames) {
  Array a({static_cast<py::ssize_t>(frames.size()), static_cast<py::ssize_t>(kFrameWidth)});
  double* out = a.mutable_data();
  for (const auto& f : frames) out = std::copy(f.begin(), f.end(), out);
  return a;
}

long label_out(std::size_t label) { return label == kNoGesture ? -1 : static_cast<long>(label); }

// Events cross as JSON text; the Python side turns them into dicts.
std::vector<std::string> events_json(const std::vector<PredictionEvent>& ev) {
  std::vector<std::string> out;
  for (const auto& e : ev) out.push_back(e.to_json().dump());
  return out;
}

class PyStream {
 public:
  PyStream(std::shared_ptr<Model> model, const std::string& config)
      : model_(std::move(model)),
        pipeline_(StreamPipeline::for_model(*model_, StreamConfig::from_json(nlohmann::json::parse(config)))) {}

  std::vector<std::string> push_frame(const Array& frame) {
    return events_json(pipeline_.push_frame({frame.data(), static_cast<std::size_t>(frame.size())}));
  }
  std::uint64_t frames_accepted() const { return pipeline_.frames_accepted(); }

 private:
  std::shared_ptr<Model> model_;  // the pipeline holds a raw pointer into it
  StreamPipeline pipeline_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "LSTM vs 3D CNN gesture classification core";
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);

  py::class_<Model, std::shared_ptr<Model>>(m, "Model")
      .def_property_readonly("family", [](const Model& x) { return to_string(x.family()); })
      .def_property_readonly("num_classes", &Model::num_classes)
      .def_property_readonly("param_count", &Model::param_count)
      .def_property_readonly("flop_estimate", &Model::flop_estimate)
      .def_property_readonly("nominal_input_shape", &Model::nominal_input_shape)
      .def("descriptor_json", [](const Model& x) { return x.descriptor().dump(); })
      .def("predict", [](const Model& x, const Array& input) { return to_array(x.predict(to_tensor(input))); },
           py::arg("input"))
      .def("param_names", [](const Model& x) {
        std::vector<std::string> names;
        for (const auto& p : x.params()) names.push_back(p.name);
        return names;
      });

  m.def("make_model",
        [](const std::string& descriptor, std::uint64_t seed) {
          return std::shared_ptr<Model>(make_model(nlohmann::json::parse(descriptor), seed));
        },
        py::arg("descriptor"), py::arg("seed") = 0);
  m.def("load_checkpoint", [](const std::string& path) { return std::shared_ptr<Model>(load_checkpoint(path)); });
  m.def("save_checkpoint", [](const std::string& path, const Model& x) { save_checkpoint(path, x); });
  m.def("encode_checkpoint", [](const Model& x) { return py::bytes(encode_checkpoint(x)); });
  m.def("decode_checkpoint",
        [](const py::bytes& b) { return std::shared_ptr<Model>(decode_checkpoint(std::string(b))); });

  m.def("normalize_landmarks", [](const Array& raw) {
    const LandmarkFrame f = normalize_landmarks({raw.data(), static_cast<std::size_t>(raw.size())});
    return frames_to_array({f}).reshape({static_cast<py::ssize_t>(kFrameWidth)});
  });

  m.def("generate_dataset",
        [](std::size_t classes, std::size_t samples, std::size_t frames, double noise,
           std::uint64_t seed, std::optional<std::vector<std::size_t>> volume_dims) {
          GenerateOptions o;
          o.num_classes = classes;
          o.samples_per_class = samples;
          o.frames = frames;
          o.noise_sigma = noise;
          o.seed = seed;
          if (volume_dims) o.volume_dims = Shape(volume_dims->begin(), volume_dims->end());
          py::list out;
          for (const auto& s : generate_dataset(o)) {
            py::object vol = py::none();
            if (s.volume) vol = to_array(s.volume->voxels);
            out.append(py::make_tuple(frames_to_array(s.sequence.frames), label_out(s.sequence.label), vol));
          }
          return out;
        },
        py::arg("classes") = 10, py::arg("samples_per_class") = 60, py::arg("frames") = 30,
        py::arg("noise") = 0.01, py::arg("seed") = 42, py::arg("volume_dims") = py::none());

  m.def("generate_stream",
        [](const std::vector<std::size_t>& labels, std::size_t classes, std::size_t frames,
           std::size_t gap, double noise, std::uint64_t seed) {
          return frames_to_array(generate_stream(default_templates(classes), labels, frames, gap, noise, seed));
        },
        py::arg("labels"), py::arg("classes") = 10, py::arg("frames") = 30, py::arg("gap") = 10,
        py::arg("noise") = 0.01, py::arg("seed") = 42);

  py::class_<PyStream>(m, "StreamPipeline")
      .def(py::init<std::shared_ptr<Model>, const std::string&>(), py::arg("model"),
           py::arg("config_json") = "{}")
      .def("push_frame", &PyStream::push_frame)
      .def_property_readonly("frames_accepted", &PyStream::frames_accepted);

  m.def("run_cli",
        [](const std::vector<std::string>& args, const std::string& stdin_text) {
          std::vector<std::string> argv{"gesturebench"};
          argv.insert(argv.end(), args.begin(), args.end());
          std::istringstream in(stdin_text);
          std::ostringstream out, err;
          int code;
          {
            py::gil_scoped_release release;
            code = cli::run(argv, in, out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), py::arg("stdin") = "");
}
