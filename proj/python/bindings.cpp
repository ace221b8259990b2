#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "impsy/bench.hpp"
#include "impsy/config.hpp"
#include "impsy/mdrnn.hpp"
#include "impsy/midi.hpp"
#include "impsy/netio.hpp"
#include "impsy/service.hpp"
#include "impsy/session_log.hpp"
#include "impsy/train.hpp"

namespace py = pybind11;
using namespace impsy;

namespace {

// Stateful next-frame generator over a loaded network.
class Predictor {
 public:
  Predictor(MdrnnParams params, std::uint64_t seed, double pi_temp, double sigma_temp, double dt_max)
      : params_(std::move(params)), rng_(seed), temps_{pi_temp, sigma_temp}, dt_max_(dt_max) {
    reset();
  }

  void reset() {
    state_ = MdrnnState::initial(params_.shape);
    prev_ = state_.last_frame;
  }

  // Conditions on an observed frame without sampling.
  void observe(std::vector<double> values, double dt) {
    ContinuousFrame f = clamp_frame({std::move(values), dt}, dt_max_);
    if (f.dimension() != params_.shape.dim) throw py::value_error("frame has the wrong dimension");
    auto [mix, next] = forward_step(params_, state_, encode_frame(prev_));
    state_ = std::move(next);
    prev_ = f;
  }

  std::pair<std::vector<double>, double> predict() {
    auto [frame, next] = predict_next(params_, state_, prev_, temps_, dt_max_, rng_);
    state_ = std::move(next);
    prev_ = frame;
    return {frame.values, frame.dt};
  }

 private:
  MdrnnParams params_;
  Rng rng_;
  SamplingConfig temps_;
  double dt_max_;
  MdrnnState state_;
  ContinuousFrame prev_;
};

py::dict shape_dict(const MdrnnShape& s) {
  py::dict d;
  d["dim"] = s.dim;
  d["layers"] = s.layers;
  d["units"] = s.units;
  d["mixtures"] = s.mixtures;
  return d;
}

}  // namespace

PYBIND11_MODULE(_impsy, m) {
  m.doc() = "Mixture density RNN core, MIDI codec and config validation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<WeightFileError>(m, "WeightFileError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  py::class_<MdrnnParams>(m, "Model")
      .def_static(
          "random",
          [](int dim, int layers, int units, int mixtures, std::uint64_t seed) {
            const MdrnnShape shape{dim, layers, units, mixtures};
            check_shape(shape);
            Rng rng(seed);
            return MdrnnParams::initialize(shape, rng);
          },
          py::arg("dim"), py::arg("layers") = 2, py::arg("units") = 64, py::arg("mixtures") = 5,
          py::arg("seed") = 1)
      .def_static("load", &load_weights, py::arg("path"))
      .def_static("from_bytes",
                  [](const py::bytes& b) {
                    const std::string s = b;
                    return parse_weights(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
                  })
      .def("save", [](const MdrnnParams& p, const std::filesystem::path& path) { save_weights(p, path); })
      .def("to_bytes",
           [](const MdrnnParams& p) {
             const auto b = serialize_weights(p);
             return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
           })
      .def_property_readonly("shape", [](const MdrnnParams& p) { return shape_dict(p.shape); })
      .def_property_readonly("parameter_count", &MdrnnParams::parameter_count)
      .def("__eq__", [](const MdrnnParams& a, const MdrnnParams& b) { return a == b; });

  py::class_<Predictor>(m, "Predictor")
      .def(py::init<MdrnnParams, std::uint64_t, double, double, double>(), py::arg("model"), py::arg("seed") = 1,
           py::arg("pi_temp") = 1.0, py::arg("sigma_temp") = 1.0, py::arg("dt_max") = kDefaultDtMax)
      .def("reset", &Predictor::reset)
      .def("observe", &Predictor::observe, py::arg("values"), py::arg("dt"))
      .def("predict", &Predictor::predict, "Returns (values, dt) for the next frame.");

  m.def(
      "nll",
      [](std::vector<double> pi, std::vector<double> mu, std::vector<double> sigma, std::vector<double> x) {
        const int k = static_cast<int>(pi.size());
        const int w = static_cast<int>(x.size());
        if (k == 0 || mu.size() != pi.size() * x.size() || sigma.size() != mu.size())
          throw py::value_error("expected K weights and K*M means and scales");
        MixtureParams mix{k, w, std::move(pi), std::move(mu), std::move(sigma)};
        return nll(mix, x);
      },
      py::arg("pi"), py::arg("mu"), py::arg("sigma"), py::arg("x"));

  m.def(
      "train",
      [](const std::vector<std::filesystem::path>& logs, int dim, int layers, int units, int mixtures, int epochs,
         int seq_len, int batch_size, double learning_rate, std::uint64_t seed) {
        const auto data = build_dataset(logs, dim);
        TrainHyper h;
        h.epochs = epochs;
        h.seq_len = seq_len;
        h.batch_size = batch_size;
        h.learning_rate = learning_rate;
        Rng rng(seed);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(data, {dim, layers, units, mixtures}, h, std::nullopt, rng);
        }
        py::list history;
        for (const auto& e : r.history) history.append(py::make_tuple(e.epoch, e.train, e.validation));
        return py::make_tuple(r.params, history, r.best_epoch);
      },
      py::arg("logs"), py::arg("dim"), py::arg("layers") = 2, py::arg("units") = 64, py::arg("mixtures") = 5,
      py::arg("epochs") = 10, py::arg("seq_len") = 50, py::arg("batch_size") = 64, py::arg("learning_rate") = 1e-3,
      py::arg("seed") = 1,
      "Trains on session log files. Returns (model, [(epoch, train, validation)], best_epoch).");

  m.def(
      "validate_config",
      [](const std::string& text, const std::filesystem::path& base_dir) {
        nlohmann::json raw;
        try {
          raw = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
          throw ConfigError({std::string("malformed JSON: ") + e.what()});
        }
        return to_json(validate_config(raw, {base_dir, true})).dump();
      },
      py::arg("text"), py::arg("base_dir") = std::filesystem::path(),
      "Validates a config document and returns it with defaults filled in.");

  m.def("preset", [](const std::string& name, const std::string& model_file) {
    if (name == "volca") return to_json(presets::volca(model_file)).dump();
    if (name == "microfreak") return to_json(presets::microfreak(model_file)).dump();
    if (name == "daw") return to_json(presets::daw(model_file)).dump();
    if (name == "intelligent") return to_json(presets::intelligent_setup(model_file)).dump();
    throw py::value_error("unknown preset: " + name);
  });

  m.def("api_schema", [] { return api_schema().dump(); });

  m.def(
      "feed_frame",
      [](std::vector<double> values, double dt, const std::string& source, long long epoch_ms) {
        return feed_frame_json({std::move(values), dt}, source == "ai" ? Source::ai : Source::human,
                               WallTime{std::chrono::milliseconds{epoch_ms}});
      },
      py::arg("values"), py::arg("dt"), py::arg("source"), py::arg("epoch_ms"));
  m.def("feed_lead", [](const std::string& lead, long long epoch_ms) {
    return feed_lead_json(lead == "ai" ? Source::ai : Source::human, WallTime{std::chrono::milliseconds{epoch_ms}});
  });
  m.def("idle_status", [] { return to_json(StatusSnapshot{}).dump(); },
        "Status document of a runtime that has not started.");

  m.def("parse_midi", [](const py::bytes& b) {
    const std::string s = b;
    py::list out;
    for (const auto& msg : parse_stream(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()))) {
      const auto bytes = serialize(msg);
      out.append(py::make_tuple(to_string(msg.kind), py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
    }
    return out;
  });

  m.def("osc_encode", [](const std::string& address, const std::vector<float>& args) {
    const auto b = osc_encode(address, args);
    return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
  });

  m.def(
      "bench",
      [](int units, int layers, int dim, int mixtures, int iters) {
        const auto r = bench_predict({dim, layers, units, mixtures}, iters);
        py::dict d;
        d["units"] = r.units;
        d["mean_ms"] = r.mean_ms;
        d["p50_ms"] = r.p50_ms;
        d["p99_ms"] = r.p99_ms;
        return d;
      },
      py::arg("units") = 64, py::arg("layers") = 2, py::arg("dim") = 8, py::arg("mixtures") = 5,
      py::arg("iters") = kBenchMinIters);
}
