#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nfvscale/config.hpp"

namespace py = pybind11;
using namespace nfvscale;

PYBIND11_MAKE_OPAQUE(nfvscale::Trace)

namespace {

template <typename T, typename F>
py::array_t<T> column(const Trace& t, F get) {
  py::array_t<T> a(static_cast<py::ssize_t>(t.size()));
  auto v = a.template mutable_unchecked<1>();
  for (std::size_t i = 0; i < t.size(); ++i) v(static_cast<py::ssize_t>(i)) = get(t[i]);
  return a;
}

Nanos slo_of(const ExperimentConfig& cfg, std::optional<double> slo_us) {
  return slo_us ? static_cast<Nanos>(*slo_us * 1e3) : cfg.slos.front();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Packet-level simulator for per-core and per-server scaling of NF chains";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<TraceError>(m, "TraceError", PyExc_ValueError);
  py::register_exception<PredictorError>(m, "PredictorError", PyExc_RuntimeError);

  py::class_<ExperimentConfig>(m, "Config")
      .def_property_readonly("resolved_json", [](const ExperimentConfig& c) { return c.resolved.dump(); })
      .def_property_readonly("hash", [](const ExperimentConfig& c) { return c.hash; })
      .def_property_readonly("slos_us", [](const ExperimentConfig& c) {
        std::vector<double> v;
        for (auto s : c.slos) v.push_back(static_cast<double>(s) / 1e3);
        return v;
      })
      .def_property_readonly("modes", [](const ExperimentConfig& c) {
        std::vector<std::string> v;
        for (auto x : c.modes) v.push_back(to_string(x));
        return v;
      });

  m.def("load_config", &load_config, py::arg("path") = "",
        py::arg("overrides") = std::vector<std::string>{});
  m.def("default_config_text", &default_config_text);

  py::class_<Trace>(m, "Trace")
      .def(py::init<>())
      .def("__len__", [](const Trace& t) { return t.size(); })
      .def("columns", [](const Trace& t) {
        py::dict d;
        d["arrival_ns"] = column<std::int64_t>(t, [](const auto& r) { return r.arrival_ns; });
        d["flow_id"] = column<std::uint64_t>(t, [](const auto& r) { return r.flow; });
        d["dst_addr"] = column<std::uint32_t>(t, [](const auto& r) { return r.dst_addr; });
        d["size"] = column<std::uint32_t>(t, [](const auto& r) { return r.size; });
        return d;
      })
      .def("to_csv", [](const Trace& t) { return format_trace(t); })
      .def("write_csv", [](const Trace& t, const std::string& path) { write_trace(path, t); })
      .def_static("from_csv_text", &parse_trace_text)
      .def_static("read_csv", &parse_trace);

  m.def("workload", &load_workload, py::arg("config"), py::call_guard<py::gil_scoped_release>());

  m.def(
      "trace_stats",
      [](const Trace& t, double window_ms) {
        auto s = compute_stats(t, static_cast<Nanos>(window_ms * 1e6));
        py::dict d;
        d["packets"] = s.packet_count;
        d["flows"] = s.flow_count;
        d["max_flow_rate_pps"] = s.max_flow_rate;
        d["flow_arrival_rate"] = s.flow_arrival_rate;
        return d;
      },
      py::arg("trace"), py::arg("window_ms") = 10.0);

  py::class_<Predictors>(m, "Predictors")
      .def(py::init<>())
      .def("frontiers_text", [](const Predictors& p) { return serialize_frontiers({}, p.frontiers); })
      .def("rates_text", [](const Predictors& p) { return serialize_rate_table({}, p.rates); });

  m.def(
      "train",
      [](const ExperimentConfig& cfg, std::optional<double> slo_us, const Trace& trace) {
        py::gil_scoped_release nogil;
        SimConfig base = cfg.cell(slo_of(cfg, slo_us), Mode::Full);
        Predictors p;
        p.rates = train_long_term(base, cfg.training.long_term).table;
        p.frontiers = train_short_term(base, trace, cfg.training.short_term).family;
        return p;
      },
      py::arg("config"), py::arg("slo_us") = py::none(), py::arg("trace") = Trace{});

  m.def(
      "load_predictors",
      [](const ExperimentConfig& cfg, std::optional<double> slo_us, const std::string& mode) {
        return load_predictors(cfg, slo_of(cfg, slo_us), parse_mode(mode));
      },
      py::arg("config"), py::arg("slo_us") = py::none(), py::arg("mode") = "full");

  // Returns the summary record as a JSON string; the Python wrapper decodes it.
  m.def(
      "run_json",
      [](const ExperimentConfig& cfg, const Trace& trace, const std::string& mode,
         std::optional<double> slo_us, const Predictors& pred) {
        Mode md = parse_mode(mode);
        Nanos slo = slo_of(cfg, slo_us);
        std::string out;
        {
          py::gil_scoped_release nogil;
          out = summary_record(run(cfg.cell(slo, md), pred, trace), slo, md, cfg).dump();
        }
        return out;
      },
      py::arg("config"), py::arg("trace"), py::arg("mode") = "full", py::arg("slo_us") = py::none(),
      py::arg("predictors") = Predictors{});
}
