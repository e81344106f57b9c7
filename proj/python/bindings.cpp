#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "fusionkit/error.hpp"
#include "fusionkit/harness.hpp"
#include "fusionkit/probe.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace fusionkit;

namespace {

// JSON crosses the boundary as text; the Python package converts it.
harness::Config config_from(const std::string& overrides) {
  return overrides.empty() ? harness::Config::defaults() : harness::Config::from_json(json::parse(overrides));
}

py::dict svm_result(const SvmTrainResult& r) {
  py::dict d;
  d["alpha"] = r.alpha;
  d["bias"] = r.model.bias;
  d["gamma"] = r.model.gamma;
  d["dual_objective"] = r.dual_objective;
  d["kkt_violation"] = r.kkt_violation;
  d["converged"] = r.converged;
  d["support_vectors"] = r.model.support_vectors.rows();
  return d;
}

}  // namespace

PYBIND11_MODULE(_fusionkit, m) {
  m.doc() = "Native core of fusionkit";
  m.attr("__version__") = FUSIONKIT_VERSION;

  auto base = py::register_exception<Error>(m, "FusionkitError", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  m.def("tokenize", [](const std::string& text) { return tokenize(text).tokens; }, py::arg("text"));
  m.def("maxpool_reduce",
        [](const std::vector<double>& v, std::size_t window, std::size_t stride) {
          return maxpool_reduce(v, window, stride);
        },
        py::arg("vector"), py::arg("window") = 10, py::arg("stride") = 10);
  m.def("rbf_kernel", [](const std::vector<double>& x, const std::vector<double>& y,
                         double gamma) { return rbf_kernel(x, y, gamma); });
  m.def("score_test",
        [](std::size_t n1, std::size_t x1, std::size_t n2, std::size_t x2) {
          const ScoreTestResult r = score_test(n1, x1, n2, x2);
          return py::make_tuple(r.z, r.p);
        },
        py::arg("n1"), py::arg("x1"), py::arg("n2"), py::arg("x2"));
  m.def("normal_cdf", &normal_cdf);

  m.def("kmeans",
        [](const std::vector<std::vector<double>>& points, std::size_t k, std::size_t restarts, std::uint64_t seed) {
          KMeansConfig cfg;
          cfg.k = k;
          cfg.restarts = restarts;
          cfg.seed = seed;
          const ClusterModel model = kmeans(points, cfg);
          py::dict d;
          d["centroids"] = model.centroids;
          d["assignment"] = model.assignment;
          d["inertia"] = model.inertia;
          d["iterations"] = model.iterations;
          return d;
        },
        py::arg("points"), py::arg("k"), py::arg("restarts") = 10, py::arg("seed") = 0);
  m.def("silhouette",
        [](const std::vector<std::vector<double>>& points, const std::vector<std::size_t>& assignment) {
          const SilhouetteResult s = silhouette(points, assignment);
          return py::make_tuple(s.mean, s.per_point);
        },
        py::arg("points"), py::arg("assignment"));

  m.def("train_svm",
        [](const std::vector<std::vector<double>>& x, const std::vector<int>& y, double c, std::optional<double> gamma,
           double tol, bool standardize, std::uint64_t seed) {
          SvmConfig cfg;
          cfg.c = c;
          cfg.gamma = gamma;
          cfg.tol = tol;
          cfg.standardize = standardize;
          return svm_result(train_smo(x, y, cfg, seed));
        },
        py::arg("x"), py::arg("y"), py::arg("c") = 1.0, py::arg("gamma") = py::none(), py::arg("tol") = 1e-3,
        py::arg("standardize") = true, py::arg("seed") = 0);

  m.def("default_config", [] { return harness::Config::defaults().doc().dump(); });
  m.def("config_hash", [](const std::string& overrides) { return config_from(overrides).hash(); });
  m.def("probe", [](const std::string& request, const std::string& overrides) {
    return harness::run_probe(config_from(overrides), json::parse(request)).dump();
  });
  m.def("synth", [](const std::string& overrides, std::uint64_t seed, const std::filesystem::path& out) {
    const harness::Config cfg = config_from(overrides);
    generate_corpus(cfg.synth(seed), out);
  });
  m.def("prepare", [](const std::string& overrides, std::uint64_t seed, const std::filesystem::path& out) {
    const harness::PreparedData data = harness::prepare(config_from(overrides), seed);
    harness::write_prepared(data, out);
    return data.supertweets.size();
  });
  m.def("grid", [](const std::string& overrides, std::uint64_t seed, const std::filesystem::path& prepared,
                   std::optional<std::filesystem::path> log_dir) {
    const harness::Config cfg = config_from(overrides);
    harness::Workspace ws(cfg, harness::read_prepared(prepared));
    return harness::run_grid(ws, harness::grid_specs(cfg, seed), log_dir).to_csv();
  });
  m.def("clusters", [](const std::string& overrides, std::uint64_t seed) {
    const harness::Config cfg = config_from(overrides);
    const harness::ClusterAnalysis a = harness::analyze_clusters(cfg, seed);
    return py::make_tuple(a.report.to_csv(), a.to_json(cfg, seed).dump());
  });
  m.def("gradcheck", [](std::uint64_t seed) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& c : harness::run_gradcheck(seed)) out.emplace_back(c.name, c.result.max_relative_error);
    return out;
  });
}
