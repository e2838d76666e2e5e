#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "curvlab/config.hpp"
#include "curvlab/diagnostics.hpp"
#include "curvlab/network.hpp"
#include "curvlab/optim.hpp"
#include "curvlab/runner.hpp"
#include "curvlab/tasks.hpp"

namespace py = pybind11;
using namespace curvlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Labels = py::array_t<int, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
    const auto r = static_cast<std::size_t>(a.shape(0));
    const auto c = static_cast<std::size_t>(a.shape(1));
    return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

std::span<const double> as_span(const Array& a) {
    return {a.data(), static_cast<std::size_t>(a.size())};
}

std::span<const int> as_span(const Labels& a) {
    return {a.data(), static_cast<std::size_t>(a.size())};
}

Array to_array(const Matrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

Array to_array(std::span<const double> v) {
    Array out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

ParamSet make_params(const std::vector<std::size_t>& layout, const Array& flat,
                     const std::optional<Array>& snapshot) {
    ParamSet p(layout);
    if (snapshot) {
        p.unflatten(as_span(*snapshot));
        p.freeze_snapshot();
    }
    p.unflatten(as_span(flat));
    return p;
}

py::dict rank_dict(const RankReport& r) {
    py::dict d;
    d["erank"] = r.erank;
    d["max_rank"] = r.max_rank;
    d["relative"] = r.relative;
    return d;
}

py::dict record_dict(const DiagnosticsRecord& r) {
    py::dict d;
    d["task"] = r.task;
    d["task_end_error"] = r.task_end_error;
    d["task_end_loss"] = r.task_end_loss;
    d["avg_online_error"] = r.avg_online_error;
    d["hessian_erank_rel"] = r.hessian_relative_erank;
    d["feature_erank_rel"] = r.feature_relative_erank;
    d["update_norm_l1_avg"] = r.avg_update_norm_l1;
    d["weight_norm_l1"] = r.weight_norm_l1;
    d["dormancy_negentropy"] = r.dormancy_negentropy;
    d["grad_overlap"] = r.grad_overlap;
    d["dist_init_l2"] = r.dist_init_l2;
    d["dist_init_w2"] = r.dist_init_w2;
    if (r.fisher_relative_erank) d["fisher_erank_rel"] = *r.fisher_relative_erank;
    if (r.gauss_newton_relative_erank) d["gauss_newton_erank_rel"] = *r.gauss_newton_relative_erank;
    if (r.exact_relative_erank) d["exact_erank_rel"] = *r.exact_relative_erank;
    return d;
}

py::tuple penalty_tuple(const Penalty& p) { return py::make_tuple(p.value, to_array(p.gradient)); }

}  // namespace

PYBIND11_MODULE(_curvlab, m) {
    m.doc() = "Curvature and plasticity diagnostics for continual learning";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<IdxError>(m, "IdxError", PyExc_IOError);

    m.def("effective_rank",
          [](const Array& s, double threshold) { return effective_rank(as_span(s), threshold); },
          py::arg("singular_values"), py::arg("threshold") = kErankThreshold);
    m.def("singular_values", [](const Array& a) { return to_array(singular_values(to_matrix(a))); });
    m.def("sym_eigvals", [](const Array& a) { return to_array(sym_eigvals(to_matrix(a))); });
    m.def("empirical_fisher_rank", [](const Array& g) { return rank_dict(empirical_fisher_rank(to_matrix(g))); },
          py::arg("g"), "erank of the d x M per-sample gradient matrix through its Gram matrix.");
    m.def("symmetric_rank", [](const Array& h) { return rank_dict(symmetric_rank(to_matrix(h))); });
    m.def("feature_rank", [](const Array& phi) { return rank_dict(feature_effective_rank(to_matrix(phi))); });
    m.def("dormancy_negentropy", [](const Array& phi) { return dormancy_negentropy(to_matrix(phi)); });
    m.def("grad_overlap", [](const Array& g_matrix, const Array& g) {
        return grad_overlap(to_matrix(g_matrix), as_span(g));
    });

    m.def("init_params",
          [](const std::vector<std::size_t>& layout, std::uint64_t seed) {
              RandomStream rng(seed, stream_label("run/init"));
              return to_array(init_glorot(layout, rng).values());
          },
          py::arg("layout"), py::arg("seed") = 0,
          "Glorot-uniform parameters, identical to what `run` uses for this seed.");
    m.def("param_count", [](const std::vector<std::size_t>& layout) { return ParamSet(layout).size(); });
    m.def("forward",
          [](const std::vector<std::size_t>& layout, const Array& params, const std::string& activation,
             const Array& x) {
              const auto p = make_params(layout, params, std::nullopt);
              return to_array(forward(p, parse_activation(activation), to_matrix(x)).logits);
          },
          py::arg("layout"), py::arg("params"), py::arg("activation"), py::arg("x"));
    m.def("batch_gradient",
          [](const std::vector<std::size_t>& layout, const Array& params, const std::string& activation,
             const Array& x, const Labels& y) {
              const auto p = make_params(layout, params, std::nullopt);
              return to_array(batch_gradient(p, parse_activation(activation), to_matrix(x), as_span(y)));
          },
          py::arg("layout"), py::arg("params"), py::arg("activation"), py::arg("x"), py::arg("labels"));
    m.def("per_sample_gradients",
          [](const std::vector<std::size_t>& layout, const Array& params, const std::string& activation,
             const Array& x, const Labels& y) {
              const auto p = make_params(layout, params, std::nullopt);
              return to_array(per_sample_gradients(p, parse_activation(activation), to_matrix(x), as_span(y)));
          },
          py::arg("layout"), py::arg("params"), py::arg("activation"), py::arg("x"), py::arg("labels"),
          "d x M matrix whose column i is the loss gradient of sample i.");
    m.def("exact_hessian",
          [](const std::vector<std::size_t>& layout, const Array& params, const std::string& activation,
             const Array& x, const Labels& y) {
              const auto p = make_params(layout, params, std::nullopt);
              return to_array(exact_hessian(p, parse_activation(activation), to_matrix(x), as_span(y)));
          },
          py::arg("layout"), py::arg("params"), py::arg("activation"), py::arg("x"), py::arg("labels"));

    m.def("wasserstein_penalty",
          [](const std::vector<std::size_t>& layout, const Array& params, const Array& init) {
              return penalty_tuple(wasserstein_penalty(make_params(layout, params, init)));
          },
          py::arg("layout"), py::arg("params"), py::arg("init"), "(value, gradient)");
    m.def("regenerative_penalty",
          [](const std::vector<std::size_t>& layout, const Array& params, const Array& init) {
              return penalty_tuple(regenerative_penalty(make_params(layout, params, init)));
          },
          py::arg("layout"), py::arg("params"), py::arg("init"), "(value, gradient)");

    m.def("normalize_config", [](const std::string& text) { return to_config_text(parse_config(text)); },
          py::arg("text"), "Parses and validates a key=value config, returning its canonical text.");
    m.def("csv_header", [](bool fisher, bool gauss_newton, bool exact) {
        return csv_header({fisher, gauss_newton, exact});
    }, py::arg("fisher") = false, py::arg("gauss_newton") = false, py::arg("exact") = false);
    m.def("run",
          [](const std::string& text, std::optional<std::filesystem::path> output) {
              auto config = parse_config(text);
              if (output) config.output = *output;
              RunResult result;
              {
                  py::gil_scoped_release release;
                  result = run_experiment(config, {}, output.has_value());
              }
              py::list rows;
              for (const auto& r : result.records) rows.append(record_dict(r));
              return rows;
          },
          py::arg("config"), py::arg("output") = py::none(),
          "Runs an experiment from config text; writes the CSV only when `output` is given.");
    m.def("sweep",
          [](const std::string& text, const std::vector<std::string>& regularizers,
             const std::vector<double>& strengths, const std::vector<std::uint64_t>& seeds,
             const std::filesystem::path& out_dir, unsigned jobs) {
              const auto config = parse_config(text);
              std::vector<RegularizerKind> kinds;
              for (const auto& r : regularizers) kinds.push_back(parse_regularizer(r));
              SweepResult result;
              {
                  py::gil_scoped_release release;
                  result = run_sweep(config, kinds, strengths, seeds, out_dir, jobs);
              }
              py::list rows;
              for (const auto& s : result.summary) {
                  py::dict d;
                  d["regularizer"] = std::string(to_string(s.regularizer));
                  d["strength"] = s.strength;
                  d["seeds_ok"] = s.seeds_ok;
                  d["seeds_failed"] = s.seeds_failed;
                  d["final10_mean_task_end_error"] = s.final10_mean_error;
                  d["errors"] = s.errors;
                  rows.append(d);
              }
              return rows;
          },
          py::arg("config"), py::arg("regularizers"), py::arg("strengths"), py::arg("seeds"),
          py::arg("out_dir"), py::arg("jobs") = 1);
    m.def("validate_hessian",
          [](const std::string& text, const std::filesystem::path& output) {
              const auto config = parse_config(text);
              std::vector<HessianValidationRow> rows;
              {
                  py::gil_scoped_release release;
                  rows = validate_hessian_approx(config, output);
              }
              py::list out;
              for (const auto& r : rows) {
                  py::dict d;
                  d["task"] = r.task;
                  d["task_end_error"] = r.task_end_error;
                  d["exact"] = r.exact;
                  d["empirical_fisher"] = r.empirical_fisher;
                  d["fisher"] = r.fisher;
                  d["gauss_newton"] = r.gauss_newton;
                  out.append(d);
              }
              return out;
          },
          py::arg("config"), py::arg("output"));

    m.def("load_idx",
          [](const std::filesystem::path& images, const std::filesystem::path& labels) {
              const auto ds = load_idx(images, labels);
              py::array_t<int> y(static_cast<py::ssize_t>(ds.labels.size()));
              std::copy(ds.labels.begin(), ds.labels.end(), y.mutable_data());
              return py::make_tuple(to_array(ds.inputs), y, ds.num_classes);
          },
          py::arg("images"), py::arg("labels"), "(inputs scaled to [0, 1], labels, num_classes)");
    m.def("make_fixtures", [](const std::filesystem::path& dir) { make_fixtures(dir); }, py::arg("out_dir"));
}
