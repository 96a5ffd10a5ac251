// Python extension: thin wrappers over the harness, results come back as JSON text.

#include "ehstack/cli.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace ehstack;

namespace {

ActivityProfile on_off(const std::vector<int>& bits, double step) {
    ActivityProfile p;
    p.step_len = step;
    p.on_off.reserve(bits.size());
    for (int b : bits) p.on_off.push_back(b != 0);
    p.labels.assign(bits.size(), Activity::off);
    p.on_fraction.assign(bits.size(), 0.0);
    return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "ehstack simulator core";

    m.def(
        "run",
        [](const std::string& config_json, const std::string& base_dir) {
            const auto cfg = cli::parse_config(config_json, base_dir);
            cli::RunOutput out;
            {
                py::gil_scoped_release release;
                out = cli::execute(cfg);
            }
            return cli::result_json(out.result, out.meta);
        },
        py::arg("config_json"), py::arg("base_dir") = ".");

    m.def(
        "sweep",
        [](const std::string& config_json, int workers, const std::string& base_dir) {
            const auto cfg = cli::parse_config(config_json, base_dir);
            std::vector<cli::SweepCell> cells;
            {
                py::gil_scoped_release release;
                cells = cli::run_sweep(cfg, workers);
            }
            return cli::heatmap_csv(cells);
        },
        py::arg("config_json"), py::arg("workers") = 1, py::arg("base_dir") = ".");

    m.def(
        "normalize_config",
        [](const std::string& config_json, const std::string& base_dir) {
            const auto cfg = cli::parse_config(config_json, base_dir);
            return py::make_tuple(cli::dump_config(cfg), cli::config_hash(cfg));
        },
        py::arg("config_json"), py::arg("base_dir") = ".");

    m.def(
        "compute_sf",
        [](double p_active, double p_idle, double t_active, double t_period, double s_tp) {
            PowerProfile p;
            p.p_active_avg = p_active;
            p.p_idle_avg = p_idle;
            p.t_active = t_active;
            p.t_app_period = t_period;
            return compute_sf(p, s_tp);
        },
        py::arg("p_active"), py::arg("p_idle"), py::arg("t_active"), py::arg("t_period"), py::arg("s_tp"));

    m.def(
        "ape",
        [](const std::vector<int>& a, const std::vector<int>& b, double window, double step) {
            const auto r = compute_ape(on_off(a, step), on_off(b, step), window);
            py::dict d;
            d["epsilon"] = r.epsilon;
            d["epsilon_raw"] = r.epsilon_raw;
            d["n_diff"] = r.n_diff;
            d["n_total"] = r.n_total;
            return d;
        },
        py::arg("a"), py::arg("b"), py::arg("window") = 0.0, py::arg("step") = 0.2);

    m.def("presets", &preset_names);
    m.def("benchmark_table", [] {
        py::list rows;
        for (const auto& r : benchmark_table()) {
            py::dict d;
            d["name"] = r.name;
            d["t_sample_period"] = r.t_sample_period;
            d["bytes_per_comm"] = r.bytes_per_comm;
            d["n_per_comm"] = r.n_per_comm;
            d["s_i"] = r.s_i;
            d["s_tp"] = r.s_tp;
            d["s_f"] = r.s_f;
            rows.append(d);
        }
        return rows;
    });
}
