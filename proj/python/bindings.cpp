#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "mscsa/analysis.hpp"
#include "mscsa/tensor_io.hpp"

namespace py = pybind11;
using namespace mscsa;

namespace {

template <typename T>
Tensor<T> tensor_from_array(const py::array& arr) {
    auto a = py::array_t<T, py::array::c_style | py::array::forcecast>::ensure(arr);
    if (!a) throw py::type_error("expected a numeric array");
    std::vector<int> dims;
    for (py::ssize_t i = 0; i < a.ndim(); ++i) dims.push_back(static_cast<int>(a.shape(i)));
    Tensor<T> t(dims);
    std::memcpy(t.data(), a.data(), sizeof(T) * static_cast<std::size_t>(t.numel()));
    return t;
}

template <typename T>
py::array_t<T> array_from_tensor(const Tensor<T>& t) {
    std::vector<py::ssize_t> shape;
    for (int d : t.dims()) shape.push_back(d);
    py::array_t<T> out(shape);
    std::memcpy(out.mutable_data(), t.data(), sizeof(T) * static_cast<std::size_t>(t.numel()));
    return out;
}

bool is_f64(const py::array& a) { return a.dtype().is(py::dtype::of<double>()); }

// dispatches a unary tensor op on the array's precision
template <typename F32, typename F64>
py::object unary_dispatch(const py::array& x, F32 f32, F64 f64) {
    if (is_f64(x)) return py::object(array_from_tensor(f64(tensor_from_array<double>(x))));
    return py::object(array_from_tensor(f32(tensor_from_array<float>(x))));
}

ConvSpec make_spec(std::pair<int, int> stride, std::pair<int, int> padding, int groups,
                   const py::array& w) {
    ConvSpec spec;
    spec.kh = static_cast<int>(w.shape(2));
    spec.kw = static_cast<int>(w.shape(3));
    spec.sh = stride.first;
    spec.sw = stride.second;
    spec.ph = padding.first;
    spec.pw = padding.second;
    spec.groups = groups;
    return spec;
}

py::object json_loads(const std::string& s) {
    return py::module_::import("json").attr("loads")(s);
}

MscsaConfig config_from_path(const std::string& path) {
    if (path.empty()) throw ConfigError("config path is empty");
    return load_config_file(path);
}

}  // namespace

PYBIND11_MODULE(mscsa, m) {
    m.doc() = "multi-stage cross-scale attention: tensor ops, forward runs, cost model";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);

    m.def("matmul", [](const py::array& a, const py::array& b) -> py::object {
        if (is_f64(a) || is_f64(b)) {
            return py::object(array_from_tensor(
                ops::matmul(tensor_from_array<double>(a), tensor_from_array<double>(b))));
        }
        return py::object(array_from_tensor(
            ops::matmul(tensor_from_array<float>(a), tensor_from_array<float>(b))));
    });

    m.def(
        "conv2d",
        [](const py::array& x, const py::array& w, py::object bias, std::pair<int, int> stride,
           std::pair<int, int> padding, int groups) -> py::object {
            ConvSpec spec = make_spec(stride, padding, groups, w);
            if (is_f64(x)) {
                Tensor<double> xt = tensor_from_array<double>(x);
                Tensor<double> wt = tensor_from_array<double>(w);
                if (bias.is_none()) return py::object(array_from_tensor(ops::conv2d(xt, wt, spec)));
                Tensor<double> bt = tensor_from_array<double>(bias.cast<py::array>());
                return py::object(array_from_tensor(ops::conv2d(xt, wt, &bt, spec)));
            }
            Tensor<float> xt = tensor_from_array<float>(x);
            Tensor<float> wt = tensor_from_array<float>(w);
            if (bias.is_none()) return py::object(array_from_tensor(ops::conv2d(xt, wt, spec)));
            Tensor<float> bt = tensor_from_array<float>(bias.cast<py::array>());
            return py::object(array_from_tensor(ops::conv2d(xt, wt, &bt, spec)));
        },
        py::arg("x"), py::arg("weight"), py::arg("bias") = py::none(),
        py::arg("stride") = std::pair<int, int>{1, 1},
        py::arg("padding") = std::pair<int, int>{0, 0}, py::arg("groups") = 1);

    m.def("adaptive_avg_pool", [](const py::array& x, int th, int tw) {
        return unary_dispatch(
            x, [&](Tensor<float> t) { return ops::adaptive_avg_pool(t, th, tw); },
            [&](Tensor<double> t) { return ops::adaptive_avg_pool(t, th, tw); });
    });

    m.def("upsample_bilinear", [](const py::array& x, int th, int tw) {
        return unary_dispatch(
            x, [&](Tensor<float> t) { return ops::upsample_bilinear(t, th, tw); },
            [&](Tensor<double> t) { return ops::upsample_bilinear(t, th, tw); });
    });

    m.def("softmax_rows", [](const py::array& x) {
        return unary_dispatch(x, [](Tensor<float> t) { return ops::softmax_lastdim(t); },
                              [](Tensor<double> t) { return ops::softmax_lastdim(t); });
    });

    m.def("hardswish", [](const py::array& x) {
        return unary_dispatch(x, [](Tensor<float> t) { return ops::hardswish(t); },
                              [](Tensor<double> t) { return ops::hardswish(t); });
    });

    m.def("gelu", [](const py::array& x) {
        return unary_dispatch(x, [](Tensor<float> t) { return ops::gelu(t); },
                              [](Tensor<double> t) { return ops::gelu(t); });
    });

    m.def("kv_token_count", [](int h, int w, const std::string& strategy) {
        return kv_token_count(h, w, strategy_from_string(strategy));
    }, py::arg("h"), py::arg("w"), py::arg("strategy") = "parallel_dwconv");

    m.def("load_config", [](const std::string& path) {
        MscsaConfig cfg = config_from_path(path);
        py::dict d;
        d["channels"] = cfg.profile.channels;
        d["strides"] = cfg.profile.strides;
        d["input_resolution"] = cfg.input_resolution;
        d["pooled_size"] = cfg.pooled_h();
        d["squeezed_channels"] = cfg.squeezed_channels();
        d["total_channels"] = cfg.total_channels();
        d["depth"] = cfg.depth;
        d["heads"] = cfg.heads;
        d["head_dim"] = cfg.head_dim;
        d["strategy"] = to_string(cfg.strategy);
        d["variant"] = to_string(cfg.variant);
        d["num_classes"] = cfg.num_classes;
        d["seed"] = cfg.seed;
        return d;
    });

    m.def(
        "synth_pyramid",
        [](const std::string& config_path, py::object seed, int batch) {
            MscsaConfig cfg = config_from_path(config_path);
            std::uint64_t s = seed.is_none() ? cfg.seed : seed.cast<std::uint64_t>();
            StagePyramid<float> pyr =
                synth_pyramid<float>(cfg.profile, cfg.input_resolution, s, batch);
            py::list out;
            for (const auto& st : pyr.stages) out.append(array_from_tensor(st.feat));
            return out;
        },
        py::arg("config_path"), py::arg("seed") = py::none(), py::arg("batch") = 1);

    m.def(
        "forward",
        [](const std::string& config_path, py::object seed, py::object variant,
           int batch) -> py::object {
            MscsaConfig cfg = config_from_path(config_path);
            if (!variant.is_none()) cfg.variant = variant_from_string(variant.cast<std::string>());
            std::uint64_t s = seed.is_none() ? cfg.seed : seed.cast<std::uint64_t>();
            cfg.seed = s;
            MscsaModel<float> model = MscsaModel<float>::build(cfg);
            StagePyramid<float> pyr =
                synth_pyramid<float>(cfg.profile, cfg.input_resolution, s, batch);
            if (cfg.variant == Variant::Classification) {
                return py::object(array_from_tensor(model.forward_logits(pyr)));
            }
            py::list out;
            for (const auto& t : model.forward_dense(pyr)) out.append(array_from_tensor(t));
            return out;
        },
        py::arg("config_path"), py::arg("seed") = py::none(), py::arg("variant") = py::none(),
        py::arg("batch") = 1);

    m.def(
        "report",
        [](const std::string& config_path, int resolution, double reference_total) {
            MscsaConfig cfg = config_from_path(config_path);
            int res = resolution > 0 ? resolution : cfg.input_resolution;
            return json_loads(analysis::report(cfg, res, reference_total).to_structured());
        },
        py::arg("config_path"), py::arg("resolution") = 0, py::arg("reference_total") = 0.0);

    m.def(
        "gradcheck",
        [](const std::string& config_path, py::object seed, int elements_per_tensor) {
            MscsaConfig cfg = config_path.empty() ? builtin_mini_config()
                                                  : load_config_file(config_path);
            std::uint64_t s = seed.is_none() ? cfg.seed : seed.cast<std::uint64_t>();
            cfg.seed = s;
            MscsaModel<double> model = MscsaModel<double>::build(cfg);
            randomize_for_certification(model.params(), s + 1);
            StagePyramid<double> pyr =
                synth_pyramid<double>(cfg.profile, cfg.input_resolution, s, 1);
            GradcheckResult<double> res =
                gradcheck_model(model, pyr, 1e-4, elements_per_tensor, true);
            py::dict d;
            d["max_rel_err"] = res.max_rel_err;
            d["worst"] = res.worst_name;
            d["checked_elements"] = res.checked_elements;
            return d;
        },
        py::arg("config_path") = "", py::arg("seed") = py::none(),
        py::arg("elements_per_tensor") = 0);

    m.def("count_params", [](const std::string& config_path) {
        MscsaModel<float> model = MscsaModel<float>::build(config_from_path(config_path));
        return analysis::count_params(model.params());
    });

    m.def("read_msct", [](const std::string& path) -> py::object {
        io::AnyTensor any = io::read_tensor_file(path);
        if (auto* f = std::get_if<Tensor<float>>(&any)) return py::object(array_from_tensor(*f));
        return py::object(array_from_tensor(std::get<Tensor<double>>(any)));
    });

    m.def("write_msct", [](const std::string& path, const py::array& arr) {
        if (is_f64(arr)) {
            io::write_tensor_file(path, tensor_from_array<double>(arr));
        } else {
            io::write_tensor_file(path, tensor_from_array<float>(arr));
        }
    });
}
