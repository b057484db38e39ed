#include "nam/bench.hpp"
#include "nam/cli.hpp"
#include "nam/engine.hpp"
#include "nam/errors.hpp"
#include "nam/eval.hpp"
#include "nam/losses.hpp"
#include "nam/matching.hpp"
#include "nam/synth.hpp"
#include "nam/weight_file.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace nam;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    std::vector<float> v(a.data(), a.data() + a.size());
    return Tensor::from(shape, std::move(v));
}

Array to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    auto d = t.data();
    std::copy(d.begin(), d.end(), out.mutable_data());
    return out;
}

// [N, C, H, W] <-> list of [C, H, W]
std::vector<Tensor> to_images(const Array& a) {
    if (a.ndim() != 4) throw ShapeError("expected a [N, C, H, W] array");
    const Shape one = {static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(2)),
                       static_cast<std::size_t>(a.shape(3))};
    const std::size_t step = shape_numel(one);
    std::vector<Tensor> out;
    for (py::ssize_t i = 0; i < a.shape(0); ++i) {
        const float* p = a.data() + static_cast<std::size_t>(i) * step;
        out.push_back(Tensor::from(one, std::vector<float>(p, p + step)));
    }
    return out;
}

Array stack(const std::vector<Tensor>& images) {
    if (images.empty()) return Array(std::vector<py::ssize_t>{0});
    std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(images.size())};
    for (auto d : images[0].shape()) shape.push_back(static_cast<py::ssize_t>(d));
    Array out(shape);
    float* dst = out.mutable_data();
    for (const auto& t : images) {
        auto d = t.data();
        dst = std::copy(d.begin(), d.end(), dst);
    }
    return out;
}

Array rows(const std::vector<std::vector<float>>& v) {
    const std::size_t d = v.empty() ? 0 : v[0].size();
    Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size()), static_cast<py::ssize_t>(d)});
    float* dst = out.mutable_data();
    for (const auto& r : v) dst = std::copy(r.begin(), r.end(), dst);
    return out;
}

std::vector<float> vec(const Array& a) { return {a.data(), a.data() + a.size()}; }

py::dict metric_dict(const Metric& m) {
    py::dict d;
    d["value"] = m.value;
    d["n"] = m.n;
    d["mean"] = m.mean;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Non-adversarial domain mapping core";

    // translators run newest first, so the base class goes in first
    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_FloatingPointError);

    py::class_<Generator, std::shared_ptr<Generator>>(m, "Generator")
        .def_property_readonly("kind", &Generator::kind)
        .def_property_readonly("latent_dim", &Generator::latent_dim)
        .def_property_readonly("output_shape", &Generator::output_shape)
        .def("forward", [](const Generator& g, const Array& z) { return to_array(g.forward(to_tensor(z))); })
        .def("decode", [](const Generator& g, const Array& z) { return g.decode(vec(z)); })
        .def("decoded_names", &Generator::decoded_names);

    py::class_<BlobGenerator, Generator, std::shared_ptr<BlobGenerator>>(m, "BlobGenerator")
        .def(py::init([](std::size_t size, bool with_level) {
                 return std::make_shared<BlobGenerator>(BlobConfig{size, with_level});
             }),
             py::arg("size") = 16, py::arg("with_level") = false);
    py::class_<OrientedBarGenerator, Generator, std::shared_ptr<OrientedBarGenerator>>(m, "OrientedBarGenerator")
        .def(py::init([](std::size_t size) { return std::make_shared<OrientedBarGenerator>(BarConfig{size}); }),
             py::arg("size") = 32);
    py::class_<ConvGenerator, Generator, std::shared_ptr<ConvGenerator>>(m, "ConvGenerator")
        .def(py::init([](std::size_t latent_dim, std::size_t base_channels, std::uint64_t seed) {
                 return std::make_shared<ConvGenerator>(ConvGeneratorConfig{latent_dim, base_channels, 1, seed});
             }),
             py::arg("latent_dim") = 8, py::arg("base_channels") = 16, py::arg("seed") = 0);

    py::class_<Mapper>(m, "Mapper")
        .def("forward", [](const Mapper& t, const Array& x) { return to_array(t.forward(to_tensor(x))); })
        .def("save", [](const Mapper& t, const std::string& path) { save_weights(path, t.parameters()); })
        .def_static("load", [](const std::string& path) { return Mapper::from_weights(load_weights(path)); });

    m.def("transform", [](const std::string& kind, const Array& image) {
        return to_array(DomainTransform{parse_transform(kind)}.apply(to_tensor(image)));
    }, py::arg("kind"), py::arg("image"));

    m.def("make_domain_pair", [](const Generator& g, const std::string& transform, std::size_t n, std::uint64_t seed) {
        auto p = make_domain_pair(g, DomainTransform{parse_transform(transform)}, n, seed);
        return py::make_tuple(stack(p.ys), rows(p.latents));
    }, py::arg("generator"), py::arg("transform"), py::arg("n"), py::arg("seed") = 0,
       "Returns (ys [n, C, H, W], ground-truth latents [n, d]).");

    m.def("pixel_l1", [](const Array& a, const Array& b) { return pixel_l1(to_tensor(a), to_tensor(b)).item(); });

    m.def("project_to_simplex", [](const Array& v) {
        auto x = vec(v);
        project_to_simplex(x);
        return x;
    });

    m.def("train", [](const Array& ys, std::shared_ptr<Generator> g, std::size_t epochs, std::size_t batch,
                      float lr_z, float lr_t, std::size_t f_width, std::size_t scales, std::uint64_t seed,
                      const std::string& loss, float latent_bound) {
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.batch_size = batch;
        cfg.lr_latent = lr_z;
        cfg.lr_mapper = lr_t;
        cfg.mapper.base_width = f_width;
        cfg.mapper.scales = scales;
        cfg.seed = seed;
        cfg.loss.mode = parse_loss_mode(loss);
        cfg.latent_bound = latent_bound;
        const auto images = to_images(ys);
        TrainState st;
        {
            py::gil_scoped_release release;
            st = nam_train(images, g, cfg);
        }
        std::vector<double> history;
        for (const auto& s : st.history) history.push_back(s.mean_loss);
        std::vector<std::vector<float>> zs;
        for (const auto& l : st.latents) {
            auto d = l.z.data();
            zs.emplace_back(d.begin(), d.end());
        }
        py::dict out;
        out["mapper"] = st.mapper;
        out["latents"] = rows(zs);
        out["indices"] = st.source_indices;
        out["history"] = history;
        return out;
    }, py::arg("ys"), py::arg("generator"), py::arg("epochs") = 200, py::arg("batch") = 16, py::arg("lr_z") = 0.03f,
       py::arg("lr_t") = 0.001f, py::arg("f_width") = 8, py::arg("scales") = 3, py::arg("seed") = 0,
       py::arg("loss") = "l1", py::arg("latent_bound") = 0.0f);

    m.def("infer", [](const Array& ys, const Generator& g, const Mapper& t, std::size_t n_inits, std::size_t steps,
                      float lr, std::uint64_t seed, float latent_bound) {
        InferConfig ic;
        ic.steps = steps;
        ic.lr = lr;
        ic.seed = seed;
        ic.latent_bound = latent_bound;
        const auto images = to_images(ys);
        std::vector<InferenceResult> results;
        {
            py::gil_scoped_release release;
            results = nam_infer_all(images, g, t, n_inits, ic);
        }
        py::list out;
        for (const auto& r : results) {
            py::list recs;
            for (const auto& rec : r.records) {
                py::dict d;
                d["init"] = rec.init_id;
                d["z"] = rec.z;
                d["loss"] = rec.loss;
                d["initial_loss"] = rec.initial_loss;
                d["synthesized"] = to_array(rec.synthesized);
                recs.append(d);
            }
            py::dict item;
            item["records"] = recs;
            item["failed"] = r.failed;
            out.append(item);
        }
        return out;
    }, py::arg("ys"), py::arg("generator"), py::arg("mapper"), py::arg("n_inits") = 8, py::arg("steps") = 500,
       py::arg("lr") = 0.03f, py::arg("seed") = 0, py::arg("latent_bound") = 0.0f);

    m.def("run_bench", [](const std::string& task, std::uint64_t seed, bool quick) {
        BenchOptions o;
        o.seed = seed;
        o.quick = quick;
        Report r;
        {
            py::gil_scoped_release release;
            r = run_bench(task, o);
        }
        py::dict out;
        for (const auto& mt : r.metrics) out[py::str(mt.name)] = metric_dict(mt);
        return out;
    }, py::arg("task"), py::arg("seed") = 0, py::arg("quick") = false);
    m.def("bench_tasks", &bench_tasks);

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
    }, "Runs one nam command in-process; returns (exit code, stdout, stderr).");
}
