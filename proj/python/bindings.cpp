#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ican/checkpoint.hpp"
#include "ican/config.hpp"
#include "ican/dataset.hpp"
#include "ican/fusion.hpp"
#include "ican/pricing.hpp"
#include "ican/reports.hpp"
#include "ican/synthetic.hpp"
#include "ican/trainer.hpp"

namespace py = pybind11;
using namespace ican;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a, bool requires_grad = false) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()), requires_grad);
}

Array to_array(const Shape& shape, std::span<const double> values) {
    std::vector<py::ssize_t> dims(shape.begin(), shape.end());
    Array out(dims);
    std::copy(values.begin(), values.end(), out.mutable_data());
    return out;
}

Array to_array(const Tensor& t) { return to_array(t.shape(), t.values()); }

Array matrix(const std::vector<std::vector<double>>& rows) {
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    std::vector<double> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return to_array({rows.size(), cols}, flat);
}

py::dict prediction_dict(const PredictionResult& r) {
    py::dict d;
    d["distribution"] = r.distribution;
    d["ranking"] = r.ranking;
    d["coarse"] = matrix(r.coarse);
    return d;
}

py::dict epoch_dict(const EpochRecord& r) {
    py::dict d;
    d["epoch"] = r.epoch;
    d["loss"] = r.train_loss;
    d["top3"] = r.top3;
    d["top5"] = r.top5;
    d["top7"] = r.top7;
    d["improved"] = r.improved;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Bilinear fusion, co-attention and price-zone ensemble classifier";

    m.def(
        "mfb_fuse",
        [](const Array& x, const Array& y, const Array& u, const Array& v, std::size_t k) {
            const auto uu = to_tensor(u);
            if (k == 0 || uu.extent(1) % k != 0) throw std::invalid_argument("k must divide the projection width");
            MfbParams p{uu, to_tensor(v), k, uu.extent(1) / k};
            p.validate();
            return to_array(mfb_fuse(to_tensor(x), to_tensor(y), p));
        },
        py::arg("x"), py::arg("y"), py::arg("u"), py::arg("v"), py::arg("k"),
        "MFB fusion. u is [d_x, k*o], v is [d_y, k*o]; x and y are vectors or row batches.");

    m.def(
        "block_fuse",
        [](const Array& x, const Array& y, const Array& a, const Array& b, const Array& c, const Array& cores) {
            if (cores.ndim() != 4) throw std::invalid_argument("cores must be [R, L, M, N]");
            BlockParams p{to_tensor(a),
                          to_tensor(b),
                          to_tensor(c),
                          to_tensor(cores),
                          static_cast<std::size_t>(cores.shape(1)),
                          static_cast<std::size_t>(cores.shape(2)),
                          static_cast<std::size_t>(cores.shape(3)),
                          static_cast<std::size_t>(cores.shape(0))};
            p.validate();
            return to_array(block_fuse(to_tensor(x), to_tensor(y), p));
        },
        py::arg("x"), py::arg("y"), py::arg("a"), py::arg("b"), py::arg("c"), py::arg("cores"),
        "Block-term fusion. a [d_x, L*R], b [d_y, M*R], c [o, N*R], cores [R, L, M, N].");

    m.def(
        "weighted_ce_loss",
        [](const Array& logits, const std::vector<std::vector<std::size_t>>& targets) {
            Tape tape;
            TapeGuard guard(&tape);
            auto t = to_tensor(logits, true);
            const auto loss = weighted_ce_loss(t, targets);
            tape.backward(loss);
            return py::make_tuple(loss.item(), to_array(t.shape(), t.grad()));
        },
        py::arg("logits"), py::arg("targets"),
        "Class-weighted cross entropy of logits [B, heads, bins]; returns (loss, gradient).");

    m.def("price_to_label", [](double price) { return price_to_label(price, PriceZoneTable::standard()); },
          py::arg("price"));
    m.def("standard_zones", [] {
        py::list out;
        for (const auto& z : PriceZoneTable::standard().zones) {
            py::dict d;
            d["label"] = z.label;
            d["price_line"] = z.price_line;
            d["lower"] = z.lower;
            d["upper"] = z.upper;
            out.append(d);
        }
        return out;
    });
    m.def(
        "coarse_partitions",
        [](std::size_t heads, std::size_t bins, double band) {
            std::vector<std::vector<double>> edges;
            for (const auto& p : build_coarse_partitions(heads, bins, band, PriceZoneTable::standard()))
                edges.push_back(p.edges);
            return edges;
        },
        py::arg("heads"), py::arg("bins"), py::arg("band"), "Interior bin edges of each coarse classifier.");
    m.def(
        "vote",
        [](const std::vector<std::vector<double>>& coarse, double band) {
            if (coarse.empty()) throw std::invalid_argument("need at least one head");
            const auto table = PriceZoneTable::standard();
            const auto parts = build_coarse_partitions(coarse.size(), coarse.front().size(), band, table);
            return prediction_dict(vote(coarse, parts, table));
        },
        py::arg("coarse"), py::arg("band"), "Combine per-head bin probabilities into a fine-zone distribution.");

    py::class_<RunConfig>(m, "RunConfig")
        .def(py::init<>())
        .def(py::init(&RunConfig::from_text), py::arg("text"))
        .def_static("from_file",
                    [](const std::filesystem::path& p) {
                        RunConfig c;
                        c.apply_file(p);
                        return c;
                    })
        .def_static("keys",
                    [] {
                        std::vector<std::string> names;
                        for (const auto& k : RunConfig::keys()) names.push_back(k.name);
                        return names;
                    })
        .def("set", &RunConfig::set, py::arg("key"), py::arg("value"))
        .def("get", &RunConfig::get, py::arg("key"))
        .def("to_text", &RunConfig::to_text)
        .def("validate", &RunConfig::validate)
        .def("__setitem__", &RunConfig::set)
        .def("__getitem__", &RunConfig::get)
        .def("__repr__", [](const RunConfig& c) { return "RunConfig(\n" + c.to_text() + ")"; });

    m.def(
        "generate",
        [](const RunConfig& c, const std::filesystem::path& dir) {
            const auto table = PriceZoneTable::standard();
            const auto data = generate_synthetic(c.synthetic_spec(), table, c.require_seed());
            save_dataset(data, table, dir);
            return data.size();
        },
        py::arg("config"), py::arg("directory"), "Write a planted synthetic dataset; returns the sample count.");

    m.def(
        "train",
        [](const RunConfig& c, const std::filesystem::path& data_dir, const std::filesystem::path& out_dir) {
            const auto data = load_dataset_dir(data_dir);
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train_model(c, data, {out_dir, {}});
            }
            py::list log;
            for (const auto& e : r.log) log.append(epoch_dict(e));
            return log;
        },
        py::arg("config"), py::arg("data_dir"), py::arg("out_dir") = std::filesystem::path(),
        "Train one variant; returns the per-epoch log. Writes checkpoints when out_dir is set.");

    m.def(
        "evaluate",
        [](const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir, const std::string& split,
           const std::vector<std::size_t>& ks) {
            const auto data = load_dataset_dir(data_dir);
            const auto ckpt = load_checkpoint(checkpoint);
            const auto model = model_from_checkpoint(ckpt);
            const auto report = evaluate(*model, data, encode_all(data, ckpt.stats), parse_split(split), ks);
            py::dict topk;
            for (std::size_t i = 0; i < ks.size(); ++i) topk[py::int_(ks[i])] = report.topk[i];
            py::dict d;
            d["topk"] = topk;
            d["samples"] = report.sample_ids;
            d["labels"] = report.labels;
            d["confusion"] = report.confusion;
            py::list preds;
            for (const auto& r : report.results) preds.append(prediction_dict(r));
            d["predictions"] = preds;
            return d;
        },
        py::arg("checkpoint"), py::arg("data_dir"), py::arg("split") = "test",
        py::arg("ks") = std::vector<std::size_t>{3, 5, 7});

    m.def(
        "attention",
        [](const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir, std::size_t sample) {
            const auto data = load_dataset_dir(data_dir);
            if (sample >= data.size()) throw py::index_error("sample out of range");
            const auto ckpt = load_checkpoint(checkpoint);
            const auto model = model_from_checkpoint(ckpt);
            if (model->config().variant != Variant::ican) throw std::invalid_argument("checkpoint is not an ican model");
            const auto rec = encode_record(data.records[sample], data.schema, ckpt.stats);
            const auto out = model->forward(model->visual_input(data, sample), rec);
            return py::make_tuple(matrix(out.attention->visual), matrix(out.attention->attribute));
        },
        py::arg("checkpoint"), py::arg("data_dir"), py::arg("sample"),
        "Per-cell attention weights (visual [L, D], attribute [L, T]) for one sample.");
}
