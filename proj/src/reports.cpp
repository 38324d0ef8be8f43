#include "ican/reports.hpp"

#include <fstream>
#include <stdexcept>

namespace ican {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.precision(17);
    return os;
}

}  // namespace

double EvaluationReport::accuracy_at(std::size_t k) const {
    for (std::size_t i = 0; i < ks.size(); ++i)
        if (ks[i] == k) return topk[i];
    throw std::out_of_range("top-" + std::to_string(k) + " was not evaluated");
}

EvaluationReport evaluate(const Model& model, const Dataset& data, const std::vector<EncodedRecord>& encoded,
                          Split split, const std::vector<std::size_t>& ks) {
    if (model.schema().to_text() != data.schema.to_text()) {
        throw std::invalid_argument("dataset attribute schema does not match the checkpoint");
    }
    if (encoded.size() != data.size()) throw std::invalid_argument("encoded records do not match the dataset");
    EvaluationReport r;
    r.split = split;
    r.ks = ks;
    r.sample_ids = data.indices(split);
    PrecisionGuard precision(model.config().precision);
    for (auto i : r.sample_ids) {
        r.results.push_back(model.predict(model.visual_input(data, i), encoded[i]));
        r.labels.push_back(data.labels[i]);
    }
    for (auto k : ks) r.topk.push_back(r.results.empty() ? 0.0 : top_k_accuracy(r.results, r.labels, k));
    r.confusion = confusion_matrix(r.results, r.labels, model.zones().size());
    return r;
}

void write_report(const EvaluationReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        auto os = open_out(dir / "topk.csv");
        os << "split,k,accuracy,samples\n";
        for (std::size_t i = 0; i < report.ks.size(); ++i)
            os << to_string(report.split) << ',' << report.ks[i] << ',' << report.topk[i] << ','
               << report.sample_ids.size() << '\n';
    }
    {
        auto os = open_out(dir / "confusion.csv");
        const auto n = report.confusion.size();
        os << "true_label";
        for (std::size_t c = 0; c < n; ++c) os << ",pred_" << c;
        os << '\n';
        for (std::size_t t = 0; t < n; ++t) {
            os << t;
            for (auto v : report.confusion[t]) os << ',' << v;
            os << '\n';
        }
    }
    {
        auto os = open_out(dir / "predictions.csv");
        os << "sample,label,top1,rank_of_label,ranking,p_label\n";
        for (std::size_t i = 0; i < report.results.size(); ++i) {
            const auto& res = report.results[i];
            const auto label = report.labels[i];
            std::size_t rank = 0;
            while (rank < res.ranking.size() && res.ranking[rank] != label) ++rank;
            os << report.sample_ids[i] << ',' << label << ',' << res.top() << ',' << rank + 1 << ',';
            for (std::size_t j = 0; j < res.ranking.size(); ++j) os << (j ? " " : "") << res.ranking[j];
            os << ',' << res.distribution[label] << '\n';
        }
    }
}

std::vector<SweepRow> sweep_cells(const RunConfig& config, const Dataset& data, const std::vector<std::size_t>& cells,
                                  const std::function<void(const SweepRow&)>& on_row) {
    std::vector<SweepRow> rows;
    for (auto l : cells) {
        RunConfig c = config;
        c.variant = Variant::ican;
        c.model.cells = l;
        const auto trained = train_model(c, data);
        const auto model = model_from_checkpoint(trained.final_state, true);
        const auto report = evaluate(*model, data, encode_all(data, trained.final_state.stats), Split::test);
        SweepRow row{l, report.accuracy_at(3), report.accuracy_at(5), report.accuracy_at(7),
                     model->parameters().scalar_count(), trained.log.size()};
        if (on_row) on_row(row);
        rows.push_back(row);
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
    auto os = open_out(path);
    os << "cells,top3,top5,top7,parameters,epochs\n";
    for (const auto& r : rows)
        os << r.cells << ',' << r.top3 << ',' << r.top5 << ',' << r.top7 << ',' << r.parameters << ',' << r.epochs << '\n';
}

std::vector<std::filesystem::path> export_attention_maps(const Model& model, const Dataset& data,
                                                         const std::vector<EncodedRecord>& encoded,
                                                         const std::vector<std::size_t>& sample_ids,
                                                         const std::filesystem::path& dir) {
    if (model.config().variant != Variant::ican) throw std::invalid_argument("attention export needs the ican variant");
    std::vector<std::string> names;
    for (const auto& a : model.schema().attributes) names.push_back(a.name);
    std::vector<std::filesystem::path> files;
    PrecisionGuard precision(model.config().precision);
    for (auto id : sample_ids) {
        if (id >= data.size()) throw std::out_of_range("sample " + std::to_string(id) + " is out of range");
        const auto out = model.forward(model.visual_input(data, id), encoded[id]);
        auto written = export_attention(*out.attention, id, names, dir);
        files.insert(files.end(), written.begin(), written.end());
    }
    return files;
}

}  // namespace ican
