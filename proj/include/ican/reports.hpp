#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "ican/dataset.hpp"
#include "ican/model.hpp"
#include "ican/trainer.hpp"

namespace ican {

struct EvaluationReport {
    Split split = Split::test;
    std::vector<std::size_t> ks;
    std::vector<double> topk;  // aligned with ks
    std::vector<std::size_t> sample_ids;
    std::vector<std::size_t> labels;
    std::vector<PredictionResult> results;
    std::vector<std::vector<std::size_t>> confusion;  // [true][top-1]

    double accuracy_at(std::size_t k) const;
};

EvaluationReport evaluate(const Model& model, const Dataset& data, const std::vector<EncodedRecord>& encoded,
                          Split split, const std::vector<std::size_t>& ks = {3, 5, 7});

/// Writes topk.csv, confusion.csv and predictions.csv into `dir`.
void write_report(const EvaluationReport& report, const std::filesystem::path& dir);

struct SweepRow {
    std::size_t cells = 0;
    double top3 = 0.0, top5 = 0.0, top7 = 0.0;
    std::size_t parameters = 0;
    std::size_t epochs = 0;
};

/// Trains and evaluates the ican variant once per cell count L. Rows
/// report test top-k of the peak validation checkpoint.
std::vector<SweepRow> sweep_cells(const RunConfig& config, const Dataset& data, const std::vector<std::size_t>& cells,
                                  const std::function<void(const SweepRow&)>& on_row = {});

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

/// Writes attention CSVs (and PGMs when D is square) for the given samples
/// of an ICAN model. Returns the files written.
std::vector<std::filesystem::path> export_attention_maps(const Model& model, const Dataset& data,
                                                         const std::vector<EncodedRecord>& encoded,
                                                         const std::vector<std::size_t>& sample_ids,
                                                         const std::filesystem::path& dir);

}  // namespace ican
