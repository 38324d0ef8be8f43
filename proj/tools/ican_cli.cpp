#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ican/checkpoint.hpp"
#include "ican/config.hpp"
#include "ican/dataset.hpp"
#include "ican/reports.hpp"
#include "ican/synthetic.hpp"
#include "ican/trainer.hpp"

namespace fs = std::filesystem;
using namespace ican;

namespace {

// Settings shared by every subcommand. Precedence, lowest first:
// defaults, --config file, --set pairs, per-key flags.
struct Settings {
    std::string config_file;
    std::vector<std::string> pairs;
    std::map<std::string, std::string> flags;

    void attach(CLI::App& app) {
        app.add_option("-c,--config", config_file, "key=value config file")->check(CLI::ExistingFile);
        app.add_option("--set", pairs, "override as key=value (repeatable)");
        for (const auto& key : RunConfig::keys()) {
            std::string names = "--" + key.name;
            auto dashed = key.name;
            std::replace(dashed.begin(), dashed.end(), '_', '-');
            if (dashed != key.name) names += ",--" + dashed;
            app.add_option_function<std::string>(
                   names, [this, name = key.name](const std::string& v) { flags[name] = v; }, key.help)
                ->group("Config keys");
        }
    }

    RunConfig resolve() const {
        RunConfig c;
        if (!config_file.empty()) c.apply_file(config_file);
        for (const auto& p : pairs) {
            const auto eq = p.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + p + "'");
            c.set(p.substr(0, eq), p.substr(eq + 1));
        }
        // Presets first so explicit keys win over them.
        if (auto it = flags.find("preset"); it != flags.end()) c.set(it->first, it->second);
        for (const auto& [k, v] : flags)
            if (k != "preset") c.set(k, v);
        c.validate();
        return c;
    }
};

Dataset load_data(const RunConfig& c) {
    if (c.data_dir.empty()) throw std::invalid_argument("data_dir is not set (use --data_dir or the config file)");
    return load_dataset_dir(c.data_dir);
}

fs::path default_checkpoint(const RunConfig& c, const std::string& given) {
    return given.empty() ? fs::path(c.out_dir) / "best.ckpt" : fs::path(given);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
}

void print_epoch(const EpochRecord& r) { std::cout << r.to_line() << std::endl; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multimodal resale price classification"};
    app.require_subcommand(1);

    Settings gen_s, train_s, eval_s, sweep_s, attn_s;

    auto* gen = app.add_subcommand("generate", "write a planted synthetic dataset");
    gen_s.attach(*gen);
    std::string gen_out;
    gen->add_option("-o,--output", gen_out, "output directory (defaults to data_dir)");

    auto* train = app.add_subcommand("train", "train one variant; writes metrics.log, last.ckpt, best.ckpt");
    train_s.attach(*train);
    std::string resume;
    std::size_t extra_epochs = 0;
    train->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);
    train->add_option("--extra-epochs", extra_epochs, "raise max_epochs of a resumed run by this many");

    auto* eval = app.add_subcommand("evaluate", "top-k, confusion matrix and ranked predictions");
    eval_s.attach(*eval);
    std::string eval_ckpt, eval_report, eval_split = "test";
    std::vector<std::size_t> ks{3, 5, 7};
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint (default out_dir/best.ckpt)");
    eval->add_option("--split", eval_split, "train, validation or test");
    eval->add_option("--k", ks, "k values")->delimiter(',');
    eval->add_option("--report", eval_report, "report directory (default out_dir/report)");

    auto* sweep = app.add_subcommand("sweep", "train and evaluate ican for each cell count");
    sweep_s.attach(*sweep);
    std::vector<std::size_t> cell_list{1, 2, 3, 4, 5};
    std::string sweep_out;
    sweep->add_option("--cells-list", cell_list, "cell counts")->delimiter(',');
    sweep->add_option("-o,--output", sweep_out, "CSV path (default out_dir/sweep.csv)");

    auto* attn = app.add_subcommand("export-attention", "dump per-cell attention weights");
    attn_s.attach(*attn);
    std::string attn_ckpt, attn_out, attn_split = "test";
    std::vector<std::size_t> samples;
    std::size_t count = 4;
    attn->add_option("--checkpoint", attn_ckpt, "checkpoint (default out_dir/best.ckpt)");
    attn->add_option("--ids", samples, "sample ids")->delimiter(',');
    attn->add_option("--split", attn_split, "split to draw samples from when --ids is absent");
    attn->add_option("--count", count, "number of samples when --ids is absent");
    attn->add_option("-o,--output", attn_out, "output directory (default out_dir/attention)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto c = gen_s.resolve();
            const fs::path dir = gen_out.empty() ? fs::path(c.data_dir.empty() ? "data" : c.data_dir) : fs::path(gen_out);
            const auto table = PriceZoneTable::standard();
            const auto data = generate_synthetic(c.synthetic_spec(), table, c.require_seed());
            save_dataset(data, table, dir);
            std::cout << "wrote " << data.size() << " samples (" << data.indices(Split::train).size() << " train, "
                      << data.indices(Split::validation).size() << " validation, " << data.indices(Split::test).size()
                      << " test) to " << dir.string() << '\n';
        } else if (train->parsed()) {
            TrainResult result;
            if (!resume.empty()) {
                // Paths default to the ones stored with the run.
                const auto ckpt = load_checkpoint(resume);
                auto c = RunConfig::from_text(ckpt.config);
                for (const char* key : {"data_dir", "out_dir"})
                    if (auto it = train_s.flags.find(key); it != train_s.flags.end()) c.set(key, it->second);
                result = resume_training(ckpt, load_data(c), {c.out_dir, print_epoch}, extra_epochs);
            } else {
                const auto c = train_s.resolve();
                const auto data = load_data(c);
                write_text(fs::path(c.out_dir) / "config.txt", c.to_text());
                result = train_model(c, data, {c.out_dir, print_epoch});
            }
            const auto& s = result.final_state;
            std::cout << "best epoch " << s.best_epoch << " val_top3=" << s.best_top3 << '\n';
        } else if (eval->parsed()) {
            const auto c = eval_s.resolve();
            const auto data = load_data(c);
            const auto ckpt = load_checkpoint(default_checkpoint(c, eval_ckpt));
            const auto model = model_from_checkpoint(ckpt);
            const auto report = evaluate(*model, data, encode_all(data, ckpt.stats), parse_split(eval_split), ks);
            const fs::path dir = eval_report.empty() ? fs::path(c.out_dir) / "report" : fs::path(eval_report);
            write_report(report, dir);
            for (std::size_t i = 0; i < ks.size(); ++i)
                std::cout << eval_split << " top-" << ks[i] << " " << report.topk[i] << '\n';
            std::cout << "report written to " << dir.string() << '\n';
        } else if (sweep->parsed()) {
            const auto c = sweep_s.resolve();
            const auto data = load_data(c);
            const fs::path path = sweep_out.empty() ? fs::path(c.out_dir) / "sweep.csv" : fs::path(sweep_out);
            const auto rows = sweep_cells(c, data, cell_list, [](const SweepRow& r) {
                std::cout << "cells=" << r.cells << " top3=" << r.top3 << " top5=" << r.top5 << " top7=" << r.top7
                          << " parameters=" << r.parameters << " epochs=" << r.epochs << std::endl;
            });
            write_sweep_csv(rows, path);
            std::cout << "sweep written to " << path.string() << '\n';
        } else if (attn->parsed()) {
            const auto c = attn_s.resolve();
            const auto data = load_data(c);
            const auto ckpt = load_checkpoint(default_checkpoint(c, attn_ckpt));
            const auto model = model_from_checkpoint(ckpt);
            if (samples.empty()) {
                const auto ids = data.indices(parse_split(attn_split));
                samples.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(count, ids.size())));
            }
            const fs::path dir = attn_out.empty() ? fs::path(c.out_dir) / "attention" : fs::path(attn_out);
            const auto files = export_attention_maps(*model, data, encode_all(data, ckpt.stats), samples, dir);
            std::cout << "wrote " << files.size() << " files to " << dir.string() << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
