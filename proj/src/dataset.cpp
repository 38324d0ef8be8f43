#include "ican/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ican {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

double parse_double(const std::string& s, const std::string& where) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty()) throw std::invalid_argument(where + ": '" + s + "' is not a number");
    return v;
}

}  // namespace

const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "validation" || s == "val") return Split::validation;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + s + "'");
}

std::vector<std::size_t> Dataset::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < splits.size(); ++i)
        if (splits[i] == s) out.push_back(i);
    return out;
}

void Dataset::validate() const {
    const std::size_t n = records.size();
    if (prices.size() != n || labels.size() != n || splits.size() != n) {
        throw std::invalid_argument("dataset columns are misaligned");
    }
    if (visual.count() != n) {
        throw std::invalid_argument("dataset has " + std::to_string(n) + " attribute rows but " +
                                    std::to_string(visual.count()) + " visual records");
    }
    if (!latent.empty() && latent.size() != n) throw std::invalid_argument("dataset latent column is misaligned");
}

Dataset load_dataset(const std::filesystem::path& attributes_csv, const std::filesystem::path& visual_store,
                     const AttributeSchema& schema, const PriceZoneTable& table, bool images) {
    schema.validate();
    Dataset data;
    data.schema = schema;
    data.images = images;
    data.visual = FeatureStore::read(visual_store);

    std::istringstream is(read_text(attributes_csv));
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument(attributes_csv.string() + " is empty");
    const auto header = split_csv(line);
    std::vector<long> column_of(schema.size(), -1);
    long price_col = -1, split_col = -1, latent_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "price") price_col = static_cast<long>(c);
        else if (header[c] == "split") split_col = static_cast<long>(c);
        else if (header[c] == "latent") latent_col = static_cast<long>(c);
        else column_of.at(schema.index_of(header[c])) = static_cast<long>(c);
    }
    if (price_col < 0) throw std::invalid_argument(attributes_csv.string() + ": no price column");
    for (std::size_t t = 0; t < schema.size(); ++t) {
        if (column_of[t] < 0) {
            throw std::invalid_argument(attributes_csv.string() + ": missing column '" + schema.attributes[t].name + "'");
        }
    }

    std::size_t row = 0;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        const std::string where = attributes_csv.string() + " row " + std::to_string(row);
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw std::invalid_argument(where + ": expected " + std::to_string(header.size()) + " cells, got " +
                                        std::to_string(cells.size()));
        }
        AttributeRecord rec;
        for (std::size_t t = 0; t < schema.size(); ++t) {
            const auto& attr = schema.attributes[t];
            const auto& cell = cells[static_cast<std::size_t>(column_of[t])];
            if (cell.empty()) {
                if (attr.kind == AttributeKind::categorical && !attr.unknown_slot) {
                    throw std::invalid_argument(where + ": missing category for '" + attr.name + "'");
                }
                rec.values.emplace_back(std::monostate{});
                continue;
            }
            const double v = parse_double(cell, where + " column '" + attr.name + "'");
            if (attr.kind == AttributeKind::continuous) {
                if (v < 0.0) throw std::invalid_argument(where + ": negative value for '" + attr.name + "'");
                rec.values.emplace_back(v);
                continue;
            }
            if (v < 0.0 || v != std::floor(v)) {
                throw std::invalid_argument(where + ": '" + cell + "' is not a category id for '" + attr.name + "'");
            }
            const auto id = static_cast<std::size_t>(v);
            if (id >= attr.categories && !attr.unknown_slot) {
                throw std::invalid_argument(where + ": unknown category " + cell + " for '" + attr.name + "'");
            }
            rec.values.emplace_back(id);
        }
        const double price = parse_double(cells[static_cast<std::size_t>(price_col)], where + " price");
        if (!(price > 0.0)) throw std::invalid_argument(where + ": price must be positive");
        data.records.push_back(std::move(rec));
        data.prices.push_back(price);
        data.labels.push_back(price_to_label(price, table));
        data.splits.push_back(split_col >= 0 ? parse_split(cells[static_cast<std::size_t>(split_col)]) : Split::train);
        if (latent_col >= 0) data.latent.push_back(parse_double(cells[static_cast<std::size_t>(latent_col)], where));
        ++row;
    }
    data.validate();
    return data;
}

void write_attributes_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.precision(17);
    for (const auto& a : data.schema.attributes) os << a.name << ',';
    os << "price,split";
    if (!data.latent.empty()) os << ",latent";
    os << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (const auto& v : data.records[i].values) {
            if (const auto* d = std::get_if<double>(&v)) os << *d;
            else if (const auto* c = std::get_if<std::size_t>(&v)) os << *c;
            os << ',';
        }
        os << data.prices[i] << ',' << to_string(data.splits[i]);
        if (!data.latent.empty()) os << ',' << data.latent[i];
        os << '\n';
    }
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

void assign_splits(Dataset& data, double train_fraction, double validation_fraction, std::uint64_t seed) {
    if (train_fraction <= 0.0 || validation_fraction < 0.0 || train_fraction + validation_fraction > 1.0) {
        throw std::invalid_argument("split fractions must be positive and sum to at most 1");
    }
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n = static_cast<double>(data.size());
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
    const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * n));
    data.splits.assign(data.size(), Split::test);
    for (std::size_t i = 0; i < order.size(); ++i) {
        data.splits[order[i]] = i < n_train ? Split::train : (i < n_train + n_val ? Split::validation : Split::test);
    }
}

ContinuousStats fit_stats(const Dataset& data) {
    std::vector<AttributeRecord> train;
    for (auto i : data.indices(Split::train)) train.push_back(data.records[i]);
    if (train.empty()) throw std::invalid_argument("dataset has no training samples");
    return ContinuousStats::fit(train, data.schema);
}

std::vector<EncodedRecord> encode_all(const Dataset& data, const ContinuousStats& stats) {
    std::vector<EncodedRecord> out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        try {
            out.push_back(encode_record(data.records[i], data.schema, stats));
        } catch (const std::exception& e) {
            throw std::invalid_argument("row " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

DataPaths DataPaths::in(const std::filesystem::path& dir) {
    return {dir / "attributes.csv", dir / "visual.fmap", dir / "schema.txt", dir / "zones.csv", dir / "meta.txt"};
}

void save_dataset(const Dataset& data, const PriceZoneTable& table, const std::filesystem::path& dir) {
    data.validate();
    std::filesystem::create_directories(dir);
    const auto p = DataPaths::in(dir);
    write_attributes_csv(data, p.attributes);
    data.visual.write(p.visual);
    write_text(p.schema, data.schema.to_text());
    write_text(p.zones, table.to_csv());
    write_text(p.meta, std::string("visual=") + (data.images ? "images" : "maps") + "\n");
}

Dataset load_dataset_dir(const std::filesystem::path& dir) {
    const auto p = DataPaths::in(dir);
    const auto schema = std::filesystem::exists(p.schema) ? AttributeSchema::parse(read_text(p.schema))
                                                          : AttributeSchema::ring_default();
    const auto table = std::filesystem::exists(p.zones) ? PriceZoneTable::load_csv(p.zones) : PriceZoneTable::standard();
    bool images = false;
    if (std::filesystem::exists(p.meta)) images = read_text(p.meta).find("visual=images") != std::string::npos;
    return load_dataset(p.attributes, p.visual, schema, table, images);
}

}  // namespace ican
