#include "ican/encoders.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ican/ops.hpp"

namespace ican {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("feature store truncated reading " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

constexpr std::uint32_t kFeatureStoreVersion = 1;

}  // namespace

AttributeSchema AttributeSchema::ring_default(bool unknown_slot) {
    auto cat = [unknown_slot](std::string name, std::size_t n) {
        return AttributeDescriptor{std::move(name), AttributeKind::categorical, n, unknown_slot};
    };
    auto cont = [](std::string name) { return AttributeDescriptor{std::move(name), AttributeKind::continuous, 0, false}; };
    return AttributeSchema{{
        cont("size"),
        cont("weight"),
        cont("center_stone_size"),
        cont("side_stone_size"),
        cat("grading_report", 2),
        cat("identification_report", 2),
        cat("center_stone", 37),
        cat("side_stone", 37),
        cat("metal", 11),
        cat("degree_of_use", 4),
        cat("repair_notes", 6),
        cat("defect_notes", 6),
        cat("purchase_month", 12),
    }};
}

AttributeSchema AttributeSchema::parse(const std::string& text) {
    AttributeSchema schema;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        auto fields = split(line, ',');
        for (auto& f : fields) f = trim(f);
        AttributeDescriptor d;
        if (fields.size() < 2) throw std::invalid_argument("schema line " + std::to_string(lineno) + ": too few fields");
        d.name = fields[0];
        if (fields[1] == "continuous") {
            d.kind = AttributeKind::continuous;
        } else if (fields[1] == "categorical") {
            if (fields.size() < 3) {
                throw std::invalid_argument("schema line " + std::to_string(lineno) + ": missing category count");
            }
            d.kind = AttributeKind::categorical;
            d.categories = std::stoul(fields[2]);
            d.unknown_slot = fields.size() > 3 && fields[3] == "unknown";
        } else {
            throw std::invalid_argument("schema line " + std::to_string(lineno) + ": unknown kind '" + fields[1] + "'");
        }
        schema.attributes.push_back(std::move(d));
    }
    schema.validate();
    return schema;
}

std::string AttributeSchema::to_text() const {
    std::ostringstream os;
    for (const auto& a : attributes) {
        os << a.name << ',';
        if (a.kind == AttributeKind::continuous) {
            os << "continuous\n";
        } else {
            os << "categorical," << a.categories << (a.unknown_slot ? ",unknown" : "") << '\n';
        }
    }
    return os.str();
}

std::size_t AttributeSchema::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < attributes.size(); ++i) {
        if (attributes[i].name == name) return i;
    }
    throw std::out_of_range("schema has no attribute '" + name + "'");
}

void AttributeSchema::validate() const {
    if (attributes.empty()) throw std::invalid_argument("schema needs at least one attribute");
    for (std::size_t i = 0; i < attributes.size(); ++i) {
        const auto& a = attributes[i];
        if (a.name.empty()) throw std::invalid_argument("schema attribute " + std::to_string(i) + " has no name");
        if (a.kind == AttributeKind::categorical && a.categories < 2) {
            throw std::invalid_argument("categorical attribute '" + a.name + "' needs at least 2 categories");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (attributes[j].name == a.name) throw std::invalid_argument("duplicate attribute name '" + a.name + "'");
        }
    }
}

ContinuousStats ContinuousStats::fit(const std::vector<AttributeRecord>& train, const AttributeSchema& schema) {
    ContinuousStats stats;
    stats.columns.resize(schema.size());
    for (std::size_t t = 0; t < schema.size(); ++t) {
        if (schema.attributes[t].kind != AttributeKind::continuous) continue;
        double total = 0.0;
        std::size_t present = 0;
        for (const auto& r : train) {
            if (const auto* v = std::get_if<double>(&r.values.at(t))) {
                total += *v;
                ++present;
            }
        }
        auto& col = stats.columns[t];
        col.raw_mean = present ? total / static_cast<double>(present) : 0.0;
        if (train.empty()) continue;

        std::vector<double> logged;
        logged.reserve(train.size());
        for (const auto& r : train) {
            const auto* v = std::get_if<double>(&r.values[t]);
            const double raw = v ? *v : col.raw_mean;
            if (raw < 0.0) {
                throw std::invalid_argument("attribute '" + schema.attributes[t].name + "' has negative value " +
                                            std::to_string(raw));
            }
            logged.push_back(std::log1p(raw));
        }
        double mean = 0.0;
        for (double x : logged) mean += x;
        mean /= static_cast<double>(logged.size());
        double var = 0.0;
        for (double x : logged) var += (x - mean) * (x - mean);
        var /= static_cast<double>(logged.size());
        col.log_mean = mean;
        col.log_std = std::sqrt(var);
    }
    return stats;
}

double preprocess_continuous(std::optional<double> value, const ContinuousColumnStats& stats) {
    const double raw = value.value_or(stats.raw_mean);
    if (raw < 0.0) throw std::invalid_argument("continuous attribute value must be non-negative, got " + std::to_string(raw));
    return (std::log1p(raw) - stats.log_mean) / std::max(stats.log_std, kStdFloor);
}

Tensor one_hot(const AttributeDescriptor& attr, std::size_t category_id) {
    if (attr.kind != AttributeKind::categorical) {
        throw std::invalid_argument("one_hot: attribute '" + attr.name + "' is not categorical");
    }
    const std::size_t width = attr.one_hot_width();
    if (category_id >= width) {
        throw std::out_of_range("one_hot: category " + std::to_string(category_id) + " out of range for '" + attr.name +
                                "' with " + std::to_string(width) + " slots");
    }
    std::vector<double> v(width, 0.0);
    v[category_id] = 1.0;
    return Tensor::vector(std::move(v));
}

EncodedRecord encode_record(const AttributeRecord& record, const AttributeSchema& schema, const ContinuousStats& stats) {
    if (record.values.size() != schema.size()) {
        throw std::invalid_argument("record has " + std::to_string(record.values.size()) + " values, schema expects " +
                                    std::to_string(schema.size()));
    }
    EncodedRecord out;
    out.values.reserve(schema.size());
    for (std::size_t t = 0; t < schema.size(); ++t) {
        const auto& attr = schema.attributes[t];
        const auto& v = record.values[t];
        if (attr.kind == AttributeKind::continuous) {
            if (std::holds_alternative<std::size_t>(v)) {
                throw std::invalid_argument("attribute '" + attr.name + "' is continuous but got a category id");
            }
            const auto* d = std::get_if<double>(&v);
            out.values.emplace_back(preprocess_continuous(d ? std::optional<double>(*d) : std::nullopt, stats.columns.at(t)));
            continue;
        }
        if (std::holds_alternative<double>(v)) {
            throw std::invalid_argument("attribute '" + attr.name + "' is categorical but got a number");
        }
        const auto* id = std::get_if<std::size_t>(&v);
        if (id && *id < attr.categories) {
            out.values.emplace_back(*id);
        } else if (attr.unknown_slot) {
            out.values.emplace_back(attr.categories);
        } else if (id) {
            throw std::invalid_argument("attribute '" + attr.name + "': unknown category " + std::to_string(*id));
        } else {
            throw std::invalid_argument("attribute '" + attr.name + "': missing category and no unknown slot");
        }
    }
    return out;
}

AttributeEmbedding::AttributeEmbedding(ParameterStore& store, const std::string& prefix, const AttributeSchema& schema,
                                       std::size_t d_a, Rng& rng)
    : d_a_(d_a) {
    schema.validate();
    for (const auto& attr : schema.attributes) {
        Layers layer;
        const std::string base = prefix + "." + attr.name;
        std::size_t in = 1;
        if (attr.kind == AttributeKind::categorical) {
            layer.width = attr.one_hot_width();
            const std::size_t u = attr.hidden_width();
            layer.w1 = store.add_glorot(base + ".w1", {layer.width, u}, layer.width, u, rng);
            layer.b1 = store.add_zeros(base + ".b1", {u});
            in = u;
        }
        layer.w2 = store.add_glorot(base + ".w2", {in, d_a}, in, d_a, rng);
        layer.b2 = store.add_zeros(base + ".b2", {d_a});
        layers_.push_back(std::move(layer));
    }
}

Tensor AttributeEmbedding::embed(const EncodedRecord& record) const {
    if (record.values.size() != layers_.size()) {
        throw std::invalid_argument("embed: record has " + std::to_string(record.values.size()) +
                                    " attributes, embedding expects " + std::to_string(layers_.size()));
    }
    std::vector<Tensor> columns;
    columns.reserve(layers_.size());
    for (std::size_t t = 0; t < layers_.size(); ++t) {
        const auto& layer = layers_[t];
        Tensor first;
        if (layer.w1) {
            const auto* id = std::get_if<std::size_t>(&record.values[t]);
            if (!id || *id >= layer.width) throw std::invalid_argument("embed: bad category for slot " + std::to_string(t));
            // one-hot times w1 selects a row
            first = add(slice(*layer.w1, 0, *id, *id + 1), *layer.b1);
        } else {
            const auto* x = std::get_if<double>(&record.values[t]);
            if (!x) throw std::invalid_argument("embed: slot " + std::to_string(t) + " expects a continuous value");
            first = Tensor::matrix(1, 1, {*x});
        }
        columns.push_back(add(matmul(first, layer.w2), layer.b2));  // [1 x d_a]
    }
    return transpose(concat(columns, 0));
}

FeatureStore FeatureStore::read(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open feature store " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "FMAP", 4) != 0) {
        throw std::runtime_error(path.string() + " is not a feature store (bad magic)");
    }
    const auto version = get_u32(is, "version");
    if (version != kFeatureStoreVersion) {
        throw std::runtime_error("unsupported feature store version " + std::to_string(version));
    }
    FeatureStore store;
    const auto count = get_u32(is, "count");
    store.d_v = get_u32(is, "d_v");
    store.positions = get_u32(is, "D");
    const std::size_t each = static_cast<std::size_t>(store.d_v) * store.positions;
    store.samples.resize(count);
    for (auto& s : store.samples) {
        s.resize(each);
        std::vector<unsigned char> raw(each * 4);
        if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
            throw std::runtime_error("feature store " + path.string() + " is truncated");
        }
        for (std::size_t i = 0; i < each; ++i) {
            const std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * i]) |
                                       (static_cast<std::uint32_t>(raw[4 * i + 1]) << 8) |
                                       (static_cast<std::uint32_t>(raw[4 * i + 2]) << 16) |
                                       (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
            std::memcpy(&s[i], &bits, 4);
        }
    }
    return store;
}

void FeatureStore::write(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write feature store " + path.string());
    os.write("FMAP", 4);
    put_u32(os, kFeatureStoreVersion);
    put_u32(os, static_cast<std::uint32_t>(samples.size()));
    put_u32(os, d_v);
    put_u32(os, positions);
    const std::size_t each = static_cast<std::size_t>(d_v) * positions;
    for (const auto& s : samples) {
        if (s.size() != each) throw std::invalid_argument("feature store sample has wrong size");
        for (float f : s) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(os, bits);
        }
    }
    if (!os) throw std::runtime_error("failed writing feature store " + path.string());
}

StoredFeatureProvider::StoredFeatureProvider(const FeatureStore& store, std::size_t d_v, std::size_t positions)
    : store_(&store) {
    if (store.d_v != d_v || store.positions != positions) {
        throw std::invalid_argument("feature store holds [" + std::to_string(store.d_v) + " x " +
                                    std::to_string(store.positions) + "] maps, config expects [" + std::to_string(d_v) +
                                    " x " + std::to_string(positions) + "]");
    }
}

Tensor StoredFeatureProvider::provide(std::size_t sample_id) const {
    if (sample_id >= store_->count()) {
        throw std::out_of_range("feature store has no sample " + std::to_string(sample_id));
    }
    const auto& s = store_->samples[sample_id];
    return Tensor({store_->d_v, store_->positions}, std::vector<double>(s.begin(), s.end()));
}

ToyConvEncoder::ToyConvEncoder(ParameterStore& store, const std::string& prefix, std::vector<std::size_t> channels,
                               std::size_t kernel, Rng& rng)
    : channels_(std::move(channels)) {
    if (channels_.size() < 2) throw std::invalid_argument("toy encoder needs at least one stage");
    if (kernel == 0 || kernel > 3) throw std::invalid_argument("toy encoder kernel must be 1, 2 or 3");
    for (std::size_t s = 0; s + 1 < channels_.size(); ++s) {
        const std::size_t cin = channels_[s], cout = channels_[s + 1];
        const std::string base = prefix + ".stage" + std::to_string(s);
        weights_.push_back(store.add_glorot(base + ".w", {cout, cin, kernel, kernel}, cin * kernel * kernel,
                                            cout * kernel * kernel, rng));
        biases_.push_back(store.add_zeros(base + ".b", {cout}));
    }
}

std::size_t ToyConvEncoder::positions_for(std::size_t height, std::size_t width) const {
    const std::size_t stride = std::size_t{1} << stages();
    if (height % stride != 0 || width % stride != 0) {
        throw std::invalid_argument("image " + std::to_string(height) + "x" + std::to_string(width) +
                                    " not divisible by total stride " + std::to_string(stride));
    }
    return (height / stride) * (width / stride);
}

Tensor ToyConvEncoder::encode(const Tensor& image) const {
    if (image.dim() != 3 || image.extent(0) != channels_.front()) {
        throw std::invalid_argument("toy encoder expects [" + std::to_string(channels_.front()) + " x H x W], got " +
                                    shape_str(image.shape()));
    }
    const std::size_t positions = positions_for(image.extent(1), image.extent(2));
    Tensor h = image;
    for (std::size_t s = 0; s < stages(); ++s) h = relu(conv2d(h, weights_[s], biases_[s], 2));
    return reshape(h, {output_channels(), positions});
}

ToyEncoderProvider::ToyEncoderProvider(const FeatureStore& images, const ToyConvEncoder& encoder)
    : images_(&images), encoder_(&encoder) {
    side_ = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(images.positions))));
    if (side_ * side_ != images.positions) throw std::invalid_argument("image store records must be square");
    encoder.positions_for(side_, side_);
}

std::size_t ToyEncoderProvider::positions() const { return encoder_->positions_for(side_, side_); }

Tensor ToyEncoderProvider::provide(std::size_t sample_id) const {
    if (sample_id >= images_->count()) throw std::out_of_range("image store has no sample " + std::to_string(sample_id));
    const auto& s = images_->samples[sample_id];
    return encoder_->encode(Tensor({images_->d_v, side_, side_}, std::vector<double>(s.begin(), s.end())));
}

}  // namespace ican
