#include "ican/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ican {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    unsigned long long x = 0;
    try {
        if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
        x = std::stoull(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw std::invalid_argument(key + ": '" + v + "' is not a non-negative integer");
    return static_cast<std::size_t>(x);
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double x = 0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw std::invalid_argument(key + ": '" + v + "' is not a number");
    return x;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw std::invalid_argument(key + ": '" + v + "' is not a boolean");
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

struct Field {
    std::string help;
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define ICAN_SIZE_FIELD(name, member, help)                                                              \
    {                                                                                                    \
        name, {                                                                                          \
            help, [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_size(k, v); }, \
                [](const RunConfig& c) { return fmt(static_cast<std::size_t>(c.member)); }               \
        }                                                                                                \
    }
#define ICAN_DOUBLE_FIELD(name, member, help)                                                              \
    {                                                                                                      \
        name, {                                                                                            \
            help, [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_double(k, v); }, \
                [](const RunConfig& c) { return fmt(static_cast<double>(c.member)); }                      \
        }                                                                                                  \
    }
#define ICAN_BOOL_FIELD(name, member, help)                                                              \
    {                                                                                                    \
        name, {                                                                                          \
            help, [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_bool(k, v); }, \
                [](const RunConfig& c) { return fmt(static_cast<bool>(c.member)); }                      \
        }                                                                                                \
    }

// Ordered so that to_text() output is stable.
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"variant",
         {"model: visual-alone, attributes-alone, concat, add, product, mfb, block, ican",
          [](RunConfig& c, const std::string&, const std::string& v) { c.variant = parse_variant(v); },
          [](const RunConfig& c) { return std::string(to_string(c.variant)); }}},
        ICAN_SIZE_FIELD("cells", model.cells, "number of co-attention cells L"),
        ICAN_SIZE_FIELD("d_v", model.d_v, "visual channels"),
        ICAN_SIZE_FIELD("positions", model.positions, "visual positions D"),
        ICAN_SIZE_FIELD("d_a", model.d_a, "attribute embedding width"),
        ICAN_SIZE_FIELD("mfb_k", model.mfb_k, "MFB pooling window k"),
        ICAN_SIZE_FIELD("o_attn", model.o_attn, "MFB output width inside attention heads"),
        ICAN_SIZE_FIELD("attn_hidden", model.attn_hidden, "hidden width of the attention transform"),
        ICAN_SIZE_FIELD("o_pred", model.o_pred, "predictive vector width (fusion output)"),
        ICAN_SIZE_FIELD("block_l", model.block_l, "BLOCK core extent L"),
        ICAN_SIZE_FIELD("block_m", model.block_m, "BLOCK core extent M"),
        ICAN_SIZE_FIELD("block_n", model.block_n, "BLOCK core extent N"),
        ICAN_SIZE_FIELD("block_r", model.block_r, "BLOCK rank R"),
        ICAN_SIZE_FIELD("heads", heads, "ensemble classifiers N_c"),
        ICAN_SIZE_FIELD("bins", bins, "coarse bins per classifier"),
        ICAN_DOUBLE_FIELD("band", band, "shifting price band b (dollars)"),
        {"visual",
         {"visual source: stored (feature maps) or toy (conv encoder over images)",
          [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "stored") c.visual = VisualSource::stored;
              else if (v == "toy") c.visual = VisualSource::toy;
              else throw std::invalid_argument(k + ": expected stored or toy, got '" + v + "'");
          },
          [](const RunConfig& c) { return std::string(c.visual == VisualSource::toy ? "toy" : "stored"); }}},
        {"toy_channels",
         {"toy encoder output channels per stage, comma separated",
          [](RunConfig& c, const std::string& k, const std::string& v) {
              std::vector<std::size_t> out;
              std::istringstream is(v);
              std::string part;
              while (std::getline(is, part, ',')) out.push_back(to_size(k, trim(part)));
              if (out.empty()) throw std::invalid_argument(k + ": needs at least one stage");
              c.toy_channels = out;
          },
          [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.toy_channels.size(); ++i) s += (i ? "," : "") + std::to_string(c.toy_channels[i]);
              return s;
          }}},
        ICAN_SIZE_FIELD("toy_kernel", toy_kernel, "toy encoder kernel size"),
        ICAN_DOUBLE_FIELD("learning_rate", learning_rate, "momentum SGD learning rate"),
        ICAN_DOUBLE_FIELD("momentum", momentum, "momentum coefficient"),
        ICAN_SIZE_FIELD("batch_size", batch_size, "mini-batch size"),
        ICAN_SIZE_FIELD("max_epochs", max_epochs, "maximum training epochs"),
        ICAN_SIZE_FIELD("patience", patience, "epochs without validation top-3 gain before stopping"),
        {"seed",
         {"random seed (required for generate and train)",
          [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_size(k, v); },
          [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string(); }}},
        {"precision",
         {"f64 or f32",
          [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "f64") c.precision = Precision::f64;
              else if (v == "f32") c.precision = Precision::f32;
              else throw std::invalid_argument(k + ": expected f64 or f32, got '" + v + "'");
          },
          [](const RunConfig& c) { return std::string(c.precision == Precision::f32 ? "f32" : "f64"); }}},
        {"data_dir",
         {"dataset directory", [](RunConfig& c, const std::string&, const std::string& v) { c.data_dir = v; },
          [](const RunConfig& c) { return c.data_dir; }}},
        {"out_dir",
         {"output directory", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
          [](const RunConfig& c) { return c.out_dir; }}},
        ICAN_SIZE_FIELD("samples", synthetic.samples, "synthetic: number of samples"),
        ICAN_BOOL_FIELD("unknown_slot", synthetic.unknown_slot, "synthetic: add an unknown category per attribute"),
        ICAN_DOUBLE_FIELD("missing_rate", synthetic.missing_rate, "synthetic: fraction of missing continuous cells"),
        ICAN_BOOL_FIELD("images", synthetic.images, "synthetic: emit images instead of feature maps"),
        ICAN_SIZE_FIELD("image_channels", synthetic.image_channels, "synthetic: image channels"),
        ICAN_SIZE_FIELD("image_side", synthetic.image_side, "synthetic: image side length"),
        ICAN_SIZE_FIELD("decoys", synthetic.decoys, "synthetic: decoy patches per sample"),
        ICAN_DOUBLE_FIELD("patch_amplitude", synthetic.patch_amplitude, "synthetic: patch amplitude"),
        ICAN_DOUBLE_FIELD("feature_noise", synthetic.feature_noise, "synthetic: background noise"),
        ICAN_DOUBLE_FIELD("price_base", synthetic.rule.base, "synthetic: base price"),
        ICAN_DOUBLE_FIELD("beta_weight", synthetic.rule.beta_weight, "synthetic: weight coefficient"),
        ICAN_DOUBLE_FIELD("beta_center", synthetic.rule.beta_center, "synthetic: center stone coefficient"),
        ICAN_DOUBLE_FIELD("beta_visual", synthetic.rule.beta_visual, "synthetic: visual latent coefficient"),
        ICAN_DOUBLE_FIELD("beta_interaction", synthetic.rule.beta_interaction, "synthetic: weight x visual coefficient"),
        ICAN_DOUBLE_FIELD("price_noise", synthetic.rule.noise, "synthetic: price noise standard deviation"),
        ICAN_DOUBLE_FIELD("train_fraction", synthetic.train_fraction, "synthetic: train split fraction"),
        ICAN_DOUBLE_FIELD("validation_fraction", synthetic.validation_fraction, "synthetic: validation split fraction"),
    };
    return table;
}

#undef ICAN_SIZE_FIELD
#undef ICAN_DOUBLE_FIELD
#undef ICAN_BOOL_FIELD

const Field& field(const std::string& key) {
    for (const auto& [name, f] : fields())
        if (name == key) return f;
    throw std::invalid_argument("unknown config key '" + key + "'");
}

void apply_preset(RunConfig& c, const std::string& name) {
    if (name == "desk") {
        const RunConfig fresh;
        c.model = fresh.model;
        c.heads = fresh.heads;
        c.bins = fresh.bins;
        c.band = fresh.band;
    } else if (name == "full") {
        c.model.d_v = 2048;
        c.model.positions = 196;
        c.model.d_a = 200;
        c.model.mfb_k = 5;
        c.model.o_attn = 200;
        c.model.attn_hidden = 128;
        c.model.o_pred = 2048;
        c.model.block_l = c.model.block_m = c.model.block_n = 32;
        c.model.block_r = 100;
        c.heads = 20;
        c.bins = 7;
        c.band = 180.0;
    } else {
        throw std::invalid_argument("unknown preset '" + name + "' (expected desk or full)");
    }
}

}  // namespace

const char* to_string(Variant v) {
    switch (v) {
        case Variant::visual_alone: return "visual-alone";
        case Variant::attributes_alone: return "attributes-alone";
        case Variant::concat: return "concat";
        case Variant::add: return "add";
        case Variant::product: return "product";
        case Variant::mfb: return "mfb";
        case Variant::block: return "block";
        case Variant::ican: return "ican";
    }
    return "?";
}

Variant parse_variant(const std::string& s) {
    for (auto v : all_variants())
        if (s == to_string(v)) return v;
    throw std::invalid_argument("unknown variant '" + s + "'");
}

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v{Variant::visual_alone, Variant::attributes_alone, Variant::concat,
                                        Variant::add,          Variant::product,          Variant::mfb,
                                        Variant::block,        Variant::ican};
    return v;
}

const std::vector<RunConfig::Key>& RunConfig::keys() {
    static const std::vector<Key> k = [] {
        std::vector<Key> out{{"preset", "desk or full dimension preset"}};
        for (const auto& [name, f] : fields()) out.push_back({name, f.help});
        return out;
    }();
    return k;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "preset") {
        apply_preset(*this, value);
        return;
    }
    field(key).set(*this, key, value);
}

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

void RunConfig::apply_text(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
        }
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    apply_text(os.str());
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig c;
    c.apply_text(text);
    return c;
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    for (const auto& [name, f] : fields()) {
        const auto v = f.get(*this);
        if (!v.empty()) os << name << '=' << v << '\n';
    }
    return os.str();
}

SyntheticSpec RunConfig::synthetic_spec() const {
    SyntheticSpec s = synthetic;
    s.d_v = model.d_v;
    s.positions = model.positions;
    return s;
}

std::uint64_t RunConfig::require_seed() const {
    if (!seed) throw std::invalid_argument("a seed is required (set seed=<n> or --seed)");
    return *seed;
}

void RunConfig::validate() const {
    model.validate();
    if (heads == 0) throw std::invalid_argument("heads must be >= 1");
    if (bins < 2) throw std::invalid_argument("bins must be >= 2");
    if (!(band > 0.0)) throw std::invalid_argument("band must be positive");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
    if (toy_kernel == 0) throw std::invalid_argument("toy_kernel must be >= 1");
}

}  // namespace ican
