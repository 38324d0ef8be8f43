#include "ican/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ican {

namespace {

constexpr char kMagic[4] = {'I', 'C', 'K', 'P'};

std::uint64_t fnv1a(const unsigned char* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Writer {
public:
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void str(const std::string& s) {
        u64(s.size());
        out.insert(out.end(), s.begin(), s.end());
    }
    void arrays(const std::vector<NamedArray>& a) {
        u64(a.size());
        for (const auto& x : a) {
            str(x.name);
            u64(x.shape.size());
            for (auto d : x.shape) u64(d);
            u64(x.values.size());
            for (double v : x.values) f64(v);
        }
    }
    std::vector<unsigned char> out;
};

class Reader {
public:
    Reader(const unsigned char* data, std::size_t n) : p_(data), end_(data + n) {}
    void need(std::size_t n, const char* what) {
        if (static_cast<std::size_t>(end_ - p_) < n) throw std::runtime_error(std::string("checkpoint truncated reading ") + what);
    }
    std::uint64_t u64(const char* what = "integer") {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p_[i]) << (8 * i);
        p_ += 8;
        return v;
    }
    double f64(const char* what = "number") {
        const auto bits = u64(what);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(const char* what = "string") {
        const auto n = u64(what);
        need(n, what);
        std::string s(reinterpret_cast<const char*>(p_), n);
        p_ += n;
        return s;
    }
    std::vector<NamedArray> arrays() {
        std::vector<NamedArray> a(u64("array count"));
        for (auto& x : a) {
            x.name = str("array name");
            x.shape.resize(u64("rank"));
            for (auto& d : x.shape) d = u64("extent");
            const auto n = u64("value count");
            need(n * 8, "array values");
            x.values.resize(n);
            for (auto& v : x.values) v = f64();
            if (shape_numel(x.shape) != n) throw std::runtime_error("checkpoint array '" + x.name + "' has inconsistent shape");
        }
        return a;
    }
    bool done() const { return p_ == end_; }

private:
    const unsigned char* p_;
    const unsigned char* end_;
};

}  // namespace

std::string EpochRecord::to_line() const {
    std::ostringstream os;
    os.precision(17);
    os << "epoch=" << epoch << " loss=" << train_loss << " val_top3=" << top3 << " val_top5=" << top5
       << " val_top7=" << top7 << " best=" << (improved ? 1 : 0);
    return os.str();
}

std::vector<unsigned char> Checkpoint::serialize() const {
    Writer w;
    w.out.insert(w.out.end(), kMagic, kMagic + 4);
    w.u64(kCheckpointVersion);
    w.str(config);
    w.str(schema);
    w.str(zones);
    w.u64(visual_channels);
    w.u64(stats.columns.size());
    for (const auto& c : stats.columns) {
        w.f64(c.raw_mean);
        w.f64(c.log_mean);
        w.f64(c.log_std);
    }
    w.u64(epoch);
    w.f64(best_top3);
    w.u64(best_epoch);
    w.u64(since_best);
    w.u64(log.size());
    for (const auto& r : log) {
        w.u64(r.epoch);
        w.f64(r.train_loss);
        w.f64(r.top3);
        w.f64(r.top5);
        w.f64(r.top7);
        w.u64(r.improved ? 1 : 0);
    }
    w.arrays(parameters);
    w.arrays(velocity);
    w.arrays(best_parameters);
    w.u64(fnv1a(w.out.data(), w.out.size()));
    return std::move(w.out);
}

Checkpoint Checkpoint::deserialize(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 4 + 8 + 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw std::runtime_error("not a checkpoint (bad magic)");
    }
    Reader r(bytes.data() + 4, bytes.size() - 4);
    const auto version = r.u64("version");
    if (version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
    }
    Reader tail(bytes.data() + bytes.size() - 8, 8);
    if (tail.u64() != fnv1a(bytes.data(), bytes.size() - 8)) {
        throw std::runtime_error("checkpoint is corrupt or truncated (checksum mismatch)");
    }
    Checkpoint c;
    c.config = r.str("config");
    c.schema = r.str("schema");
    c.zones = r.str("zones");
    c.visual_channels = r.u64();
    c.stats.columns.resize(r.u64("stats"));
    for (auto& col : c.stats.columns) {
        col.raw_mean = r.f64();
        col.log_mean = r.f64();
        col.log_std = r.f64();
    }
    c.epoch = r.u64();
    c.best_top3 = r.f64();
    c.best_epoch = r.u64();
    c.since_best = r.u64();
    c.log.resize(r.u64("log"));
    for (auto& e : c.log) {
        e.epoch = r.u64();
        e.train_loss = r.f64();
        e.top3 = r.f64();
        e.top5 = r.f64();
        e.top7 = r.f64();
        e.improved = r.u64() != 0;
    }
    c.parameters = r.arrays();
    c.velocity = r.arrays();
    c.best_parameters = r.arrays();
    r.u64("checksum");
    if (!r.done()) throw std::runtime_error("checkpoint has trailing bytes");
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = ckpt.serialize();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write checkpoint " + tmp);
        os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw std::runtime_error("failed writing checkpoint " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    try {
        return Checkpoint::deserialize(bytes);
    } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

}  // namespace ican
