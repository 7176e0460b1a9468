#include "kan/model_io.hpp"

#include "kan/errors.hpp"
#include "kan/rng.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "model container assumes a little-endian host");

namespace kan {

namespace {

constexpr char kMagic[4] = {'K', 'A', 'N', 'M'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
    std::vector<std::uint8_t> bytes;

    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }
};

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void raw(void* p, std::size_t n) {
        if (pos + n > bytes.size())
            throw CorruptStreamError("model stream truncated at byte " + std::to_string(pos));
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    }
    std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
    std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
    double f64() { double v; raw(&v, 8); return v; }
};

} // namespace

std::vector<std::uint8_t> save_model(const KanNetwork& net) {
    if (net.widths.size() < 2 || net.layers.size() + 1 != net.widths.size())
        throw DimensionMismatchError("save_model: malformed network");

    Writer w;
    w.raw(kMagic, 4);
    w.u32(kVersion);

    w.u32(static_cast<std::uint32_t>(net.widths.size()));
    for (int width : net.widths) w.u32(static_cast<std::uint32_t>(width));

    const SplineGrid& grid = net.layers.front().grid;
    w.u32(static_cast<std::uint32_t>(grid.degree));
    w.u32(static_cast<std::uint32_t>(grid.num_intervals));
    w.f64(grid.lo);
    w.f64(grid.hi);

    w.u64(net.meta.seed);
    w.f64(net.meta.split_fraction);
    w.u64(net.meta.data_fingerprint);

    if (net.meta.standardizer) {
        const Standardizer& s = *net.meta.standardizer;
        w.u8(1);
        w.u32(static_cast<std::uint32_t>(s.mean.size()));
        for (double v : s.mean) w.f64(v);
        for (double v : s.stddev) w.f64(v);
        w.f64(s.squash_scale);
    } else {
        w.u8(0);
    }

    for (const KanLayer& layer : net.layers) {
        for (const EdgeActivation& e : layer.edges) {
            if (static_cast<int>(e.coeffs.size()) != layer.grid.basis_count())
                throw DimensionMismatchError("save_model: edge coefficient count mismatch");
            for (double c : e.coeffs) w.f64(c);
            w.f64(e.w_spline);
            w.f64(e.w_base);
        }
    }

    w.u64(fnv1a(w.bytes.data(), w.bytes.size()));
    return std::move(w.bytes);
}

KanNetwork load_model(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 + sizeof(std::uint64_t))
        throw CorruptStreamError("model stream too short");

    const std::size_t payload = bytes.size() - sizeof(std::uint64_t);
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + payload, sizeof stored);
    if (stored != fnv1a(bytes.data(), payload))
        throw CorruptStreamError("model stream checksum mismatch");

    Reader r{bytes};
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw CorruptStreamError("not a model stream (bad magic)");
    std::uint32_t version = r.u32();
    if (version != kVersion)
        throw VersionMismatchError("model version " + std::to_string(version) +
                                   " not supported (expected " + std::to_string(kVersion) + ")");

    KanNetwork net;
    std::uint32_t n_widths = r.u32();
    if (n_widths < 2 || n_widths > 64)
        throw DimensionMismatchError("load_model: implausible width count");
    net.widths.resize(n_widths);
    for (auto& width : net.widths) {
        width = static_cast<int>(r.u32());
        if (width < 1 || width > 1 << 20)
            throw DimensionMismatchError("load_model: implausible width");
    }

    int degree = static_cast<int>(r.u32());
    int intervals = static_cast<int>(r.u32());
    double lo = r.f64();
    double hi = r.f64();
    if (degree < 0 || intervals < 1 || !(lo < hi))
        throw DimensionMismatchError("load_model: invalid grid parameters");

    net.meta.seed = r.u64();
    net.meta.split_fraction = r.f64();
    net.meta.data_fingerprint = r.u64();

    if (r.u8() != 0) {
        Standardizer s;
        std::uint32_t n_features = r.u32();
        if (n_features < 1 || n_features > 1 << 16)
            throw DimensionMismatchError("load_model: implausible feature count");
        s.mean.resize(n_features);
        s.stddev.resize(n_features);
        for (auto& v : s.mean) v = r.f64();
        for (auto& v : s.stddev) v = r.f64();
        s.squash_scale = r.f64();
        net.meta.standardizer = std::move(s);
    }

    for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
        KanLayer layer;
        layer.in_dim = net.widths[l];
        layer.out_dim = net.widths[l + 1];
        layer.grid = make_grid(degree, intervals, lo, hi);
        layer.edges.resize(static_cast<std::size_t>(layer.in_dim) * layer.out_dim);
        const int nb = layer.grid.basis_count();
        for (auto& e : layer.edges) {
            e.coeffs.resize(nb);
            for (auto& c : e.coeffs) c = r.f64();
            e.w_spline = r.f64();
            e.w_base = r.f64();
        }
        net.layers.push_back(std::move(layer));
    }

    if (r.pos != payload)
        throw CorruptStreamError("model stream has trailing bytes");
    return net;
}

void write_file_atomic(const std::string& path, const void* data, std::size_t size) {
    namespace fs = std::filesystem;
    fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open for writing: " + tmp.string());
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw DataError("rename failed for " + target.string() + ": " + ec.message());
    }
}

void write_file_atomic(const std::string& path, const std::string& text) {
    write_file_atomic(path, text.data(), text.size());
}

void save_model_file(const KanNetwork& net, const std::string& path) {
    std::vector<std::uint8_t> bytes = save_model(net);
    write_file_atomic(path, bytes.data(), bytes.size());
}

KanNetwork load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelError("cannot open model file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return load_model(bytes);
}

} // namespace kan
