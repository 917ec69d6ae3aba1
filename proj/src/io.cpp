#include "pme/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "pme/kg.hpp"

namespace pme {

namespace {

constexpr char kMagic[8] = {'P', 'M', 'E', 'C', 'K', 'P', 'T', '\0'};
constexpr char kKgMagic[8] = {'P', 'M', 'E', 'K', 'G', 'C', 'K', '\0'};
constexpr std::uint32_t kVersion = 1;

void write_exact(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot write: " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw io_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw io_error("rename failed: " + path);
}

struct Writer {
    std::string buf;
    void raw(const void* p, std::size_t n) { buf.append(static_cast<const char*>(p), n); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void doubles(const std::vector<double>& v) { raw(v.data(), v.size() * sizeof(double)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void matrix(const ad::Matrix& m) {
        u32(static_cast<std::uint32_t>(m.rows));
        u32(static_cast<std::uint32_t>(m.cols));
        doubles(m.data);
    }
};

struct Reader {
    std::string buf;
    std::size_t pos = 0;
    explicit Reader(std::string b) : buf(std::move(b)) {}
    void raw(void* p, std::size_t n) {
        if (pos + n > buf.size()) throw io_error("checkpoint truncated");
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        raw(&v, sizeof v);
        return v;
    }
    std::vector<double> doubles(std::size_t n) {
        std::vector<double> v(n);
        raw(v.data(), n * sizeof(double));
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        if (n > (1u << 20)) throw io_error("checkpoint string too large");
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    ad::Matrix matrix() {
        const int r = static_cast<int>(u32()), c = static_cast<int>(u32());
        if (r < 0 || c < 0 || static_cast<long long>(r) * c > (1ll << 28)) throw io_error("checkpoint matrix too large");
        ad::Matrix m(r, c);
        m.data = doubles(static_cast<std::size_t>(r) * c);
        return m;
    }
};

}  // namespace

void atomic_write_text(const std::string& path, const std::string& content) { write_exact(path, content); }
void atomic_write_bytes(const std::string& path, const std::string& bytes) { write_exact(path, bytes); }

std::uint64_t fnv1a(std::uint64_t seed, const void* data, std::size_t len) {
    std::uint64_t h = seed ? seed : 1469598103934665603ull;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t fnv1a(std::uint64_t seed, const std::string& s) { return fnv1a(seed, s.data(), s.size()); }

void save_checkpoint(const std::string& path, const Signature& sig, const PointTable& points,
                     const GatingParams* gating, std::uint64_t config_hash) {
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.u32(kVersion);
    w.u64(config_hash);
    w.str(sig.to_string());
    w.f64(sig.scale);
    w.u32(static_cast<std::uint32_t>(sig.weights.size()));
    w.doubles(sig.weights);
    w.u32(static_cast<std::uint32_t>(points.n));
    w.u32(static_cast<std::uint32_t>(points.dim));
    w.doubles(points.data);
    w.u32(gating ? 1 : 0);
    if (gating) {
        w.u32(static_cast<std::uint32_t>(gating->heads));
        w.u32(static_cast<std::uint32_t>(gating->widths.size()));
        for (int v : gating->widths) w.u32(static_cast<std::uint32_t>(v));
        for (const auto& m : gating->w_assign) w.matrix(m);
        for (const auto& m : gating->w_embed) w.matrix(m);
        w.matrix(gating->attn);
    }
    atomic_write_bytes(path, w.buf);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(std::move(bytes));

    char magic[8];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw io_error("not a checkpoint file: " + path);
    Checkpoint ck;
    ck.version = r.u32();
    if (ck.version != kVersion)
        throw io_error("checkpoint version " + std::to_string(ck.version) + " unsupported (expected " +
                       std::to_string(kVersion) + ")");
    ck.config_hash = r.u64();
    ck.sig = parse_signature(r.str());
    ck.sig.scale = r.f64();
    const std::uint32_t nw = r.u32();
    if (nw != ck.sig.weights.size()) throw io_error("checkpoint weight count mismatch");
    ck.sig.weights = r.doubles(nw);
    const std::uint32_t n = r.u32(), dim = r.u32();
    if (static_cast<long long>(n) * dim > (1ll << 28)) throw io_error("checkpoint point table too large");
    ck.points = PointTable(static_cast<int>(n), static_cast<int>(dim));
    ck.points.data = r.doubles(static_cast<std::size_t>(n) * dim);
    if (r.u32()) {
        GatingParams gp;
        gp.heads = static_cast<int>(r.u32());
        const std::uint32_t levels = r.u32();
        if (levels > 64) throw io_error("checkpoint gating level count implausible");
        for (std::uint32_t l = 0; l < levels; ++l) gp.widths.push_back(static_cast<int>(r.u32()));
        for (std::uint32_t l = 0; l < levels; ++l) gp.w_assign.push_back(r.matrix());
        for (std::uint32_t l = 0; l < levels; ++l) gp.w_embed.push_back(r.matrix());
        gp.attn = r.matrix();
        ck.gating = std::move(gp);
    }
    if (r.pos != r.buf.size()) throw io_error("checkpoint has trailing bytes: " + path);
    return ck;
}

void save_kg_checkpoint(const std::string& path, const KgParams& params, std::uint64_t config_hash) {
    Writer w;
    w.raw(kKgMagic, sizeof kKgMagic);
    w.u32(kVersion);
    w.u64(config_hash);
    w.str(params.sig.to_string());
    w.f64(params.sig.scale);
    w.u32(static_cast<std::uint32_t>(params.sig.weights.size()));
    w.doubles(params.sig.weights);
    w.u32(static_cast<std::uint32_t>(params.entities.n));
    w.u32(static_cast<std::uint32_t>(params.entities.dim));
    w.doubles(params.entities.data);
    w.u32(static_cast<std::uint32_t>(params.relation_count));
    w.doubles(params.alpha);
    w.doubles(params.beta);
    w.doubles(params.gamma);
    w.doubles(params.offset);
    atomic_write_bytes(path, w.buf);
}

KgCheckpoint load_kg_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open kg checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(std::move(bytes));
    char magic[8];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, kKgMagic, sizeof kKgMagic) != 0) throw io_error("not a kg checkpoint file: " + path);
    KgCheckpoint ck;
    ck.version = r.u32();
    if (ck.version != kVersion) throw io_error("kg checkpoint version unsupported");
    ck.config_hash = r.u64();
    Signature sig = parse_signature(r.str());
    sig.scale = r.f64();
    const std::uint32_t nw = r.u32();
    if (nw != sig.weights.size()) throw io_error("kg checkpoint weight count mismatch");
    sig.weights = r.doubles(nw);
    const std::uint32_t n = r.u32(), dim = r.u32();
    if (static_cast<long long>(n) * dim > (1ll << 28)) throw io_error("kg checkpoint too large");
    ck.params.set_signature(std::move(sig));
    ck.params.entities = PointTable(static_cast<int>(n), static_cast<int>(dim));
    ck.params.entities.data = r.doubles(static_cast<std::size_t>(n) * dim);
    ck.params.relation_count = static_cast<int>(r.u32());
    const std::size_t rel = static_cast<std::size_t>(ck.params.relation_count);
    ck.params.alpha = r.doubles(rel * ck.params.sig.total_intrinsic_dim);
    ck.params.beta = r.doubles(rel * ck.params.sig.total_intrinsic_dim);
    ck.params.gamma = r.doubles(rel * ck.params.rot_total);
    ck.params.offset = r.doubles(rel);
    if (r.pos != r.buf.size()) throw io_error("kg checkpoint has trailing bytes: " + path);
    return ck;
}

}  // namespace pme
