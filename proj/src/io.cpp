#include "polm/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace polm::io {

namespace {

using json = nlohmann::json;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i64(std::string& out, std::int64_t v) {
    const auto u = static_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_i64(out, static_cast<std::int64_t>(bits));
}

class Reader {
public:
    Reader(std::string bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::int64_t i64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return static_cast<std::int64_t>(v);
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        const std::uint64_t bits = static_cast<std::uint64_t>(i64());
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string raw(std::size_t n) {
        need(n);
        std::string out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size())
            throw std::runtime_error(name_ + ": truncated file, need " + std::to_string(pos_ + n) +
                                     " bytes but have " + std::to_string(bytes_.size()));
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::string bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Write-to-temp-then-rename keeps partially written files invisible.
void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(tmp + ": cannot open for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error(tmp + ": write failed");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error(path + ": rename failed");
}

}  // namespace

Raster read_pfr(const std::string& path) {
    Reader r(read_file(path), path);
    if (r.raw(4) != "PFR1") throw std::runtime_error(path + ": bad magic, expected PFR1");
    const std::uint32_t H = r.u32(), W = r.u32(), C = r.u32();
    const std::uint64_t count = static_cast<std::uint64_t>(C) * H * W;
    if (count > (std::uint64_t{1} << 32))
        throw std::runtime_error(path + ": dimension overflow");
    Raster raster(static_cast<int>(C), static_cast<int>(H), static_cast<int>(W));
    for (std::uint64_t i = 0; i < count; ++i) raster.data[i] = static_cast<double>(r.f32());
    const std::uint32_t trailer_len = r.u32();
    if (trailer_len > 0) {
        const std::string trailer = r.raw(trailer_len);
        const json meta = json::parse(trailer, nullptr, false);
        if (!meta.is_discarded() && meta.contains("labels"))
            raster.labels = meta["labels"].get<std::vector<std::string>>();
    }
    if (r.remaining() != 0) throw std::runtime_error(path + ": trailing bytes after trailer");
    return raster;
}

void write_pfr(const std::string& path, const Raster& raster) {
    std::string bytes;
    bytes.reserve(20 + raster.size() * 4);
    bytes += "PFR1";
    put_u32(bytes, static_cast<std::uint32_t>(raster.H));
    put_u32(bytes, static_cast<std::uint32_t>(raster.W));
    put_u32(bytes, static_cast<std::uint32_t>(raster.C));
    for (double v : raster.data) put_f32(bytes, static_cast<float>(v));
    json meta = json::object();
    if (!raster.labels.empty()) meta["labels"] = raster.labels;
    const std::string trailer = meta.dump();
    put_u32(bytes, static_cast<std::uint32_t>(trailer.size()));
    bytes += trailer;
    write_file_atomic(path, bytes);
}

namespace {

int pnm_token(std::istream& in, const std::string& path) {
    // Skips whitespace and '#' comment lines.
    while (true) {
        const int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v;
    if (!(in >> v)) throw std::runtime_error(path + ": malformed PNM header");
    return v;
}

}  // namespace

Raster read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open for reading");
    char m0 = 0, m1 = 0;
    in.get(m0).get(m1);
    if (m0 != 'P' || (m1 != '5' && m1 != '6'))
        throw std::runtime_error(path + ": unsupported format (only binary P5/P6)");
    const int channels = m1 == '6' ? 3 : 1;
    const int W = pnm_token(in, path);
    const int H = pnm_token(in, path);
    const int maxval = pnm_token(in, path);
    if (maxval <= 0 || maxval > 65535)
        throw std::runtime_error(path + ": unsupported maxval " + std::to_string(maxval));
    in.get();  // single whitespace after maxval

    const std::size_t n = static_cast<std::size_t>(W) * H * channels;
    const int bytes_per = maxval > 255 ? 2 : 1;
    std::vector<char> payload(n * bytes_per);
    in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (static_cast<std::size_t>(in.gcount()) != payload.size())
        throw std::runtime_error(path + ": truncated pixel payload");

    Raster raster(channels, H, W);
    // PNM payload is interleaved; the raster is channel-planar.
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < channels; ++c) {
                const std::size_t si = (static_cast<std::size_t>(y) * W + x) * channels + c;
                int v;
                if (bytes_per == 2) {
                    v = (static_cast<unsigned char>(payload[2 * si]) << 8) |
                        static_cast<unsigned char>(payload[2 * si + 1]);
                } else {
                    v = static_cast<unsigned char>(payload[si]);
                }
                raster.at(c, y, x) = static_cast<double>(v) / maxval;
            }
    return raster;
}

void write_pgm_preview(const std::string& path, const double* plane, int H, int W) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    const std::size_t n = static_cast<std::size_t>(H) * W;
    for (std::size_t i = 0; i < n; ++i) {
        lo = std::min(lo, plane[i]);
        hi = std::max(hi, plane[i]);
    }
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    std::string bytes = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    for (std::size_t i = 0; i < n; ++i)
        bytes.push_back(static_cast<char>(static_cast<int>((plane[i] - lo) * scale + 0.5)));
    write_file_atomic(path, bytes);
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_tensor(std::string& out, const ad::TensorPtr& t) {
    put_u32(out, static_cast<std::uint32_t>(t->shape.size()));
    for (int e : t->shape) put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : t->data) put_f64(out, v);
}

ad::TensorPtr get_tensor(Reader& r) {
    const std::uint32_t nd = r.u32();
    std::vector<int> shape(nd);
    std::size_t n = 1;
    for (auto& e : shape) {
        e = static_cast<int>(r.u32());
        n *= static_cast<std::size_t>(e);
    }
    std::vector<double> data(n);
    for (auto& v : data) v = r.f64();
    return ad::make_tensor(std::move(shape), std::move(data), true);
}

void put_doubles(std::string& out, const std::vector<double>& v) {
    put_i64(out, static_cast<std::int64_t>(v.size()));
    for (double x : v) put_f64(out, x);
}

std::vector<double> get_doubles(Reader& r) {
    const auto n = static_cast<std::size_t>(r.i64());
    std::vector<double> v(n);
    for (auto& x : v) x = r.f64();
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const net::Checkpoint& ckpt) {
    std::string bytes;
    bytes += "PMCK";
    put_u32(bytes, kCheckpointVersion);
    const auto& cfg = ckpt.net.cfg;
    put_u32(bytes, static_cast<std::uint32_t>(cfg.in_channels));
    put_u32(bytes, static_cast<std::uint32_t>(cfg.out_channels));
    put_u32(bytes, static_cast<std::uint32_t>(cfg.base_width));
    put_u32(bytes, static_cast<std::uint32_t>(cfg.depth));
    put_u32(bytes, static_cast<std::uint32_t>(cfg.kernel));
    put_f64(bytes, cfg.leaky_slope);
    put_u32(bytes, cfg.padding == ad::Padding::Reflect ? 1 : 0);
    put_doubles(bytes, ckpt.stats.mean);
    put_doubles(bytes, ckpt.stats.stddev);
    put_u32(bytes, static_cast<std::uint32_t>(ckpt.net.weights.size()));
    for (std::size_t i = 0; i < ckpt.net.weights.size(); ++i) {
        put_tensor(bytes, ckpt.net.weights[i]);
        put_tensor(bytes, ckpt.net.biases[i]);
    }
    put_f64(bytes, ckpt.hp.lr);
    put_f64(bytes, ckpt.hp.beta1);
    put_f64(bytes, ckpt.hp.beta2);
    put_f64(bytes, ckpt.hp.eps);
    put_f64(bytes, ckpt.hp.weight_decay);
    put_i64(bytes, ckpt.opt.step);
    put_u32(bytes, static_cast<std::uint32_t>(ckpt.opt.m.size()));
    for (std::size_t i = 0; i < ckpt.opt.m.size(); ++i) {
        put_doubles(bytes, ckpt.opt.m[i]);
        put_doubles(bytes, ckpt.opt.v[i]);
    }
    put_i64(bytes, ckpt.epoch);
    put_doubles(bytes, ckpt.loss_history);
    write_file_atomic(path, bytes);
}

net::Checkpoint load_checkpoint(const std::string& path) {
    Reader r(read_file(path), path);
    if (r.raw(4) != "PMCK") throw std::runtime_error(path + ": bad magic, expected PMCK");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw std::runtime_error(path + ": unsupported checkpoint version " +
                                 std::to_string(version));
    net::Checkpoint ckpt;
    auto& cfg = ckpt.net.cfg;
    cfg.in_channels = static_cast<int>(r.u32());
    cfg.out_channels = static_cast<int>(r.u32());
    cfg.base_width = static_cast<int>(r.u32());
    cfg.depth = static_cast<int>(r.u32());
    cfg.kernel = static_cast<int>(r.u32());
    cfg.leaky_slope = r.f64();
    cfg.padding = r.u32() == 1 ? ad::Padding::Reflect : ad::Padding::Zero;
    ckpt.stats.mean = get_doubles(r);
    ckpt.stats.stddev = get_doubles(r);
    const std::uint32_t layers = r.u32();
    for (std::uint32_t i = 0; i < layers; ++i) {
        ckpt.net.weights.push_back(get_tensor(r));
        ckpt.net.biases.push_back(get_tensor(r));
    }
    ckpt.hp.lr = r.f64();
    ckpt.hp.beta1 = r.f64();
    ckpt.hp.beta2 = r.f64();
    ckpt.hp.eps = r.f64();
    ckpt.hp.weight_decay = r.f64();
    ckpt.opt.step = r.i64();
    const std::uint32_t moments = r.u32();
    for (std::uint32_t i = 0; i < moments; ++i) {
        ckpt.opt.m.push_back(get_doubles(r));
        ckpt.opt.v.push_back(get_doubles(r));
    }
    ckpt.epoch = r.i64();
    ckpt.loss_history = get_doubles(r);
    if (r.remaining() != 0) throw std::runtime_error(path + ": trailing bytes");
    return ckpt;
}

}  // namespace polm::io
