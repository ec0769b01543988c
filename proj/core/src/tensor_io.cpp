#include "advfield/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <ostream>

namespace advfield {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'V', 'F'};
constexpr std::uint32_t kMaxRank = 8;

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[i]} << (8 * i);
    return true;
}

bool get_u64(std::istream& in, std::uint64_t& v) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
    return true;
}

} // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
    out.write(kMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_u64(out, e);
    for (double v : t.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    if (!out) throw IoError("write_tensor: stream failure");
}

Tensor read_tensor(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("read_tensor: corrupt header (bad magic)");
    }
    std::uint32_t rank;
    if (!get_u32(in, rank) || rank > kMaxRank) {
        throw IoError("read_tensor: corrupt header (bad rank)");
    }
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        std::uint64_t e;
        if (!get_u64(in, e)) throw IoError("read_tensor: corrupt header (truncated extents)");
        if (e > (std::uint64_t{1} << 32)) throw IoError("read_tensor: corrupt header (extent overflow)");
        shape[i] = static_cast<std::size_t>(e);
        numel *= shape[i];
    }
    std::vector<double> data(numel);
    for (std::size_t i = 0; i < numel; ++i) {
        std::uint64_t bits;
        if (!get_u64(in, bits)) throw IoError("read_tensor: truncated payload");
        data[i] = std::bit_cast<double>(bits);
    }
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_tensor: cannot open " + path.string());
    write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_tensor: cannot open " + path.string());
    return read_tensor(in);
}

void save_pgm(const std::filesystem::path& path, const Tensor& image,
              double lo, double hi) {
    if (image.rank() != 2) {
        throw ShapeError("save_pgm: expected rank-2 image, got " + shape_str(image.shape()));
    }
    const std::size_t h = image.extent(0), w = image.extent(1);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_pgm: cannot open " + path.string());
    out << "P5\n" << w << " " << h << "\n255\n";
    const double range = hi > lo ? hi - lo : 1.0;
    for (std::size_t i = 0; i < image.numel(); ++i) {
        double v = (image[i] - lo) / range;
        v = std::clamp(v, 0.0, 1.0);
        out.put(static_cast<char>(static_cast<int>(v * 255.0 + 0.5)));
    }
    if (!out) throw IoError("save_pgm: stream failure");
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end) {
        throw ConfigError("parse_double: bad number '" + s + "'");
    }
    return v;
}

} // namespace advfield
