#include "mixedq/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <limits>

namespace mixedq {

namespace {

void put_u32_le(std::ostream &os, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

uint32_t get_u32_le(std::istream &is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char *>(b), 4);
    if (!is) throw FileParseError("tensor file truncated");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

} // namespace

void write_tensor(std::ostream &os, const Tensor &t) {
    os.write(kTensorMagic, 4);
    os.put(static_cast<char>(kTensorFormatVersion));
    os.put(static_cast<char>(t.rank()));
    for (int64_t d : t.shape()) put_u32_le(os, static_cast<uint32_t>(d));
    for (int64_t i = 0; i < t.numel(); ++i) {
        const float f = static_cast<float>(t[i]);
        uint32_t bits;
        std::memcpy(&bits, &f, sizeof(bits));
        put_u32_le(os, bits);
    }
    if (!os) throw IoError("failed writing tensor stream");
}

Tensor read_tensor(std::istream &is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kTensorMagic, 4) != 0)
        throw FileParseError("tensor file: bad magic");
    const int version = is.get();
    if (version != kTensorFormatVersion) throw FileParseError("tensor file: unsupported version");
    const int rank = is.get();
    if (rank <= 0 || rank > 8) throw FileParseError("tensor file: bad rank");
    Shape shape(static_cast<size_t>(rank));
    for (auto &d : shape) {
        d = static_cast<int64_t>(get_u32_le(is));
        if (d <= 0) throw FileParseError("tensor file: bad dimension");
    }
    const int64_t n = shape_numel(shape);
    std::vector<double> data(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const uint32_t bits = get_u32_le(is);
        float f;
        std::memcpy(&f, &bits, sizeof(f));
        data[static_cast<size_t>(i)] = static_cast<double>(f);
    }
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string &path, const Tensor &t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_tensor(os, t);
}

Tensor load_tensor(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return read_tensor(is);
}

} // namespace mixedq
