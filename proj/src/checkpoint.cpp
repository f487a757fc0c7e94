#include "phrasedec/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "phrasedec/common.hpp"

namespace phrasedec {

namespace {

constexpr char kMagic[8] = {'P', 'H', 'R', 'D', 'E', 'C', '0', '1'};

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    if (!is) throw DataError("checkpoint: truncated integer");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_f64(std::ostream& os, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(os, bits);
}

double read_f64(std::istream& is) {
    uint64_t bits = read_u64(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace

void save_container(const std::string& path,
                    const std::vector<std::pair<std::string, const Tensor*>>& entries) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("checkpoint: cannot open for write: " + path);
    os.write(kMagic, 8);
    write_u64(os, entries.size());
    for (const auto& [name, tensor] : entries) {
        write_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u64(os, tensor->rank());
        for (size_t d = 0; d < tensor->rank(); ++d) write_u64(os, tensor->extent(d));
        for (size_t i = 0; i < tensor->numel(); ++i) write_f64(os, (*tensor)[i]);
    }
    if (!os) throw DataError("checkpoint: write failed: " + path);
}

std::map<std::string, Tensor> load_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("checkpoint: bad magic in " + path);
    uint64_t count = read_u64(is);
    std::map<std::string, Tensor> out;
    for (uint64_t e = 0; e < count; ++e) {
        uint64_t name_len = read_u64(is);
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        if (!is) throw DataError("checkpoint: truncated name");
        uint64_t rank = read_u64(is);
        std::vector<size_t> shape(rank);
        for (uint64_t d = 0; d < rank; ++d) shape[d] = static_cast<size_t>(read_u64(is));
        Tensor t(shape);
        for (size_t i = 0; i < t.numel(); ++i) t[i] = read_f64(is);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace phrasedec
