#include "stag/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "stag/error.hpp"

namespace stag {

int ParamStore::add(const std::string& name, Matrix value, bool tunable) {
    if (name.empty()) throw ContractError("ParamStore::add: empty name");
    if (index_.count(name)) throw ContractError("ParamStore::add: duplicate name " + name);
    const int idx = static_cast<int>(params_.size());
    params_.push_back(Param{name, std::move(value), tunable});
    index_.emplace(name, idx);
    return idx;
}

int ParamStore::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("ParamStore: unknown parameter " + name);
    return it->second;
}

std::vector<std::string> ParamStore::tunable_names() const {
    std::vector<std::string> out;
    for (const Param& p : params_)
        if (p.tunable) out.push_back(p.name);
    return out;
}

std::int64_t ParamStore::count_elements(bool tunable_only) const {
    std::int64_t total = 0;
    for (const Param& p : params_)
        if (!tunable_only || p.tunable) total += static_cast<std::int64_t>(p.value.size());
    return total;
}

std::uint64_t ParamStore::content_hash(bool frozen_only) const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t len) {
        const unsigned char* b = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    for (const Param& p : params_) {
        if (frozen_only && p.tunable) continue;
        mix(p.name.data(), p.name.size());
        const int shape[2] = {p.value.rows(), p.value.cols()};
        mix(shape, sizeof shape);
        mix(p.value.data(), p.value.size() * sizeof(double));
    }
    return h;
}

namespace {

constexpr char kMagic[6] = {'S', 'T', 'A', 'G', 'W', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw ParseError(std::string("weight file truncated reading ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    put_u32(os, static_cast<std::uint32_t>(v));
    put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

std::uint64_t get_u64(std::istream& is, const char* what) {
    const std::uint64_t lo = get_u32(is, what);
    const std::uint64_t hi = get_u32(is, what);
    return lo | (hi << 32);
}

}  // namespace

void save_params(const std::string& path,
                 const std::vector<std::pair<std::string, Matrix>>& records, Precision prec) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kMagic, sizeof kMagic);
    os.put(prec == Precision::Single ? 0 : 1);
    for (const auto& [name, m] : records) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<std::uint32_t>(m.rows()));
        put_u32(os, static_cast<std::uint32_t>(m.cols()));
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j) {
                if (prec == Precision::Single)
                    put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(m.at(i, j))));
                else
                    put_u64(os, std::bit_cast<std::uint64_t>(m.at(i, j)));
            }
    }
    if (!os) throw IoError("write failed: " + path);
}

std::vector<std::pair<std::string, Matrix>> load_params(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[6];
    if (!is.read(magic, 6) || std::memcmp(magic, kMagic, 6) != 0)
        throw ParseError("not a STAGW1 weight file: " + path);
    const int prec_byte = is.get();
    if (prec_byte != 0 && prec_byte != 1)
        throw ParseError("bad precision flag in weight file: " + path);
    const Precision prec = prec_byte == 0 ? Precision::Single : Precision::Double;
    std::vector<std::pair<std::string, Matrix>> out;
    while (true) {
        is.peek();
        if (is.eof()) break;
        const std::uint32_t name_len = get_u32(is, "name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw ParseError("weight file truncated in name");
        const std::uint32_t rows = get_u32(is, "rows");
        const std::uint32_t cols = get_u32(is, "cols");
        Matrix m(static_cast<int>(rows), static_cast<int>(cols), prec);
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j) {
                if (prec == Precision::Single)
                    m.at(i, j) = static_cast<double>(
                        std::bit_cast<float>(get_u32(is, "value")));
                else
                    m.at(i, j) = std::bit_cast<double>(get_u64(is, "value"));
            }
        out.emplace_back(std::move(name), std::move(m));
    }
    return out;
}

}  // namespace stag
