#include "mscsa/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace mscsa::io {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'C', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

template <typename T>
constexpr std::uint8_t dtype_code() {
    if constexpr (std::is_same_v<T, float>) return 0;
    else return 1;
}

template <typename T>
void write_payload(std::ostream& os, const Tensor<T>& t) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.numel() * static_cast<std::int64_t>(sizeof(T))));
    } else {
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            unsigned char b[sizeof(T)];
            std::memcpy(b, &t[i], sizeof(T));
            for (std::size_t j = 0; j < sizeof(T) / 2; ++j) std::swap(b[j], b[sizeof(T) - 1 - j]);
            os.write(reinterpret_cast<const char*>(b), sizeof(T));
        }
    }
}

template <typename T>
Tensor<T> read_payload(std::istream& is, std::vector<int> dims) {
    Tensor<T> t(std::move(dims));
    if constexpr (std::endian::native == std::endian::little) {
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * static_cast<std::int64_t>(sizeof(T))));
    } else {
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            unsigned char b[sizeof(T)];
            is.read(reinterpret_cast<char*>(b), sizeof(T));
            for (std::size_t j = 0; j < sizeof(T) / 2; ++j) std::swap(b[j], b[sizeof(T) - 1 - j]);
            std::memcpy(&t[i], b, sizeof(T));
        }
    }
    if (!is) throw NumericError("msct: truncated payload");
    return t;
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    char dtype = static_cast<char>(dtype_code<T>());
    os.write(&dtype, 1);
    char ndim = static_cast<char>(t.rank());
    os.write(&ndim, 1);
    for (int d : t.dims()) put_u32(os, static_cast<std::uint32_t>(d));
    write_payload(os, t);
}

template <typename T>
void write_tensor_file(const std::string& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("msct: cannot open for write: " + path);
    write_tensor(os, t);
    if (!os) throw ConfigError("msct: write failed: " + path);
}

AnyTensor read_tensor(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw NumericError("msct: bad magic");
    std::uint32_t version = get_u32(is);
    if (version != kVersion) throw NumericError("msct: unsupported version " + std::to_string(version));
    char dtype = 0, ndim = 0;
    is.read(&dtype, 1);
    is.read(&ndim, 1);
    if (!is || ndim < 1) throw NumericError("msct: bad header");
    std::vector<int> dims(static_cast<std::size_t>(ndim));
    for (auto& d : dims) d = static_cast<int>(get_u32(is));
    if (dtype == 0) return read_payload<float>(is, std::move(dims));
    if (dtype == 1) return read_payload<double>(is, std::move(dims));
    throw NumericError("msct: unknown dtype " + std::to_string(static_cast<int>(dtype)));
}

AnyTensor read_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("msct: cannot open: " + path);
    return read_tensor(is);
}

template <typename T>
Tensor<T> read_tensor_file_as(const std::string& path) {
    AnyTensor any = read_tensor_file(path);
    if (auto* p = std::get_if<Tensor<T>>(&any)) return std::move(*p);
    throw NumericError("msct: dtype mismatch reading " + path);
}

template void write_tensor<float>(std::ostream&, const Tensor<float>&);
template void write_tensor<double>(std::ostream&, const Tensor<double>&);
template void write_tensor_file<float>(const std::string&, const Tensor<float>&);
template void write_tensor_file<double>(const std::string&, const Tensor<double>&);
template Tensor<float> read_tensor_file_as<float>(const std::string&);
template Tensor<double> read_tensor_file_as<double>(const std::string&);

}  // namespace mscsa::io
