#include "cal/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>

#include "cal/errors.hpp"

namespace cal {
namespace {

constexpr char kMagic[8] = {'C', 'A', 'L', 'C', 'K', 'P', 'T', '1'};

template <typename U>
void put(std::ostream& out, U value) {
    char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
    out.write(bytes, sizeof(U));
}

template <typename U>
U get(std::istream& in, const std::filesystem::path& path) {
    unsigned char bytes[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U)))
        throw FormatError("truncated checkpoint " + path.string());
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
    return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterList& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint64_t>(out, params.size());
    for (const auto& [name, tensor] : params) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
        for (auto d : tensor.shape()) put<std::uint64_t>(out, d);
        for (double v : tensor.values()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

std::map<std::string, Tensor> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[sizeof kMagic];
    if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kMagic))
        throw FormatError("not a checkpoint file: " + path.string());
    const auto count = get<std::uint64_t>(in, path);
    std::map<std::string, Tensor> entries;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = get<std::uint32_t>(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw FormatError("truncated checkpoint " + path.string());
        const auto rank = get<std::uint32_t>(in, path);
        Shape shape;
        for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(get<std::uint64_t>(in, path));
        std::vector<double> values(shape_size(shape));
        for (double& v : values) v = std::bit_cast<double>(get<std::uint64_t>(in, path));
        entries.emplace(std::move(name), Tensor::from(std::move(shape), std::move(values)));
    }
    return entries;
}

void load_checkpoint(const std::filesystem::path& path, const ParameterList& params) {
    const auto entries = read_checkpoint(path);
    for (const auto& [name, tensor] : params) {
        auto it = entries.find(name);
        if (it == entries.end()) throw FormatError("checkpoint " + path.string() + " has no entry " + name);
        if (it->second.shape() != tensor.shape())
            throw FormatError("checkpoint entry " + name + " has shape " + shape_string(it->second.shape()) +
                              ", expected " + shape_string(tensor.shape()));
        Tensor dst = tensor;
        std::ranges::copy(it->second.values(), dst.values().begin());
    }
}

}  // namespace cal
