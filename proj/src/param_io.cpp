#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "orthograd/nn.hpp"

namespace orthograd
{

namespace
{

constexpr char magic[4]          = {'O', 'G', 'P', 'D'};
constexpr std::uint32_t version  = 1;

static_assert(std::endian::native == std::endian::little,
              "parameter dump I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v)
{
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path)
{
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    {
        throw DataFormatError(path + ": truncated parameter dump");
    }
    return v;
}

} // namespace

template <typename Scalar>
void save_params(const std::string& path, const std::vector<ParamTensor<Scalar>>& tensors)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
    {
        throw DataFormatError("cannot open '" + path + "' for writing");
    }
    os.write(magic, 4);
    put<std::uint32_t>(os, version);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors)
    {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
        os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
        for (Index d : t.shape)
        {
            put<std::uint64_t>(os, static_cast<std::uint64_t>(d));
        }
    }
    for (const auto& t : tensors)
    {
        for (Index i = 0; i < t.size(); ++i)
        {
            put<double>(os, static_cast<double>(t.data[i]));
        }
    }
    if (!os)
    {
        throw DataFormatError("write to '" + path + "' failed");
    }
}

template <typename Scalar>
void load_params(const std::string& path, std::vector<ParamTensor<Scalar>>& tensors)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
    {
        throw DataFormatError("cannot open '" + path + "'");
    }
    char m[4];
    if (!is.read(m, 4) || std::memcmp(m, magic, 4) != 0)
    {
        throw DataFormatError(path + ": not a parameter dump");
    }
    if (get<std::uint32_t>(is, path) != version)
    {
        throw DataFormatError(path + ": unsupported dump version");
    }
    if (get<std::uint32_t>(is, path) != tensors.size())
    {
        throw DataFormatError(path + ": tensor count mismatch");
    }
    for (const auto& t : tensors)
    {
        std::string name(get<std::uint32_t>(is, path), '\0');
        if (!is.read(name.data(), static_cast<std::streamsize>(name.size())) || name != t.name)
        {
            throw DataFormatError(path + ": expected tensor '" + t.name + "'");
        }
        Shape shape(get<std::uint32_t>(is, path));
        for (Index& d : shape)
        {
            d = static_cast<Index>(get<std::uint64_t>(is, path));
        }
        if (shape != t.shape)
        {
            throw DataFormatError(path + ": shape mismatch for '" + t.name + "'");
        }
    }
    for (auto& t : tensors)
    {
        for (Index i = 0; i < t.size(); ++i)
        {
            t.data[i] = static_cast<Scalar>(get<double>(is, path));
        }
    }
}

template void save_params<float>(const std::string&, const std::vector<ParamTensor<float>>&);
template void save_params<double>(const std::string&, const std::vector<ParamTensor<double>>&);
template void load_params<float>(const std::string&, std::vector<ParamTensor<float>>&);
template void load_params<double>(const std::string&, std::vector<ParamTensor<double>>&);

} // namespace orthograd
