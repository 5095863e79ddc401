#include "orthograd/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "orthograd/rng.hpp"

namespace orthograd
{

template <typename Scalar>
Tensor<Scalar> Dataset::gather(std::span<const std::size_t> indices) const
{
    Shape shape{static_cast<Index>(indices.size())};
    shape.insert(shape.end(), image_shape.begin(), image_shape.end());
    Tensor<Scalar> t(shape);
    const Index sz = image_size();
    for (std::size_t i = 0; i < indices.size(); ++i)
    {
        const float* src = images.data() + static_cast<Index>(indices[i]) * sz;
        for (Index k = 0; k < sz; ++k)
        {
            t.data[static_cast<Index>(i) * sz + k] = static_cast<Scalar>(src[k]);
        }
    }
    return t;
}

template Tensor<float> Dataset::gather<float>(std::span<const std::size_t>) const;
template Tensor<double> Dataset::gather<double>(std::span<const std::size_t>) const;

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const
{
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::size_t i : indices)
    {
        out.push_back(labels[i]);
    }
    return out;
}

RawImages read_cifar10_file(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
    {
        throw DataFormatError("cannot open CIFAR-10 file '" + path + "'");
    }
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(is), {}};
    if (bytes.empty() || bytes.size() % cifar_record_bytes != 0)
    {
        throw DataFormatError(path + ": length " + std::to_string(bytes.size()) +
                              " is not a positive multiple of 3073");
    }
    const std::size_t n = bytes.size() / cifar_record_bytes;
    RawImages raw;
    raw.labels.reserve(n);
    raw.pixels.reserve(n * (cifar_record_bytes - 1));
    for (std::size_t r = 0; r < n; ++r)
    {
        const auto* rec = bytes.data() + r * cifar_record_bytes;
        if (rec[0] > 9)
        {
            throw DataFormatError(path + ": record " + std::to_string(r) + " has label byte " +
                                  std::to_string(rec[0]));
        }
        raw.labels.push_back(rec[0]);
        raw.pixels.insert(raw.pixels.end(), rec + 1, rec + cifar_record_bytes);
    }
    return raw;
}

ChannelStats channel_stats(std::span<const float> images, const Shape& image_shape)
{
    const Index c     = image_shape[0];
    const Index plane = element_count(image_shape) / c;
    const Index n     = static_cast<Index>(images.size()) / (c * plane);
    ChannelStats s{std::vector<double>(static_cast<std::size_t>(c), 0.0),
                   std::vector<double>(static_cast<std::size_t>(c), 0.0)};
    for (Index ch = 0; ch < c; ++ch)
    {
        double sum = 0.0;
        for (Index i = 0; i < n; ++i)
        {
            const float* p = images.data() + (i * c + ch) * plane;
            for (Index k = 0; k < plane; ++k)
                sum += p[k];
        }
        const double mean = sum / static_cast<double>(n * plane);
        double ss         = 0.0;
        for (Index i = 0; i < n; ++i)
        {
            const float* p = images.data() + (i * c + ch) * plane;
            for (Index k = 0; k < plane; ++k)
                ss += (p[k] - mean) * (p[k] - mean);
        }
        const auto u = static_cast<std::size_t>(ch);
        s.mean[u]    = mean;
        s.std[u]     = std::sqrt(ss / static_cast<double>(n * plane));
        if (!(s.std[u] > 0.0))
        {
            s.std[u] = 1.0;
        }
    }
    return s;
}

void standardise(Dataset& d, const ChannelStats& stats)
{
    const Index c     = d.image_shape[0];
    const Index plane = d.image_size() / c;
    for (Index i = 0; i < d.size(); ++i)
    {
        for (Index ch = 0; ch < c; ++ch)
        {
            const auto u  = static_cast<std::size_t>(ch);
            const double m = stats.mean[u];
            const double s = stats.std[u];
            float* p       = d.images.data() + (i * c + ch) * plane;
            for (Index k = 0; k < plane; ++k)
            {
                p[k] = static_cast<float>((p[k] - m) / s);
            }
        }
    }
    d.stats = stats;
}

Dataset to_dataset(const RawImages& raw, std::string split)
{
    Dataset d;
    d.split  = std::move(split);
    d.labels = raw.labels;
    d.images.resize(raw.pixels.size());
    for (std::size_t i = 0; i < raw.pixels.size(); ++i)
    {
        d.images[i] = static_cast<float>(raw.pixels[i]) / 255.0f;
    }
    d.stats = {std::vector<double>(3, 0.0), std::vector<double>(3, 1.0)};
    return d;
}

Cifar10 load_cifar10(const std::string& dir, Index train_subset)
{
    namespace fs = std::filesystem;
    RawImages train;
    for (int b = 1; b <= 5; ++b)
    {
        if (train_subset > 0 && static_cast<Index>(train.labels.size()) >= train_subset)
        {
            break;
        }
        RawImages part = read_cifar10_file((fs::path(dir) / ("data_batch_" + std::to_string(b) + ".bin")).string());
        train.labels.insert(train.labels.end(), part.labels.begin(), part.labels.end());
        train.pixels.insert(train.pixels.end(), part.pixels.begin(), part.pixels.end());
    }
    if (train_subset > 0 && static_cast<Index>(train.labels.size()) > train_subset)
    {
        train.labels.resize(static_cast<std::size_t>(train_subset));
        train.pixels.resize(static_cast<std::size_t>(train_subset) * (cifar_record_bytes - 1));
    }
    const RawImages test = read_cifar10_file((fs::path(dir) / "test_batch.bin").string());

    Cifar10 out{to_dataset(train, "train"), to_dataset(test, "test")};
    const ChannelStats stats = channel_stats(out.train.images, out.train.image_shape);
    standardise(out.train, stats);
    standardise(out.test, stats);
    return out;
}

void write_cifar10_file(const Dataset& d, const std::string& path)
{
    if (d.image_shape != Shape{3, 32, 32})
    {
        throw DataFormatError("only 3x32x32 images can be written in the CIFAR-10 layout");
    }
    std::ofstream os(path, std::ios::binary);
    if (!os)
    {
        throw DataFormatError("cannot open '" + path + "' for writing");
    }
    const Index plane = 32 * 32;
    std::vector<char> rec(cifar_record_bytes);
    for (Index i = 0; i < d.size(); ++i)
    {
        rec[0] = static_cast<char>(d.labels[static_cast<std::size_t>(i)]);
        for (Index ch = 0; ch < 3; ++ch)
        {
            const auto u = static_cast<std::size_t>(ch);
            for (Index k = 0; k < plane; ++k)
            {
                const double z = d.images[static_cast<std::size_t>((i * 3 + ch) * plane + k)];
                const double x = z * d.stats.std[u] + d.stats.mean[u];
                const long q   = std::lround(std::clamp(x, 0.0, 1.0) * 255.0);
                rec[static_cast<std::size_t>(1 + ch * plane + k)] = static_cast<char>(static_cast<std::uint8_t>(q));
            }
        }
        os.write(rec.data(), static_cast<std::streamsize>(rec.size()));
    }
}

Dataset synthetic_gaussian_classes(int classes, Index n_per_class, std::uint64_t seed,
                                   double separation, std::uint64_t stream, Shape image_shape)
{
    if (classes < 2)
    {
        throw ShapeError("synthetic_gaussian_classes: need at least 2 classes");
    }
    const Rng root(seed);
    const Index c  = image_shape[0];
    const Index h  = image_shape.size() > 1 ? image_shape[1] : 1;
    const Index w  = image_shape.size() > 2 ? image_shape[2] : 1;
    const Index sz = element_count(image_shape);
    // 4x4 pixel blocks carry one mean value each.
    const Index block = 4;
    const Index gh = (h + block - 1) / block, gw = (w + block - 1) / block;

    std::vector<std::vector<double>> means(static_cast<std::size_t>(classes));
    Rng mean_rng = root.split(0xC1A55);
    for (auto& m : means)
    {
        std::vector<double> grid(static_cast<std::size_t>(c * gh * gw));
        for (double& g : grid)
            g = mean_rng.normal();
        m.resize(static_cast<std::size_t>(sz));
        double ss = 0.0;
        for (Index ch = 0; ch < c; ++ch)
            for (Index y = 0; y < h; ++y)
                for (Index x = 0; x < w; ++x)
                {
                    const double v = grid[static_cast<std::size_t>((ch * gh + y / block) * gw + x / block)];
                    m[static_cast<std::size_t>((ch * h + y) * w + x)] = v;
                    ss += v * v;
                }
        const double rms = std::sqrt(ss / static_cast<double>(sz));
        for (double& v : m)
            v /= rms;
    }

    Dataset d;
    d.split       = stream == 0 ? "train" : "test";
    d.image_shape = std::move(image_shape);
    d.classes     = classes;
    const Index n = n_per_class * classes;
    d.images.resize(static_cast<std::size_t>(n * sz));
    d.labels.resize(static_cast<std::size_t>(n));
    Rng sample_rng = root.split(1000 + stream);
    for (Index i = 0; i < n; ++i)
    {
        const int label                       = static_cast<int>(i % classes);
        d.labels[static_cast<std::size_t>(i)] = label;
        const auto& m                         = means[static_cast<std::size_t>(label)];
        for (Index k = 0; k < sz; ++k)
        {
            d.images[static_cast<std::size_t>(i * sz + k)] =
                static_cast<float>(separation * m[static_cast<std::size_t>(k)] + sample_rng.normal());
        }
    }
    d.stats = {std::vector<double>(static_cast<std::size_t>(c), 0.0),
               std::vector<double>(static_cast<std::size_t>(c), 1.0)};
    return d;
}

std::vector<std::size_t> BatchPlan::permutation(Index n, Index epoch) const
{
    Rng rng = Rng(seed).split(0xBA7C4000ULL + static_cast<std::uint64_t>(epoch));
    return rng.permutation(static_cast<std::size_t>(n));
}

std::vector<std::vector<std::size_t>> batches(Index n, const BatchPlan& plan, Index epoch)
{
    if (plan.batch_size < 1)
    {
        throw ShapeError("batch size must be >= 1");
    }
    const std::vector<std::size_t> perm = plan.permutation(n, epoch);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(plan.batch_size))
    {
        const std::size_t end = std::min(perm.size(), start + static_cast<std::size_t>(plan.batch_size));
        out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

std::vector<std::vector<std::size_t>> sequential_batches(Index n, Index batch_size)
{
    std::vector<std::vector<std::size_t>> out;
    for (Index start = 0; start < n; start += batch_size)
    {
        std::vector<std::size_t> b;
        for (Index i = start; i < std::min(n, start + batch_size); ++i)
            b.push_back(static_cast<std::size_t>(i));
        out.push_back(std::move(b));
    }
    return out;
}

} // namespace orthograd
