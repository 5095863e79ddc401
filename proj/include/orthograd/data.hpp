#ifndef ORTHOGRAD_DATA_HPP
#define ORTHOGRAD_DATA_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "orthograd/nn.hpp"

namespace orthograd
{

struct ChannelStats
{
    std::vector<double> mean;
    std::vector<double> std;
};

//
// Labelled image set. `images` holds n samples of `image_shape`, row-major,
// already channel-standardised with `stats`.
//
struct Dataset
{
    std::string split;
    Shape image_shape{3, 32, 32};
    int classes = 10;
    std::vector<float> images;
    std::vector<int> labels;
    ChannelStats stats;

    Index size() const { return static_cast<Index>(labels.size()); }
    Index image_size() const { return element_count(image_shape); }

    /// Gathers the given samples into a (B, C, H, W) tensor.
    template <typename Scalar>
    Tensor<Scalar> gather(std::span<const std::size_t> indices) const;

    std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
};

extern template Tensor<float> Dataset::gather<float>(std::span<const std::size_t>) const;
extern template Tensor<double> Dataset::gather<double>(std::span<const std::size_t>) const;

// CIFAR-10 binary layout: 1 label byte then 3072 pixel bytes (R, G, B planes,
// each 32x32 row-major).
inline constexpr std::size_t cifar_record_bytes = 3073;

/// Raw records of one CIFAR-10 binary file.
struct RawImages
{
    std::vector<std::uint8_t> pixels; // n * 3072
    std::vector<int> labels;
};

/// Throws DataFormatError on a length that is not a multiple of 3073 or a
/// label byte above 9.
RawImages read_cifar10_file(const std::string& path);

/// Per-channel mean and (population) standard deviation.
ChannelStats channel_stats(std::span<const float> images, const Shape& image_shape);

/// In-place (x - mean) / std per channel; records `stats` on the dataset.
void standardise(Dataset& d, const ChannelStats& stats);

/// Pixels scaled to [0, 1] (not yet standardised).
Dataset to_dataset(const RawImages& raw, std::string split);

struct Cifar10
{
    Dataset train;
    Dataset test;
};

//
// Loads data_batch_{1..5}.bin and test_batch.bin from `dir`. When
// `train_subset` > 0 only the first `train_subset` training records are kept.
// Both splits are standardised with statistics of the (kept) training data.
//
Cifar10 load_cifar10(const std::string& dir, Index train_subset = 0);

/// Undo standardisation, quantise to bytes and write in the CIFAR-10 layout.
void write_cifar10_file(const Dataset& d, const std::string& path);

//
// Class-conditional Gaussian images: sample = separation * mean_c + N(0, 1)
// per pixel, where mean_c is a blocky random pattern with unit RMS shared by
// every split generated from the same seed. `stream` selects an independent
// sample draw (0 for train, 1 for test, ...). Samples cycle through classes.
// Not standardised.
//
Dataset synthetic_gaussian_classes(int classes, Index n_per_class, std::uint64_t seed,
                                   double separation = 3.0, std::uint64_t stream = 0,
                                   Shape image_shape = {3, 32, 32});

struct BatchPlan
{
    std::uint64_t seed = 0;
    Index batch_size   = 1;

    /// Bijection on [0, n) determined by (seed, epoch).
    std::vector<std::size_t> permutation(Index n, Index epoch) const;
};

/// ceil(n / B) index batches in permuted order; the last may be short.
std::vector<std::vector<std::size_t>> batches(Index n, const BatchPlan& plan, Index epoch);

/// Batches in natural order, for evaluation.
std::vector<std::vector<std::size_t>> sequential_batches(Index n, Index batch_size);

} // namespace orthograd

#endif // ORTHOGRAD_DATA_HPP
