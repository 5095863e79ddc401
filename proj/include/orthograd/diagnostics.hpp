#ifndef ORTHOGRAD_DIAGNOSTICS_HPP
#define ORTHOGRAD_DIAGNOSTICS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "orthograd/nn.hpp"

namespace orthograd
{

//
// Statistics of |cos| over all distinct pairs of a layer's component outputs.
// Components with zero norm are skipped and counted in `skipped_components`.
// `empty` marks fewer than two usable components; mean and max are then 0.
//
struct CosineStats
{
    Index layer = 0;
    std::string name;
    double mean = 0.0;
    double max  = 0.0;
    Index count = 0;
    Index skipped_components = 0;
    double threshold = 0.0; // 4 / sqrt(representation dimension)
    bool empty = true;
};

/// Each component is flattened over batch and spatial axes before the cosine.
template <typename Scalar>
CosineStats representation_cosines(const LayerActivation<Scalar>& activation);

/// Same statistic over explicit component vectors (rows of `components`).
CosineStats pairwise_abs_cosines(const MatrixXd& components);

struct DeadParamReport
{
    struct Entry
    {
        std::string name;
        Index dead  = 0;
        Index total = 0;
    };
    std::vector<Entry> tensors;
    /// Keyed by layer name (parameter name up to the last '.').
    std::map<std::string, Index> per_layer;
    Index total_dead = 0;
};

inline constexpr double dead_gradient_threshold = 1e-12;

/// Counts entries with |grad| <= 1e-12, per tensor and per layer.
template <typename Scalar>
DeadParamReport dead_parameters(const std::vector<ParamTensor<Scalar>>& params);

/// 4 / sqrt(n): four-sigma level for the cosine of two random n-vectors.
double significance_threshold(Index n);

struct NullCosineSample
{
    Index dimension = 0;
    Index pairs     = 0;
    double mean     = 0.0;
    double stddev   = 0.0;
    /// Fraction of pairs with |cos| > 4 / sqrt(dimension).
    double exceed_fraction = 0.0;
};

/// Monte-Carlo cosines of independent standard-normal vector pairs.
NullCosineSample sample_null_cosines(Index dimension, Index pairs, std::uint64_t seed);

} // namespace orthograd

#endif // ORTHOGRAD_DIAGNOSTICS_HPP
