#include "orthograd/diagnostics.hpp"

#include <cmath>

#include "orthograd/rng.hpp"

namespace orthograd
{

double significance_threshold(Index n)
{
    if (n < 1)
    {
        throw DegenerateInput("significance_threshold: dimension must be >= 1");
    }
    return 4.0 / std::sqrt(static_cast<double>(n));
}

CosineStats pairwise_abs_cosines(const MatrixXd& components)
{
    CosineStats s;
    if (components.cols() > 0)
    {
        s.threshold = significance_threshold(components.cols());
    }
    std::vector<Index> usable;
    Vector<double> norms(components.rows());
    for (Index i = 0; i < components.rows(); ++i)
    {
        norms[i] = components.row(i).norm();
        if (norms[i] > 0.0)
            usable.push_back(i);
        else
            ++s.skipped_components;
    }
    if (usable.size() < 2)
    {
        return s;
    }
    const MatrixXd gram = components * components.transpose();
    double sum          = 0.0;
    for (std::size_t a = 0; a + 1 < usable.size(); ++a)
    {
        for (std::size_t b = a + 1; b < usable.size(); ++b)
        {
            const Index i  = usable[a];
            const Index j  = usable[b];
            const double c = std::min(1.0, std::abs(gram(i, j)) / (norms[i] * norms[j]));
            sum += c;
            s.max = std::max(s.max, c);
            ++s.count;
        }
    }
    s.mean  = sum / static_cast<double>(s.count);
    s.empty = false;
    return s;
}

template <typename Scalar>
CosineStats representation_cosines(const LayerActivation<Scalar>& activation)
{
    const Shape& shape = activation.values.shape;
    if (shape.size() < 2)
    {
        throw ShapeError("representation_cosines: activation needs (batch, components, ...)");
    }
    const Index b       = shape[0];
    const Index n       = shape[1];
    const Index spatial = element_count(shape) / (b * n);
    MatrixXd comps(n, b * spatial);
    for (Index s = 0; s < b; ++s)
    {
        for (Index c = 0; c < n; ++c)
        {
            for (Index k = 0; k < spatial; ++k)
            {
                comps(c, s * spatial + k) = activation.values.data[(s * n + c) * spatial + k];
            }
        }
    }
    CosineStats out = pairwise_abs_cosines(comps);
    out.layer       = activation.layer;
    out.name        = activation.name;
    return out;
}

template CosineStats representation_cosines<float>(const LayerActivation<float>&);
template CosineStats representation_cosines<double>(const LayerActivation<double>&);

template <typename Scalar>
DeadParamReport dead_parameters(const std::vector<ParamTensor<Scalar>>& params)
{
    DeadParamReport r;
    for (const ParamTensor<Scalar>& p : params)
    {
        const Index dead =
            (p.grad.array().abs() <= static_cast<Scalar>(dead_gradient_threshold)).count();
        r.tensors.push_back({p.name, dead, p.grad.size()});
        const auto dot = p.name.rfind('.');
        r.per_layer[dot == std::string::npos ? p.name : p.name.substr(0, dot)] += dead;
        r.total_dead += dead;
    }
    return r;
}

template DeadParamReport dead_parameters<float>(const std::vector<ParamTensor<float>>&);
template DeadParamReport dead_parameters<double>(const std::vector<ParamTensor<double>>&);

NullCosineSample sample_null_cosines(Index dimension, Index pairs, std::uint64_t seed)
{
    Rng rng(seed);
    const double thr = significance_threshold(dimension);
    Vector<double> x(dimension), y(dimension);
    double sum = 0.0, sum_sq = 0.0;
    Index exceed = 0;
    for (Index p = 0; p < pairs; ++p)
    {
        for (Index k = 0; k < dimension; ++k)
        {
            x[k] = rng.normal();
            y[k] = rng.normal();
        }
        const double c = cosine(x, y);
        sum += c;
        sum_sq += c * c;
        if (std::abs(c) > thr)
            ++exceed;
    }
    NullCosineSample s;
    s.dimension       = dimension;
    s.pairs           = pairs;
    const double n    = static_cast<double>(pairs);
    s.mean            = sum / n;
    s.stddev          = std::sqrt(std::max(0.0, (sum_sq - n * s.mean * s.mean) / (n - 1.0)));
    s.exceed_fraction = static_cast<double>(exceed) / n;
    return s;
}

} // namespace orthograd
