#ifndef ORTHOGRAD_PARAM_HPP
#define ORTHOGRAD_PARAM_HPP

#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "orthograd/linalg.hpp"

namespace orthograd
{

using Shape = std::vector<Index>;

inline Index element_count(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

//
// How a weight tensor maps onto its P x N component matrix, one column per
// component (conv filter or dense output unit).
//
//   filters_leading == true   tensor is [N, ...] (conv [out, in, kh, kw]);
//                             the row-major storage is N x P.
//   filters_leading == false  tensor is [..., N] (dense [in, out]);
//                             the row-major storage is already P x N.
//
struct ComponentLayout
{
    Index p = 0;
    Index n = 0;
    bool filters_leading = false;
};

enum class ParamKind
{
    ConvWeight,
    DenseWeight,
    Vector, // biases, batch-norm scale/shift
};

template <typename Scalar>
struct ParamTensor
{
    std::string name;
    Shape shape;
    Vector<Scalar> data;
    Vector<Scalar> grad;
    std::optional<ComponentLayout> layout;
    bool is_dense = false;

    Index size() const { return data.size(); }
};

//
// Construct a zero-filled parameter. The component layout is attached iff the
// tensor has rank >= 2.
//
template <typename Scalar>
ParamTensor<Scalar> make_param(std::string name, Shape shape, ParamKind kind)
{
    ParamTensor<Scalar> p;
    p.name     = std::move(name);
    p.shape    = std::move(shape);
    const Index count = element_count(p.shape);
    p.data     = Vector<Scalar>::Zero(count);
    p.grad     = Vector<Scalar>::Zero(count);
    p.is_dense = kind == ParamKind::DenseWeight;
    if (p.shape.size() >= 2)
    {
        if (kind == ParamKind::DenseWeight)
        {
            const Index n = p.shape.back();
            p.layout      = ComponentLayout{count / n, n, false};
        }
        else
        {
            const Index n = p.shape.front();
            p.layout      = ComponentLayout{count / n, n, true};
        }
    }
    return p;
}

/// View a flat tensor as its P x N component matrix (copy).
template <typename Scalar>
Matrix<Scalar> to_component_matrix(const ComponentLayout& layout, const Vector<Scalar>& flat)
{
    if (layout.filters_leading)
    {
        return Eigen::Map<const Matrix<Scalar>>(flat.data(), layout.n, layout.p).transpose();
    }
    return Eigen::Map<const Matrix<Scalar>>(flat.data(), layout.p, layout.n);
}

/// Inverse of to_component_matrix.
template <typename Scalar>
Vector<Scalar> from_component_matrix(const ComponentLayout& layout, const Matrix<Scalar>& m)
{
    Vector<Scalar> flat(layout.p * layout.n);
    if (layout.filters_leading)
    {
        Eigen::Map<Matrix<Scalar>>(flat.data(), layout.n, layout.p) = m.transpose();
    }
    else
    {
        Eigen::Map<Matrix<Scalar>>(flat.data(), layout.p, layout.n) = m;
    }
    return flat;
}

} // namespace orthograd

#endif // ORTHOGRAD_PARAM_HPP
