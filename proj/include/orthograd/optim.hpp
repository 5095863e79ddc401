#ifndef ORTHOGRAD_OPTIM_HPP
#define ORTHOGRAD_OPTIM_HPP

#include <chrono>
#include <cmath>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "orthograd/linalg.hpp"
#include "orthograd/param.hpp"

namespace orthograd
{

enum class TransformKind
{
    Identity,
    Orthogonalise,
    NormaliseLayer,   // g / |g|_F per parameter tensor
    NormaliseColumns, // each component column to unit norm
};

struct GradTransform
{
    TransformKind kind = TransformKind::Identity;
    /// Leave dense-layer gradients untouched under Orthogonalise.
    bool skip_dense = false;
};

enum class OptimizerKind
{
    Sgdm,
    Adam,
    Lars,
};

std::string_view to_string(TransformKind kind);
std::string_view to_string(OptimizerKind kind);
TransformKind parse_transform(std::string_view name);
OptimizerKind parse_optimizer(std::string_view name);

struct HyperParams
{
    double lr           = 1e-2;
    double momentum     = 0.9;
    double weight_decay = 0.0;
    double beta1        = 0.9;
    double beta2        = 0.999;
    double eps          = 1e-8;
    double lars_trust   = 1e-3;
    /// Add weight decay to the raw gradient before the transform instead of
    /// to the transformed gradient.
    bool decay_before_transform = false;

    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

template <typename Scalar>
struct SgdmState
{
    Vector<Scalar> velocity;
};

template <typename Scalar>
struct AdamState
{
    Vector<Scalar> m;
    Vector<Scalar> v;
    long t = 0;
};

template <typename Scalar>
using OptimizerState = std::variant<SgdmState<Scalar>, AdamState<Scalar>>;

template <typename Scalar>
OptimizerState<Scalar> make_state(OptimizerKind kind, Index size)
{
    if (kind == OptimizerKind::Adam)
    {
        return AdamState<Scalar>{Vector<Scalar>::Zero(size), Vector<Scalar>::Zero(size), 0};
    }
    return SgdmState<Scalar>{Vector<Scalar>::Zero(size)};
}

//
// Gradient transforms. All-zero input is passed through for every kind.
//
template <typename Derived>
Matrix<typename Derived::Scalar> apply_transform(const GradTransform& t,
                                                 const Eigen::MatrixBase<Derived>& g,
                                                 bool is_dense_layer)
{
    using Scalar = typename Derived::Scalar;
    if (t.kind == TransformKind::Identity || g.isZero(0))
    {
        return g;
    }
    switch (t.kind)
    {
    case TransformKind::Orthogonalise:
        if (t.skip_dense && is_dense_layer)
        {
            return g;
        }
        return nearest_orthonormal(g);
    case TransformKind::NormaliseLayer:
        return g / static_cast<Scalar>(frobenius_norm(g));
    case TransformKind::NormaliseColumns:
        return normalise_columns(g);
    case TransformKind::Identity:
        break;
    }
    return g;
}

namespace detail
{
template <typename Scalar>
void commit_if_finite(Vector<Scalar>& theta, const Vector<Scalar>& next, std::string_view name)
{
    if (!next.allFinite())
    {
        throw NonFiniteUpdate(std::string(name));
    }
    theta = next;
}

template <typename Scalar>
void check_shapes(const Vector<Scalar>& theta, const Vector<Scalar>& g, Index state_size,
                  std::string_view name)
{
    if (theta.size() != g.size() || theta.size() != state_size)
    {
        throw ShapeError("shape mismatch for parameter '" + std::string(name) + "'");
    }
}
} // namespace detail

//
// SGD with momentum, learning rate inside the velocity:
//
//   v <- momentum * v + lr * (g + weight_decay * theta)
//   theta <- theta - v
//
// State and parameters are left untouched if the update is non-finite.
//
template <typename Scalar>
void sgdm_step(Vector<Scalar>& theta, const Vector<Scalar>& g, SgdmState<Scalar>& state,
               const HyperParams& hp, std::string_view name = "param", double lr_scale = 1.0)
{
    detail::check_shapes(theta, g, state.velocity.size(), name);
    const auto mom = static_cast<Scalar>(hp.momentum);
    const auto lr  = static_cast<Scalar>(hp.lr * lr_scale);
    const auto wd  = static_cast<Scalar>(hp.weight_decay);

    Vector<Scalar> v = mom * state.velocity + lr * (g + wd * theta);
    detail::commit_if_finite(theta, Vector<Scalar>(theta - v), name);
    state.velocity = std::move(v);
}

//
// Adam with bias correction and coupled weight decay.
//
template <typename Scalar>
void adam_step(Vector<Scalar>& theta, const Vector<Scalar>& g, AdamState<Scalar>& state,
               const HyperParams& hp, std::string_view name = "param")
{
    detail::check_shapes(theta, g, state.m.size(), name);
    const auto b1 = static_cast<Scalar>(hp.beta1);
    const auto b2 = static_cast<Scalar>(hp.beta2);
    const auto wd = static_cast<Scalar>(hp.weight_decay);

    const Vector<Scalar> gd = g + wd * theta;
    Vector<Scalar> m        = b1 * state.m + (Scalar(1) - b1) * gd;
    Vector<Scalar> v        = b2 * state.v + (Scalar(1) - b2) * gd.cwiseAbs2();
    const long t            = state.t + 1;

    const auto bc1 = static_cast<Scalar>(1.0 - std::pow(hp.beta1, static_cast<double>(t)));
    const auto bc2 = static_cast<Scalar>(1.0 - std::pow(hp.beta2, static_cast<double>(t)));
    const auto lr  = static_cast<Scalar>(hp.lr);
    const auto eps = static_cast<Scalar>(hp.eps);

    const Vector<Scalar> step =
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
    detail::commit_if_finite(theta, Vector<Scalar>(theta - step), name);
    state.m = std::move(m);
    state.v = std::move(v);
    state.t = t;
}

/// LARS trust ratio; 1 when the parameter or the denominator is zero.
template <typename Scalar>
double lars_ratio(const Vector<Scalar>& theta, const Vector<Scalar>& g, const HyperParams& hp)
{
    const double wn    = theta.template cast<double>().norm();
    const double gn    = g.template cast<double>().norm();
    const double denom = gn + hp.weight_decay * wn + hp.eps;
    if (wn > 0.0 && denom > 0.0)
    {
        return hp.lars_trust * wn / denom;
    }
    return 1.0;
}

//
// LARS: momentum SGD with a per-tensor learning rate lr * lars_ratio.
//
template <typename Scalar>
void lars_step(Vector<Scalar>& theta, const Vector<Scalar>& g, SgdmState<Scalar>& state,
               const HyperParams& hp, std::string_view name = "param")
{
    detail::check_shapes(theta, g, state.velocity.size(), name);
    sgdm_step(theta, g, state, hp, name, lars_ratio(theta, g, hp));
}

struct StepStats
{
    /// Seconds spent inside nearest_orthonormal during this step.
    double svd_seconds = 0.0;
};

//
// One optimiser step over every parameter. Tensors with a component layout
// have their gradient reshaped to P x N, transformed and reshaped back;
// vectors (biases, batch-norm scale/shift) are stepped on the raw gradient.
//
template <typename Scalar>
StepStats step_all(std::vector<ParamTensor<Scalar>>& params, const GradTransform& transform,
                   OptimizerKind optimizer, std::vector<OptimizerState<Scalar>>& states,
                   const HyperParams& hp)
{
    using Clock = std::chrono::steady_clock;
    if (states.size() != params.size())
    {
        throw ShapeError("optimiser state count does not match parameter count");
    }

    HyperParams step_hp = hp;
    if (hp.decay_before_transform)
    {
        step_hp.weight_decay = 0.0;
    }

    StepStats stats;
    for (std::size_t i = 0; i < params.size(); ++i)
    {
        ParamTensor<Scalar>& p = params[i];
        if (p.grad.size() != p.data.size())
        {
            throw ShapeError("gradient shape mismatch for parameter '" + p.name + "'");
        }

        Vector<Scalar> g = p.grad;
        if (hp.decay_before_transform)
        {
            g += static_cast<Scalar>(hp.weight_decay) * p.data;
        }
        if (p.layout)
        {
            const Matrix<Scalar> gm = to_component_matrix(*p.layout, g);
            const bool timed = transform.kind == TransformKind::Orthogonalise &&
                               !(transform.skip_dense && p.is_dense);
            const auto t0 = timed ? Clock::now() : Clock::time_point{};
            const Matrix<Scalar> tm = apply_transform(transform, gm, p.is_dense);
            if (timed)
            {
                stats.svd_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
            }
            g = from_component_matrix(*p.layout, tm);
        }

        switch (optimizer)
        {
        case OptimizerKind::Sgdm:
            sgdm_step(p.data, g, std::get<SgdmState<Scalar>>(states[i]), step_hp, p.name);
            break;
        case OptimizerKind::Adam:
            adam_step(p.data, g, std::get<AdamState<Scalar>>(states[i]), step_hp, p.name);
            break;
        case OptimizerKind::Lars:
            lars_step(p.data, g, std::get<SgdmState<Scalar>>(states[i]), step_hp, p.name);
            break;
        }
    }
    return stats;
}

//
// The same optimiser with no transform stage at all: the raw gradient goes
// straight to the step. Reference path for the identity-transform check.
//
template <typename Scalar>
void step_all_plain(std::vector<ParamTensor<Scalar>>& params, OptimizerKind optimizer,
                    std::vector<OptimizerState<Scalar>>& states, const HyperParams& hp)
{
    if (states.size() != params.size())
    {
        throw ShapeError("optimiser state count does not match parameter count");
    }
    for (std::size_t i = 0; i < params.size(); ++i)
    {
        ParamTensor<Scalar>& p = params[i];
        switch (optimizer)
        {
        case OptimizerKind::Sgdm:
            sgdm_step(p.data, p.grad, std::get<SgdmState<Scalar>>(states[i]), hp, p.name);
            break;
        case OptimizerKind::Adam:
            adam_step(p.data, p.grad, std::get<AdamState<Scalar>>(states[i]), hp, p.name);
            break;
        case OptimizerKind::Lars:
            lars_step(p.data, p.grad, std::get<SgdmState<Scalar>>(states[i]), hp, p.name);
            break;
        }
    }
}

} // namespace orthograd

#endif // ORTHOGRAD_OPTIM_HPP
