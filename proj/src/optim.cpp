#include "orthograd/optim.hpp"

#include <cmath>

namespace orthograd
{

std::string_view to_string(TransformKind kind)
{
    switch (kind)
    {
    case TransformKind::Identity:
        return "identity";
    case TransformKind::Orthogonalise:
        return "orth";
    case TransformKind::NormaliseLayer:
        return "norm";
    case TransformKind::NormaliseColumns:
        return "colnorm";
    }
    return "?";
}

std::string_view to_string(OptimizerKind kind)
{
    switch (kind)
    {
    case OptimizerKind::Sgdm:
        return "sgdm";
    case OptimizerKind::Adam:
        return "adam";
    case OptimizerKind::Lars:
        return "lars";
    }
    return "?";
}

TransformKind parse_transform(std::string_view name)
{
    if (name == "identity")
        return TransformKind::Identity;
    if (name == "orth" || name == "orthogonalise")
        return TransformKind::Orthogonalise;
    if (name == "norm")
        return TransformKind::NormaliseLayer;
    if (name == "colnorm")
        return TransformKind::NormaliseColumns;
    throw ConfigError("unknown transform '" + std::string(name) + "'");
}

OptimizerKind parse_optimizer(std::string_view name)
{
    if (name == "sgdm")
        return OptimizerKind::Sgdm;
    if (name == "adam")
        return OptimizerKind::Adam;
    if (name == "lars")
        return OptimizerKind::Lars;
    throw ConfigError("unknown optimiser '" + std::string(name) + "'");
}

void HyperParams::validate() const
{
    auto require = [](bool ok, const char* what) {
        if (!ok)
        {
            throw ConfigError(std::string("invalid hyper-parameter: ") + what);
        }
    };
    require(std::isfinite(lr) && lr > 0.0, "lr must be > 0");
    require(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0, 1)");
    require(std::isfinite(weight_decay) && weight_decay >= 0.0, "weight_decay must be >= 0");
    require(beta1 >= 0.0 && beta1 < 1.0, "beta1 must be in [0, 1)");
    require(beta2 >= 0.0 && beta2 < 1.0, "beta2 must be in [0, 1)");
    require(std::isfinite(eps) && eps > 0.0, "eps must be > 0");
    require(std::isfinite(lars_trust) && lars_trust > 0.0, "lars_trust must be > 0");
}

} // namespace orthograd
