#ifndef ORTHOGRAD_ERRORS_HPP
#define ORTHOGRAD_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace orthograd
{

/// Input that the operation cannot give a meaningful answer for
/// (all-zero matrix to a polar factor, zero vector to a cosine, ...).
class DegenerateInput : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

/// Jacobi sweeps exhausted before the off-diagonal Gram entries converged.
class ConvergenceError : public std::runtime_error
{
  public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual)
    {
    }

    /// Largest relative off-diagonal Gram entry seen in the final sweep.
    double residual() const noexcept { return residual_; }

  private:
    double residual_;
};

class ShapeError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

/// An optimiser step produced NaN/Inf; carries the offending parameter name.
class NonFiniteUpdate : public std::runtime_error
{
  public:
    explicit NonFiniteUpdate(std::string param)
        : std::runtime_error("non-finite update for parameter '" + param + "'"),
          param_(std::move(param))
    {
    }

    const std::string& param() const noexcept { return param_; }

  private:
    std::string param_;
};

class DataFormatError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

} // namespace orthograd

#endif // ORTHOGRAD_ERRORS_HPP
