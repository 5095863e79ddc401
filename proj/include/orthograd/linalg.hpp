// -*- mode: c++; fill-column: 80; indent-tabs-mode: nil; -*-
#ifndef ORTHOGRAD_LINALG_HPP
#define ORTHOGRAD_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "orthograd/errors.hpp"

namespace orthograd
{

using Index = Eigen::Index;

/// Dense row-major matrix, the value type every module exchanges.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using MatrixXf = Matrix<float>;

//
// Thin singular value decomposition G = U diag(sigma) Vt with k = min(P, N):
// u is P x k with orthonormal columns, vt is k x N with orthonormal rows and
// sigma is non-negative and non-increasing.
//
template <typename Scalar>
struct SvdResult
{
    Matrix<Scalar> u;
    Vector<Scalar> sigma;
    Matrix<Scalar> vt;
};

struct JacobiOptions
{
    /// Pair (i, j) is converged when |<g_i, g_j>| <= tol * |g_i| |g_j|.
    double tol     = 1e-12;
    int max_sweeps = 30;
};

namespace detail
{

//
// One-sided Jacobi on the rows of `w` (each row is one column of the tall
// matrix being decomposed). On exit the rows of `w` are mutually orthogonal
// and `vt` holds the accumulated rotations, so that
//
//   w_in = vt^T * w_out     (as matrices with rows = columns of G)
//
// Rows whose norm falls to `zero_tol` or below are treated as exact zeros and
// excluded from rotation; they become zero singular values.
//
inline void one_sided_jacobi(MatrixXd& w, MatrixXd& vt, double zero_tol,
                             const JacobiOptions& opts)
{
    const Index n = w.rows();
    vt.setIdentity(n, n);
    if (n < 2)
    {
        return;
    }

    Vector<double> sq(n);
    for (Index i = 0; i < n; ++i)
    {
        sq[i] = w.row(i).squaredNorm();
    }
    const double zero_sq = zero_tol * zero_tol;

    double max_resid = 0.0;
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep)
    {
        max_resid    = 0.0;
        bool rotated = false;
        for (Index i = 0; i + 1 < n; ++i)
        {
            for (Index j = i + 1; j < n; ++j)
            {
                const double a = sq[i];
                const double b = sq[j];
                if (a <= zero_sq || b <= zero_sq)
                {
                    continue;
                }
                const double c     = w.row(i).dot(w.row(j));
                const double resid = std::abs(c) / std::sqrt(a * b);
                max_resid          = std::max(max_resid, resid);
                if (resid <= opts.tol)
                {
                    continue;
                }
                //
                // Symmetric Schur rotation diagonalising [[a, c], [c, b]].
                //
                const double zeta = (b - a) / (2.0 * c);
                const double t    = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;

                for (Index k = 0; k < w.cols(); ++k)
                {
                    const double wi = w(i, k);
                    const double wj = w(j, k);
                    w(i, k)         = cs * wi - sn * wj;
                    w(j, k)         = sn * wi + cs * wj;
                }
                for (Index k = 0; k < n; ++k)
                {
                    const double vi = vt(i, k);
                    const double vj = vt(j, k);
                    vt(i, k)        = cs * vi - sn * vj;
                    vt(j, k)        = sn * vi + cs * vj;
                }
                // Exact-arithmetic updates drift; recompute from the rows.
                sq[i]   = w.row(i).squaredNorm();
                sq[j]   = w.row(j).squaredNorm();
                rotated = true;
            }
        }
        if (!rotated)
        {
            return;
        }
    }
    throw ConvergenceError("one-sided Jacobi SVD did not converge in " +
                               std::to_string(opts.max_sweeps) +
                               " sweeps (max relative off-diagonal " +
                               std::to_string(max_resid) + ")",
                           max_resid);
}

//
// Extend the orthonormal columns u(:, 0:filled) to a full set of k columns.
// Each new column is the standard basis vector least represented in the
// current span, orthogonalised twice against it (deterministic).
//
inline void complete_orthonormal_columns(MatrixXd& u, Index filled)
{
    const Index p = u.rows();
    Vector<double> row_sq(p);
    for (Index r = 0; r < p; ++r)
    {
        row_sq[r] = u.row(r).head(filled).squaredNorm();
    }
    for (Index col = filled; col < u.cols(); ++col)
    {
        Index pick = 0;
        row_sq.minCoeff(&pick);
        Vector<double> x = Vector<double>::Zero(p);
        x[pick]          = 1.0;
        for (int pass = 0; pass < 2; ++pass)
        {
            const Vector<double> coeff = u.leftCols(col).transpose() * x;
            x -= u.leftCols(col) * coeff;
        }
        x /= x.norm();
        u.col(col) = x;
        row_sq += x.cwiseAbs2();
    }
}

//
// Jacobi SVD of a tall (P >= N) matrix given as its transpose `gt` (N x P).
//
inline SvdResult<double> svd_tall_transposed(MatrixXd gt, const JacobiOptions& opts)
{
    const Index n = gt.rows();
    const Index p = gt.cols();

    const double fro      = gt.norm();
    const double zero_tol = fro * std::numeric_limits<double>::epsilon() *
                            static_cast<double>(std::max(p, n));

    MatrixXd vt;
    one_sided_jacobi(gt, vt, zero_tol, opts);

    Vector<double> norms(n);
    for (Index i = 0; i < n; ++i)
    {
        const double s = gt.row(i).norm();
        norms[i]       = s > zero_tol ? s : 0.0;
    }

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return norms[a] > norms[b]; });

    SvdResult<double> out;
    out.sigma.resize(n);
    out.u.setZero(p, n);
    out.vt.resize(n, n);
    Index filled = 0;
    for (Index k = 0; k < n; ++k)
    {
        const Index src = order[static_cast<std::size_t>(k)];
        out.sigma[k]    = norms[src];
        // Rows of vt are columns of V; V^T = (rotations)^T, so the right
        // singular vectors are the rows of the accumulated vt.
        out.vt.row(k) = vt.row(src);
        if (norms[src] > 0.0)
        {
            out.u.col(k) = gt.row(src).transpose() / norms[src];
            ++filled;
        }
    }
    if (filled < n)
    {
        complete_orthonormal_columns(out.u, filled);
    }
    return out;
}

template <typename Derived>
void require_finite_nonempty(const Eigen::MatrixBase<Derived>& g, const char* op)
{
    if (g.rows() < 1 || g.cols() < 1)
    {
        throw ShapeError(std::string(op) + ": matrix must be non-empty");
    }
    if (!g.allFinite())
    {
        throw DegenerateInput(std::string(op) + ": matrix has non-finite entries");
    }
}

} // namespace detail

//
// Singular value decomposition by one-sided (cyclic) Jacobi.
//
// Computed in double precision whatever the input scalar; the result is cast
// back to the input scalar type. Wide inputs are decomposed through their
// transpose. Bitwise deterministic for identical input.
//
// Throws ConvergenceError when `opts.max_sweeps` sweeps do not suffice.
//
template <typename Derived>
SvdResult<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived>& g,
                                        const JacobiOptions& opts = {})
{
    using Scalar = typename Derived::Scalar;
    detail::require_finite_nonempty(g, "svd");

    const MatrixXd gd = g.template cast<double>();
    SvdResult<double> r;
    if (gd.rows() >= gd.cols())
    {
        r = detail::svd_tall_transposed(gd.transpose(), opts);
    }
    else
    {
        // G^T = U' S V'^T  =>  G = V' S U'^T
        SvdResult<double> t = detail::svd_tall_transposed(gd, opts);
        r.u                 = t.vt.transpose();
        r.sigma             = std::move(t.sigma);
        r.vt                = t.u.transpose();
    }
    if constexpr (std::is_same_v<Scalar, double>)
    {
        return r;
    }
    else
    {
        return {r.u.template cast<Scalar>(), r.sigma.template cast<Scalar>(),
                r.vt.template cast<Scalar>()};
    }
}

//
// Nearest orthonormal matrix in Frobenius norm (the orthogonal polar factor),
// O = U V^T. For P >= N the columns of O are orthonormal; for wide input
// (N > P) the rows are, which is the nearest semi-orthogonal matrix.
//
// Throws DegenerateInput for an all-zero matrix.
//
template <typename Derived>
Matrix<typename Derived::Scalar>
nearest_orthonormal(const Eigen::MatrixBase<Derived>& g, const JacobiOptions& opts = {})
{
    using Scalar = typename Derived::Scalar;
    detail::require_finite_nonempty(g, "nearest_orthonormal");
    if (g.isZero(0))
    {
        throw DegenerateInput("nearest_orthonormal: all-zero matrix");
    }
    const SvdResult<double> r = svd(g.template cast<double>().eval(), opts);
    const MatrixXd o          = r.u * r.vt;
    return o.template cast<Scalar>();
}

/// Columns with Euclidean norm above `eps` scaled to unit norm; others kept.
template <typename Derived>
Matrix<typename Derived::Scalar> normalise_columns(const Eigen::MatrixBase<Derived>& g,
                                                   double eps = 1e-12)
{
    using Scalar     = typename Derived::Scalar;
    Matrix<Scalar> o = g;
    for (Index j = 0; j < o.cols(); ++j)
    {
        const double n = o.col(j).template cast<double>().norm();
        if (n > eps)
        {
            o.col(j) /= static_cast<Scalar>(n);
        }
    }
    return o;
}

template <typename Derived>
double frobenius_norm(const Eigen::MatrixBase<Derived>& g)
{
    return g.template cast<double>().norm();
}

//
// Cosine of the angle between two vectors, clamped to [-1, 1].
// Throws DegenerateInput if either vector has zero norm.
//
template <typename DerivedX, typename DerivedY>
double cosine(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y)
{
    if (x.size() != y.size())
    {
        throw ShapeError("cosine: vectors differ in length");
    }
    const auto xd  = x.template cast<double>();
    const auto yd  = y.template cast<double>();
    const double nx = xd.norm();
    const double ny = yd.norm();
    if (!(nx > 0.0) || !(ny > 0.0))
    {
        throw DegenerateInput("cosine: zero-norm argument");
    }
    const double c = xd.cwiseProduct(yd).sum() / (nx * ny);
    return std::clamp(c, -1.0, 1.0);
}

/// max |M^T M - I| for P >= N, max |M M^T - I| otherwise.
template <typename Derived>
double orthonormality_error(const Eigen::MatrixBase<Derived>& m)
{
    const MatrixXd md = m.template cast<double>();
    const MatrixXd gram =
        md.rows() >= md.cols() ? MatrixXd(md.transpose() * md) : MatrixXd(md * md.transpose());
    return (gram - MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

} // namespace orthograd

#endif // ORTHOGRAD_LINALG_HPP
