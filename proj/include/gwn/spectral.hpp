#pragma once

// Dense spectral toolkit for small graphs: symmetric eigensolver, graph
// Fourier transform and its filtered inverse, spectrum export.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gwn/io.hpp"
#include "gwn/matrix.hpp"
#include "gwn/operators.hpp"

namespace gwn {

inline constexpr std::size_t kDenseNodeCap = 2048;

struct EigenDecomposition {
    std::vector<double> eigenvalues;  ///< ascending
    Matrix eigenvectors;              ///< column i is u_i

    std::size_t size() const noexcept { return eigenvalues.size(); }
    std::vector<double> vector(std::size_t i) const {
        std::vector<double> u(eigenvectors.rows());
        for (std::size_t k = 0; k < u.size(); ++k) u[k] = eigenvectors(k, i);
        return u;
    }
};

namespace detail {

// Householder reduction of a symmetric matrix to tridiagonal form. On exit
// v holds the accumulated orthogonal transform, d the diagonal and e the
// subdiagonal in e[1..n-1].
inline void householder_tridiagonalize(Matrix& v, std::vector<double>& d, std::vector<double>& e) {
    const std::size_t n = v.rows();
    for (std::size_t j = 0; j < n; ++j) d[j] = v(n - 1, j);

    for (std::size_t i = n - 1; i > 0; --i) {
        double scale = 0.0, h = 0.0;
        for (std::size_t k = 0; k < i; ++k) scale += std::abs(d[k]);
        if (scale == 0.0) {
            e[i] = d[i - 1];
            for (std::size_t j = 0; j < i; ++j) {
                d[j] = v(i - 1, j);
                v(i, j) = 0.0;
                v(j, i) = 0.0;
            }
        } else {
            for (std::size_t k = 0; k < i; ++k) {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            double f = d[i - 1];
            double g = std::sqrt(h);
            if (f > 0) g = -g;
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for (std::size_t j = 0; j < i; ++j) e[j] = 0.0;

            for (std::size_t j = 0; j < i; ++j) {
                f = d[j];
                v(j, i) = f;
                g = e[j] + v(j, j) * f;
                for (std::size_t k = j + 1; k + 1 <= i; ++k) {
                    g += v(k, j) * d[k];
                    e[k] += v(k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for (std::size_t j = 0; j < i; ++j) {
                e[j] /= h;
                f += e[j] * d[j];
            }
            const double hh = f / (h + h);
            for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
            for (std::size_t j = 0; j < i; ++j) {
                f = d[j];
                g = e[j];
                for (std::size_t k = j; k + 1 <= i; ++k) v(k, j) -= (f * e[k] + g * d[k]);
                d[j] = v(i - 1, j);
                v(i, j) = 0.0;
            }
        }
        d[i] = h;
    }

    for (std::size_t i = 0; i + 1 < n; ++i) {
        v(n - 1, i) = v(i, i);
        v(i, i) = 1.0;
        const double h = d[i + 1];
        if (h != 0.0) {
            for (std::size_t k = 0; k <= i; ++k) d[k] = v(k, i + 1) / h;
            for (std::size_t j = 0; j <= i; ++j) {
                double g = 0.0;
                for (std::size_t k = 0; k <= i; ++k) g += v(k, i + 1) * v(k, j);
                for (std::size_t k = 0; k <= i; ++k) v(k, j) -= g * d[k];
            }
        }
        for (std::size_t k = 0; k <= i; ++k) v(k, i + 1) = 0.0;
    }
    for (std::size_t j = 0; j < n; ++j) {
        d[j] = v(n - 1, j);
        v(n - 1, j) = 0.0;
    }
    v(n - 1, n - 1) = 1.0;
    e[0] = 0.0;
}

// Implicit QL iteration on a symmetric tridiagonal matrix (d diagonal, e
// subdiagonal in e[1..n-1]), accumulating rotations into v. Sorts ascending.
inline void tridiagonal_ql(Matrix& v, std::vector<double>& d, std::vector<double>& e) {
    const std::size_t n = d.size();
    if (n == 0) return;
    for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;

    double f = 0.0, tst1 = 0.0;
    const double eps = std::numeric_limits<double>::epsilon();
    const std::size_t max_iter = 60;
    for (std::size_t l = 0; l < n; ++l) {
        tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
        std::size_t m = l;
        while (m < n - 1 && std::abs(e[m]) > eps * tst1) ++m;

        if (m > l) {
            std::size_t iter = 0;
            do {
                if (++iter > max_iter) throw std::runtime_error("tridiagonal_ql: no convergence");
                double g = d[l];
                double p = (d[l + 1] - g) / (2.0 * e[l]);
                double r = std::hypot(p, 1.0);
                if (p < 0) r = -r;
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                const double dl1 = d[l + 1];
                double h = g - d[l];
                for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
                f += h;

                p = d[m];
                double c = 1.0, c2 = c, c3 = c;
                const double el1 = e[l + 1];
                double s = 0.0, s2 = 0.0;
                for (std::size_t ii = m; ii-- > l;) {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[ii];
                    h = c * p;
                    r = std::hypot(p, e[ii]);
                    e[ii + 1] = s * r;
                    s = e[ii] / r;
                    c = p / r;
                    p = c * d[ii] - s * g;
                    d[ii + 1] = h + s * (c * g + s * d[ii]);
                    for (std::size_t k = 0; k < v.rows(); ++k) {
                        h = v(k, ii + 1);
                        v(k, ii + 1) = s * v(k, ii) + c * h;
                        v(k, ii) = c * v(k, ii) - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
            } while (std::abs(e[l]) > eps * tst1);
        }
        d[l] += f;
        e[l] = 0.0;
    }

    for (std::size_t i = 0; i + 1 < n; ++i) {
        std::size_t k = i;
        double p = d[i];
        for (std::size_t j = i + 1; j < n; ++j)
            if (d[j] < p) {
                k = j;
                p = d[j];
            }
        if (k != i) {
            d[k] = d[i];
            d[i] = p;
            for (std::size_t j = 0; j < v.rows(); ++j) std::swap(v(j, i), v(j, k));
        }
    }
}

}  // namespace detail

/// Eigendecomposition of a dense symmetric matrix (only the lower triangle is
/// trusted to be consistent with the upper one).
inline EigenDecomposition symmetric_eigensolve(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("symmetric_eigensolve: matrix not square");
    const std::size_t n = a.rows();
    EigenDecomposition ed;
    if (n == 0) return ed;
    Matrix v = a;
    std::vector<double> d(n), e(n);
    detail::householder_tridiagonalize(v, d, e);
    detail::tridiagonal_ql(v, d, e);
    ed.eigenvalues = std::move(d);
    ed.eigenvectors = std::move(v);
    return ed;
}

/// Eigenpairs of the symmetric tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off` (length n-1).
inline EigenDecomposition tridiagonal_eigensolve(std::span<const double> diag, std::span<const double> off) {
    const std::size_t n = diag.size();
    if (n && off.size() + 1 != n) throw std::invalid_argument("tridiagonal_eigensolve: off-diagonal length");
    std::vector<double> d(diag.begin(), diag.end()), e(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) e[i] = off[i - 1];
    Matrix v = identity(n);
    detail::tridiagonal_ql(v, d, e);
    return {std::move(d), std::move(v)};
}

/// Dense eigendecomposition of a symmetric operator kind.
inline EigenDecomposition dense_eigensolve(const Operator& op, std::size_t cap = kDenseNodeCap) {
    if (!op.symmetric())
        throw std::invalid_argument(std::string("dense_eigensolve: operator kind ") + to_string(op.kind()) +
                                    " is not symmetric");
    if (op.size() > cap)
        throw std::length_error("dense_eigensolve: N=" + std::to_string(op.size()) + " exceeds cap " +
                                std::to_string(cap));
    return symmetric_eigensolve(op.dense());
}

// ---------------------------------------------------------------------------
// Filters

/// Spectral filter g(lambda): identity, constant one, or a piecewise-linear
/// table over (lambda, value) knots, clamped outside the knot range.
class FilterFn {
public:
    enum class Kind { Identity, One, Table };

    static FilterFn identity() { return FilterFn(Kind::Identity, {}); }
    static FilterFn one() { return FilterFn(Kind::One, {}); }
    static FilterFn table(std::vector<std::pair<double, double>> knots) {
        if (knots.empty()) throw std::invalid_argument("FilterFn::table: no knots");
        std::sort(knots.begin(), knots.end());
        for (const auto& [x, y] : knots)
            if (!std::isfinite(x) || !std::isfinite(y)) throw std::invalid_argument("FilterFn::table: non-finite knot");
        return FilterFn(Kind::Table, std::move(knots));
    }

    Kind kind() const noexcept { return kind_; }

    double operator()(double lambda) const {
        switch (kind_) {
            case Kind::Identity: return lambda;
            case Kind::One: return 1.0;
            case Kind::Table: break;
        }
        if (lambda <= knots_.front().first) return knots_.front().second;
        if (lambda >= knots_.back().first) return knots_.back().second;
        auto hi = std::upper_bound(knots_.begin(), knots_.end(), lambda,
                                   [](double l, const auto& k) { return l < k.first; });
        auto lo = hi - 1;
        const double t = (lambda - lo->first) / (hi->first - lo->first);
        return lo->second + t * (hi->second - lo->second);
    }

private:
    FilterFn(Kind k, std::vector<std::pair<double, double>> knots) : kind_(k), knots_(std::move(knots)) {}
    Kind kind_;
    std::vector<std::pair<double, double>> knots_;
};

// ---------------------------------------------------------------------------
// Graph Fourier transform

/// x̂_i = <u_i, x>
inline std::vector<double> graph_fourier(const EigenDecomposition& ed, std::span<const double> x) {
    const std::size_t n = ed.size();
    if (x.size() != n)
        throw std::invalid_argument("graph_fourier: signal length " + std::to_string(x.size()) + " != " +
                                    std::to_string(n));
    std::vector<double> out(n, 0.0);
    const Matrix& u = ed.eigenvectors;
    for (std::size_t k = 0; k < n; ++k) {
        const double xk = x[k];
        auto uk = u.row(k);
        for (std::size_t i = 0; i < n; ++i) out[i] += uk[i] * xk;
    }
    return out;
}

/// sum_i g(lambda_i) * coeffs_i * u_i
inline std::vector<double> inverse_fourier(const EigenDecomposition& ed, std::span<const double> coeffs,
                                           const FilterFn& filter = FilterFn::one()) {
    const std::size_t n = ed.size();
    if (coeffs.size() != n)
        throw std::invalid_argument("inverse_fourier: coefficient length " + std::to_string(coeffs.size()) + " != " +
                                    std::to_string(n));
    std::vector<double> gc(n);
    for (std::size_t i = 0; i < n; ++i) gc[i] = filter(ed.eigenvalues[i]) * coeffs[i];
    std::vector<double> out(n, 0.0);
    const Matrix& u = ed.eigenvectors;
    for (std::size_t k = 0; k < n; ++k) {
        auto uk = u.row(k);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += uk[i] * gc[i];
        out[k] = s;
    }
    return out;
}

struct Spectrum {
    std::vector<double> frequencies;  ///< eigenvalues, ascending
    Matrix amplitudes;                ///< frequencies.size() x channels
};

/// Filtered amplitudes g(lambda_i) * x̂_i for every channel of x.
inline Spectrum export_spectrum(const EigenDecomposition& ed, const FeatureMatrix& x,
                                const FilterFn& filter = FilterFn::one()) {
    if (x.rows() != ed.size())
        throw std::invalid_argument("export_spectrum: feature rows " + std::to_string(x.rows()) + " != " +
                                    std::to_string(ed.size()));
    Spectrum s;
    s.frequencies = ed.eigenvalues;
    s.amplitudes = matmul_tn(ed.eigenvectors, x);
    for (std::size_t i = 0; i < ed.size(); ++i) {
        const double gi = filter(ed.eigenvalues[i]);
        for (double& a : s.amplitudes.row(i)) a *= gi;
    }
    return s;
}

/// CSV layout `eigenvalue,channel,amplitude`, ordered by eigenvalue then channel.
inline CsvTable spectrum_table(const Spectrum& s) {
    CsvTable t{{"eigenvalue", "channel", "amplitude"}, {}};
    t.rows.reserve(s.amplitudes.size());
    for (std::size_t i = 0; i < s.frequencies.size(); ++i)
        for (std::size_t c = 0; c < s.amplitudes.cols(); ++c)
            t.rows.push_back({s.frequencies[i], static_cast<double>(c), s.amplitudes(i, c)});
    return t;
}

}  // namespace gwn
