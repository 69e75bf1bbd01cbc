#pragma once

// Stability analysis of the explicit wave scheme through its companion
// matrix C = [[2I + tau² L, -I], [I, 0]], which advances the stacked state
// U⁽ⁿ⁾ = [X⁽ⁿ⁺¹⁾; X⁽ⁿ⁾] by one step. Everything here is measured, not assumed.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "gwn/matrix.hpp"
#include "gwn/operators.hpp"
#include "gwn/propagation.hpp"
#include "gwn/random.hpp"
#include "gwn/spectral.hpp"

namespace gwn {

inline constexpr std::size_t kCompanionNodeCap = 512;

struct CompanionMatrix {
    Matrix m;  ///< 2N x 2N
    std::size_t n = 0;
    double tau = 1.0;
};

/// Exact block assembly of the companion matrix for a fixed operator. A
/// FreqAdaptive operator is already a snapshot of its alpha weights.
inline CompanionMatrix build_companion(const Operator& op, double tau, std::size_t cap = kCompanionNodeCap) {
    if (!(tau > 0.0)) throw std::invalid_argument("build_companion: tau must be positive");
    const std::size_t n = op.size();
    if (n > cap)
        throw std::length_error("build_companion: N=" + std::to_string(n) + " exceeds cap " + std::to_string(cap));
    const Matrix l = op.dense();
    CompanionMatrix cm{Matrix(2 * n, 2 * n), n, tau};
    const double tau2 = tau * tau;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) cm.m(i, j) = tau2 * l(i, j);
        cm.m(i, i) += 2.0;
        cm.m(i, n + i) = -1.0;
        cm.m(n + i, i) = 1.0;
    }
    return cm;
}

inline Eigen::MatrixXd to_eigen(const Matrix& a) {
    Eigen::MatrixXd m(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a(i, j);
    return m;
}

/// All eigenvalues of a general real square matrix.
inline std::vector<std::complex<double>> general_eigenvalues(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("general_eigenvalues: matrix not square");
    if (a.rows() == 0) return {};
    Eigen::EigenSolver<Eigen::MatrixXd> es(to_eigen(a), /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success) throw std::runtime_error("general_eigenvalues: QR iteration did not converge");
    std::vector<std::complex<double>> out(static_cast<std::size_t>(a.rows()));
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) out[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    return out;
}

struct PowerIterationResult {
    double estimate = 0.0;
    bool converged = false;
    double residual = 0.0;  ///< ||C v - mu v|| for the signed estimate mu
    std::size_t iterations = 0;
    std::uint64_t seed = 0;
};

/// Power iteration for the dominant eigenvalue modulus. Converges only when
/// a single real eigenvalue dominates; otherwise reports non-convergence.
inline PowerIterationResult power_iteration(const Matrix& a, std::size_t max_iter = 1000, double tol = 1e-8,
                                            std::uint64_t seed = 0) {
    const std::size_t n = a.rows();
    PowerIterationResult r;
    r.seed = seed;
    if (n == 0) return r;
    Rng rng(seed);
    std::normal_distribution<double> normal;
    Matrix v(n, 1);
    for (double& x : v.values()) x = normal(rng);
    v *= 1.0 / frobenius_norm(v);
    double prev = 0.0;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        Matrix w = matmul(a, v);
        const double nrm = frobenius_norm(w);
        r.iterations = it;
        if (!(nrm > 0.0) || !std::isfinite(nrm)) {
            r.estimate = nrm;
            r.converged = nrm == 0.0;
            return r;
        }
        const double rayleigh = dot(v, w);
        w *= 1.0 / nrm;
        Matrix resid = matmul(a, w);
        resid.axpy(-(rayleigh >= 0 ? nrm : -nrm), w);
        r.residual = frobenius_norm(resid);
        r.estimate = nrm;
        v = std::move(w);
        if (it > 1 && std::abs(nrm - prev) <= tol * nrm && r.residual <= std::sqrt(tol) * nrm) {
            r.converged = true;
            return r;
        }
        prev = nrm;
    }
    return r;
}

struct SpectralRadiusResult {
    double rho = 0.0;  ///< from the dense eigensolve
    PowerIterationResult power;
};

/// rho(C) by dense nonsymmetric eigensolve, cross-checked by power iteration.
inline SpectralRadiusResult estimate_spectral_radius(const CompanionMatrix& cm, std::uint64_t seed = 0) {
    SpectralRadiusResult r;
    for (const auto& ev : general_eigenvalues(cm.m)) r.rho = std::max(r.rho, std::abs(ev));
    r.power = power_iteration(cm.m, 1000, 1e-8, seed);
    return r;
}

inline double spectral_radius(const CompanionMatrix& cm) { return estimate_spectral_radius(cm).rho; }

/// Both roots of lambda² - lambda' lambda + 1 = 0, larger modulus first.
inline std::pair<std::complex<double>, std::complex<double>> root_locus(double lambda_prime) {
    if (!std::isfinite(lambda_prime)) throw std::invalid_argument("root_locus: non-finite input");
    const double disc = lambda_prime * lambda_prime - 4.0;
    if (disc < 0.0) {
        const double im = 0.5 * std::sqrt(-disc);
        return {{0.5 * lambda_prime, im}, {0.5 * lambda_prime, -im}};
    }
    // Cancellation-free pair: the large root by the quadratic formula, the
    // small one by Vieta's product.
    const double big = 0.5 * (lambda_prime + std::copysign(std::sqrt(disc), lambda_prime));
    return {{big, 0.0}, {1.0 / big, 0.0}};
}

/// max |root| of the characteristic quadratic for operator eigenvalue lambda.
inline double modal_radius(double lambda, double tau) {
    return std::abs(root_locus(2.0 + tau * tau * lambda).first);
}

// ---------------------------------------------------------------------------
// Extremal operator eigenvalues

struct EigInterval {
    double min = 0.0;
    double max = 0.0;
    double residual_min = 0.0;
    double residual_max = 0.0;
    std::string method;  ///< "dense", "lanczos" or "general-real-part"
};

/// Lanczos with full reorthogonalization; returns extremal Ritz values with
/// residual bounds beta_m |s_mi|.
inline EigInterval lanczos_extremal(const Operator& op, double tol = 1e-6, std::size_t max_iter = 400,
                                    std::uint64_t seed = 0) {
    const std::size_t n = op.size();
    Rng rng(seed);
    std::normal_distribution<double> normal;
    std::vector<Matrix> q;
    Matrix v(n, 1);
    for (double& x : v.values()) x = normal(rng);
    v *= 1.0 / frobenius_norm(v);
    std::vector<double> alpha, beta;
    EigInterval out;
    out.method = "lanczos";
    const std::size_t m_max = std::min(n, max_iter);
    for (std::size_t j = 0; j < m_max; ++j) {
        q.push_back(v);
        Matrix w = op.apply(q.back());
        const double a = dot(q.back(), w);
        alpha.push_back(a);
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& qi : q) w.axpy(-dot(qi, w), qi);
        const double b = frobenius_norm(w);

        const auto ed = tridiagonal_eigensolve(alpha, beta);
        const std::size_t m = alpha.size();
        out.min = ed.eigenvalues.front();
        out.max = ed.eigenvalues.back();
        out.residual_min = b * std::abs(ed.eigenvectors(m - 1, 0));
        out.residual_max = b * std::abs(ed.eigenvectors(m - 1, m - 1));
        if ((out.residual_min <= tol && out.residual_max <= tol) || b <= 1e-14) return out;
        beta.push_back(b);
        v = std::move(w);
        v *= 1.0 / b;
    }
    if (q.size() < n) throw std::runtime_error("lanczos_extremal: no convergence, residuals " +
                                               std::to_string(out.residual_min) + ", " +
                                               std::to_string(out.residual_max));
    return out;
}

/// Extremal eigenvalues of the operator (real parts for non-symmetric kinds).
inline EigInterval operator_eig_interval(const Operator& op, std::size_t dense_cap = kDenseNodeCap) {
    EigInterval out;
    if (op.size() == 0) return out;
    if (!op.symmetric()) {
        if (op.size() > kCompanionNodeCap * 2)
            throw std::length_error("operator_eig_interval: non-symmetric operator too large for dense solve");
        out.min = std::numeric_limits<double>::infinity();
        out.max = -out.min;
        for (const auto& ev : general_eigenvalues(op.dense())) {
            out.min = std::min(out.min, ev.real());
            out.max = std::max(out.max, ev.real());
        }
        out.method = "general-real-part";
        return out;
    }
    if (op.size() <= dense_cap) {
        const auto ed = symmetric_eigensolve(op.dense());
        out.min = ed.eigenvalues.front();
        out.max = ed.eigenvalues.back();
        out.method = "dense";
        return out;
    }
    return lanczos_extremal(op);
}

// ---------------------------------------------------------------------------
// Growth scan

enum class StabilityVerdict { UnitModulus, Growing, Decaying };

inline const char* to_string(StabilityVerdict v) noexcept {
    switch (v) {
        case StabilityVerdict::UnitModulus: return "UnitModulus";
        case StabilityVerdict::Growing: return "Growing";
        case StabilityVerdict::Decaying: return "Decaying";
    }
    return "?";
}

struct StabilityReport {
    double tau = 1.0;
    double eig_min = 0.0;
    double eig_max = 0.0;
    double rho = 0.0;
    std::vector<double> growth_curve;  ///< ||U⁽ᵏ⁾|| / ||U⁽⁰⁾||, k = 1..steps
    double growth_constant = 0.0;      ///< max of growth_curve
    double growth_rate = 1.0;          ///< exp of the least-squares log-slope over the second half
    StabilityVerdict verdict = StabilityVerdict::UnitModulus;
    bool saturated = false;
    std::size_t steps = 0;
    std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const StabilityReport& r) {
    auto finite_or_null = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nullptr; };
    return nlohmann::json{{"tau", r.tau},
                          {"eig_min", r.eig_min},
                          {"eig_max", r.eig_max},
                          {"rho", finite_or_null(r.rho)},
                          {"growth_constant", finite_or_null(r.growth_constant)},
                          {"verdict", to_string(r.verdict)},
                          {"steps", r.steps},
                          {"seed", r.seed}};
}

struct GrowthScanOptions {
    double grow_tol = 1e-6;     ///< growth_constant above 1 + grow_tol counts as growth
    double rate_tol = 5e-3;     ///< geometric growth needs growth_rate above 1 + rate_tol
    double saturation = 1e300;  ///< norms beyond this stop the iteration
};

namespace detail {
inline double log_slope(const std::vector<double>& curve) {
    const std::size_t k = curve.size();
    if (k < 2) return 0.0;
    const std::size_t lo = k / 2;
    double sx = 0, sy = 0, sxx = 0, sxy = 0, cnt = 0;
    for (std::size_t i = lo; i < k; ++i) {
        const double x = static_cast<double>(i + 1);
        const double y = std::log(curve[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        cnt += 1;
    }
    const double den = cnt * sxx - sx * sx;
    return den > 0 ? (cnt * sxy - sx * sy) / den : 0.0;
}
}  // namespace detail

/// Iterates the zero-velocity explicit scheme from a random unit-norm stacked
/// state for each tau and records the norm growth.
inline std::vector<StabilityReport> growth_scan(const Operator& op, const std::vector<double>& tau_list,
                                                std::size_t steps, std::uint64_t seed,
                                                const GrowthScanOptions& opts = {}) {
    if (steps < 1) throw std::invalid_argument("growth_scan: steps must be >= 1");
    const EigInterval interval = operator_eig_interval(op);
    std::vector<StabilityReport> out;
    out.reserve(tau_list.size());
    for (double tau : tau_list) {
        if (!(tau > 0.0)) throw std::invalid_argument("growth_scan: tau must be positive");
        StabilityReport r;
        r.tau = tau;
        r.eig_min = interval.min;
        r.eig_max = interval.max;
        r.steps = steps;
        r.seed = seed;
        if (op.size() <= kCompanionNodeCap) {
            r.rho = spectral_radius(build_companion(op, tau));
        } else {
            r.rho = std::max(modal_radius(interval.min, tau), modal_radius(interval.max, tau));
        }

        Rng rng(seed);
        std::normal_distribution<double> normal;
        FeatureMatrix x0(op.size(), 1);
        for (double& v : x0.values()) v = normal(rng);
        const FeatureMatrix zero(op.size(), 1);
        WaveState s = init_state(x0, zero, op, tau);
        const double n0 = std::sqrt(dot(s.curr, s.curr) + dot(s.prev, s.prev));
        if (n0 > 0.0) {
            s.curr *= 1.0 / n0;
            s.prev *= 1.0 / n0;
            s.x0 *= 1.0 / n0;
        }

        r.growth_curve.reserve(steps);
        for (std::size_t k = 0; k < steps; ++k) {
            if (!r.saturated) {
                s = wave_step_sym(s, op);
                const double nk = std::sqrt(dot(s.curr, s.curr) + dot(s.prev, s.prev));
                if (!std::isfinite(nk) || nk > opts.saturation) r.saturated = true;
                else r.growth_curve.push_back(nk);
            }
            if (r.saturated) r.growth_curve.push_back(std::numeric_limits<double>::infinity());
        }
        r.growth_constant = *std::max_element(r.growth_curve.begin(), r.growth_curve.end());

        if (r.saturated) {
            r.growth_rate = std::numeric_limits<double>::infinity();
            r.verdict = StabilityVerdict::Growing;
        } else {
            r.growth_rate = std::exp(detail::log_slope(r.growth_curve));
            if (r.growth_constant > 1.0 + opts.grow_tol && r.growth_rate > 1.0 + opts.rate_tol)
                r.verdict = StabilityVerdict::Growing;
            else if (r.growth_constant < 1.0 - opts.grow_tol && r.growth_rate < 1.0 - opts.rate_tol)
                r.verdict = StabilityVerdict::Decaying;
            else
                r.verdict = StabilityVerdict::UnitModulus;
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace gwn
