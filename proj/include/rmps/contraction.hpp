#pragma once

// Projective machinery on the density-state cone: the coefficient
// m(A,B) = sup{ lambda >= 0 : lambda B <= A }, the metric
// d(A,B) = (1 - m(A,B) m(B,A)) / (1 + m(A,B) m(B,A)), the trace-normalized
// projective action, and lower-bound estimation of the contraction
// coefficient c(phi) = sup_{A,B} d(phi . A, phi . B).

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rmps/errors.hpp"
#include "rmps/matrix.hpp"
#include "rmps/rng.hpp"
#include "rmps/superoperator.hpp"

namespace rmps {

// ---------------------------------------------------------------------------
// m coefficient.
//
// For PSD A, B with B != 0:
//   * m(A,B) = 0 unless supp(B) is contained in supp(A);
//   * otherwise m(A,B) = 1 / lambda_max(A_S^{-1/2} B A_S^{-1/2}) computed on
//     the support S of A. Working on A's support keeps cross terms between
//     supp(B) and its complement inside supp(A) accounted for.
// Eigenvalues <= rank_tol * lambda_max are treated as kernel.
inline double m_coeff(const CMatrix& a_in, const CMatrix& b_in,
                      double rank_tol = kDefaultRankTol) {
    require_finite(a_in, "m_coeff A");
    require_finite(b_in, "m_coeff B");
    if (a_in.rows() != b_in.rows() || a_in.cols() != b_in.cols())
        throw DimMismatch("m_coeff: operand shapes differ");
    const CMatrix a = hermitize(a_in);
    const CMatrix b = hermitize(b_in);

    Eigen::SelfAdjointEigenSolver<CMatrix> ea(a);
    const Eigen::VectorXd av = ea.eigenvalues();
    const double a_hi = av.maxCoeff();
    if (av.minCoeff() < -10.0 * rank_tol * std::max(a_hi, 0.0) && av.minCoeff() < -1e-12)
        throw InvalidInput("m_coeff: A is not positive semidefinite");

    Eigen::SelfAdjointEigenSolver<CMatrix> eb(b);
    const Eigen::VectorXd bv = eb.eigenvalues();
    const double b_hi = bv.maxCoeff();
    if (!(b_hi > 0.0)) throw InvalidInput("m_coeff: B must be nonzero PSD");

    if (!(a_hi > 0.0)) return 0.0;  // A = 0, B != 0

    // Support basis of A.
    const double a_cut = rank_tol * a_hi;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < av.size(); ++i)
        if (av(i) > a_cut) keep.push_back(i);
    const auto r = static_cast<Eigen::Index>(keep.size());
    CMatrix u(a.rows(), r);
    Eigen::VectorXd lam(r);
    for (Eigen::Index i = 0; i < r; ++i) {
        u.col(i) = ea.eigenvectors().col(keep[i]);
        lam(i) = av(keep[i]);
    }

    // supp(B) inside supp(A)? Check the mass of B outside A's support.
    if (r < a.rows()) {
        const CMatrix bu = b - (u * (u.adjoint() * b * u) * u.adjoint());
        // residual of B restricted to the orthogonal complement
        CMatrix proj = CMatrix::Identity(a.rows(), a.cols()) - u * u.adjoint();
        const CMatrix outside = proj * b * proj;
        if (outside.cwiseAbs().maxCoeff() > rank_tol * b_hi) return 0.0;
        (void)bu;
    }

    // Whitened B on A's support.
    CMatrix w = u * lam.cwiseSqrt().cwiseInverse().asDiagonal();
    const CMatrix m = hermitize(w.adjoint() * b * w);
    const double top = hermitian_eigenvalues(m).maxCoeff();
    if (!(top > 0.0)) return 0.0;
    return 1.0 / top;
}

// d(A,B) in [0,1]; 1 exactly when one argument is interior and the other
// touches the boundary.
inline double metric_d(const DensityState& rho, const DensityState& delta,
                       double rank_tol = kDefaultRankTol) {
    const double p = m_coeff(rho.mat, delta.mat, rank_tol) * m_coeff(delta.mat, rho.mat, rank_tol);
    const double d = (1.0 - p) / (1.0 + p);
    return std::clamp(d, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Projective action: S . X = S(X)/||S(X)||_1, or nullopt when S(X) = 0.
inline std::optional<DensityState> projective_apply(const Superoperator& s, const CMatrix& x,
                                                    double rank_tol = kDefaultRankTol) {
    require_finite(x, "projective input");
    {
        const CMatrix h = hermitize(x);
        const Eigen::VectorXd ev = hermitian_eigenvalues(h);
        const double hi = ev.cwiseAbs().maxCoeff();
        if (hi > 0.0 && ev.minCoeff() < -100.0 * rank_tol * hi)
            throw InvalidInput("projective_apply: input is not PSD");
        if (!(hi > 0.0)) throw InvalidInput("projective_apply: input is zero");
    }
    const CMatrix out = hermitize(s.apply(x));
    const double tr = out.trace().real();
    // CP output of a PSD input is PSD, so the trace is its trace norm.
    const double scale = s.liouville.norm() * x.norm();
    if (!(tr > 1e-14 * std::max(scale, 1e-300))) return std::nullopt;
    DensityState d;
    d.mat = out / tr;
    d.eta = hermitian_eigenvalues(d.mat).minCoeff();
    return d;
}

// ---------------------------------------------------------------------------
// Bloch-vector fast path for D = 2. A trace-one Hermitian 2x2 matrix is
// (I + n.sigma)/2; m and d have closed forms in the Bloch vectors.
namespace bloch {

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

inline Vec3 of_state(const CMatrix& rho) {
    Vec3 v;
    v.x = 2.0 * rho(0, 1).real();
    v.y = -2.0 * rho(0, 1).imag();
    v.z = (rho(0, 0) - rho(1, 1)).real();
    return v;
}

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

// m(A,B) for Bloch vectors a, b: largest lambda with
// (1-lambda)^2 >= |a - lambda b|^2 and lambda <= 1.
inline double m_of(const Vec3& a, const Vec3& b) {
    const double aa = dot(a, a);
    const double bb = dot(b, b);
    const double ab = dot(a, b);
    const double c2 = 1.0 - bb;          // quadratic coefficient
    const double c1 = ab - 1.0;          // half the linear coefficient
    const double c0 = 1.0 - aa;          // constant term (>= 0 for states)
    constexpr double eps = 1e-14;
    if (c2 > eps) {
        const double disc = std::max(c1 * c1 - c2 * c0, 0.0);
        return std::max((-c1 - std::sqrt(disc)) / c2, 0.0);
    }
    // |b| = 1: g(lambda) = 2 c1 lambda + c0 is linear.
    if (c1 >= -eps) return (c0 <= eps) ? 1.0 : 0.0;  // a = b pure, or inconsistent
    return std::clamp(c0 / (-2.0 * c1), 0.0, 1.0);
}

inline double metric_d(const Vec3& a, const Vec3& b) {
    const double p = m_of(a, b) * m_of(b, a);
    return std::clamp((1.0 - p) / (1.0 + p), 0.0, 1.0);
}

// Applies a 4x4 Liouville matrix to the pure state |u><u| and returns the
// normalized output's Bloch vector; nullopt when the output vanishes.
inline std::optional<Vec3> push_pure(const CMatrix& liouville, const Eigen::Vector2cd& u) {
    // vec(|u><u|) with column stacking: entries u_i conj(u_j) at i + 2 j.
    Eigen::Vector4cd vin;
    vin(0) = u(0) * std::conj(u(0));
    vin(1) = u(1) * std::conj(u(0));
    vin(2) = u(0) * std::conj(u(1));
    vin(3) = u(1) * std::conj(u(1));
    const Eigen::Vector4cd vout = liouville * vin;
    const double tr = (vout(0) + vout(3)).real();
    if (!(tr > 1e-14 * liouville.norm())) return std::nullopt;
    Vec3 v;
    v.x = 2.0 * vout(2).real() / tr;  // out(0,1) lives at index 0 + 2*1
    v.y = -2.0 * vout(2).imag() / tr;
    v.z = (vout(0) - vout(3)).real() / tr;
    return v;
}

}  // namespace bloch

// ---------------------------------------------------------------------------
// Contraction coefficient estimation.

struct ContractionOptions {
    int restarts = 64;
    int iters = 200;  // coordinate-descent sweeps per restart
    double rank_tol = kDefaultRankTol;
};

enum class ContractionMethod { pure_pair_search, grid_oracle };

struct ContractionEstimate {
    double lower = 0.0;  // certified lower bound on c
    ContractionMethod method = ContractionMethod::pure_pair_search;
    int restarts = 0;
    DensityState witness_a, witness_b;  // inputs achieving `lower`
};

namespace detail {

// Evaluates d(S . |u><u|, S . |v><v|); throws KernelMeetsStates when the map
// annihilates one of the probes.
struct PairEvaluator {
    const Superoperator& s;
    double rank_tol;
    bool use_bloch;

    double eval(const CVector& u, const CVector& v) const {
        if (use_bloch) {
            const auto a = bloch::push_pure(s.liouville, Eigen::Vector2cd(u(0), u(1)));
            const auto b = bloch::push_pure(s.liouville, Eigen::Vector2cd(v(0), v(1)));
            if (!a || !b) throw KernelMeetsStates("channel annihilates a pure probe state");
            return bloch::metric_d(*a, *b);
        }
        const auto a = projective_apply(s, u * u.adjoint(), rank_tol);
        const auto b = projective_apply(s, v * v.adjoint(), rank_tol);
        if (!a || !b) throw KernelMeetsStates("channel annihilates a pure probe state");
        return metric_d(*a, *b, rank_tol);
    }
};

inline CVector unit_from_params(const Eigen::VectorXd& raw, int D) {
    CVector u(D);
    for (int i = 0; i < D; ++i) u(i) = Complex(raw(2 * i), raw(2 * i + 1));
    const double n = u.norm();
    if (n == 0.0) {
        u.setZero();
        u(0) = 1.0;
        return u;
    }
    return u / n;
}

}  // namespace detail

// Lower-bounds c(S) by maximizing d(S . |u><u|, S . |v><v|) over pure pairs
// with a derivative-free coordinate search from `restarts` random starts.
// Deterministic given the seed; the returned maximum is order-independent
// (ties broken by the lexicographically smallest parameter vector).
inline ContractionEstimate contraction_estimate(const Superoperator& s, RngSeed seed,
                                                const ContractionOptions& opt = {}) {
    const int D = s.bond_dim;
    detail::PairEvaluator ev{s, opt.rank_tol, D == 2};

    // Kernel pre-check on a handful of states (maximally mixed + pures).
    {
        RngStream rng = make_stream(seed, rng_tag::probe);
        if (!projective_apply(s, CMatrix::Identity(D, D) / double(D), opt.rank_tol))
            throw KernelMeetsStates("channel annihilates the maximally mixed state");
        for (int i = 0; i < 4; ++i) {
            const CVector v = rng.unit_vector(D);
            if (!projective_apply(s, v * v.adjoint(), opt.rank_tol))
                throw KernelMeetsStates("channel annihilates a state");
        }
    }

    const int n_params = 4 * D;  // re/im of u and v
    double best = -1.0;
    Eigen::VectorXd best_params;

    for (int r = 0; r < opt.restarts; ++r) {
        RngStream rng = make_stream(seed, rng_tag::restart, static_cast<std::uint64_t>(r));
        Eigen::VectorXd params(n_params);
        for (int i = 0; i < n_params; ++i) params(i) = rng.normal();

        auto value_of = [&](const Eigen::VectorXd& p) {
            const CVector u = detail::unit_from_params(p.head(2 * D), D);
            const CVector v = detail::unit_from_params(p.tail(2 * D), D);
            return ev.eval(u, v);
        };

        double val = value_of(params);
        double step = 0.5;
        for (int it = 0; it < opt.iters && step > 1e-8; ++it) {
            bool improved = false;
            for (int c = 0; c < n_params; ++c) {
                for (double sgn : {+1.0, -1.0}) {
                    Eigen::VectorXd trial = params;
                    trial(c) += sgn * step;
                    const double tv = value_of(trial);
                    if (tv > val + 1e-15) {
                        val = tv;
                        params = trial;
                        improved = true;
                    }
                }
            }
            if (!improved) step *= 0.5;
        }

        // Deterministic winner selection independent of restart execution order.
        if (val > best ||
            (val == best && best_params.size() &&
             std::lexicographical_compare(params.data(), params.data() + n_params,
                                          best_params.data(), best_params.data() + n_params))) {
            best = val;
            best_params = params;
        }
    }

    ContractionEstimate out;
    out.lower = std::max(best, 0.0);
    out.method = ContractionMethod::pure_pair_search;
    out.restarts = opt.restarts;
    const CVector u = detail::unit_from_params(best_params.head(2 * D), D);
    const CVector v = detail::unit_from_params(best_params.tail(2 * D), D);
    const auto a = projective_apply(s, u * u.adjoint(), opt.rank_tol);
    const auto b = projective_apply(s, v * v.adjoint(), opt.rank_tol);
    if (a && b) {
        out.witness_a = DensityState::pure(u);
        out.witness_b = DensityState::pure(v);
    }
    return out;
}

// Brute-force oracle at D = 2: maximizes d over all pairs from a grid^2-point
// Bloch-sphere discretization of pure states plus the maximally mixed state.
inline double contraction_oracle_d2(const Superoperator& s, int grid = 32,
                                    double rank_tol = kDefaultRankTol) {
    if (s.bond_dim != 2) throw InvalidInput("contraction_oracle_d2 requires bond dimension 2");
    if (grid < 8) throw InvalidInput("contraction_oracle_d2: grid must be at least 8");

    std::vector<bloch::Vec3> outs;
    outs.reserve(static_cast<std::size_t>(grid) * grid + 1);
    constexpr double pi = 3.14159265358979323846;
    for (int i = 0; i < grid; ++i) {
        const double theta = pi * (static_cast<double>(i) / (grid - 1));
        const double ct = std::cos(theta / 2), st = std::sin(theta / 2);
        for (int j = 0; j < grid; ++j) {
            const double phi = 2.0 * pi * (static_cast<double>(j) / grid);
            Eigen::Vector2cd u(Complex(ct, 0.0), Complex(st * std::cos(phi), st * std::sin(phi)));
            const auto v = bloch::push_pure(s.liouville, u);
            if (!v) throw KernelMeetsStates("channel annihilates a grid state");
            outs.push_back(*v);
        }
    }
    {
        const auto mixed = projective_apply(s, CMatrix::Identity(2, 2) * 0.5, rank_tol);
        if (!mixed) throw KernelMeetsStates("channel annihilates the maximally mixed state");
        outs.push_back(bloch::of_state(mixed->mat));
    }

    double best = 0.0;
    const std::size_t n = outs.size();
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            best = std::max(best, bloch::metric_d(outs[i], outs[j]));
    return best;
}

}  // namespace rmps
