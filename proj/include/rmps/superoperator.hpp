#pragma once

// Liouville (natural) representation of superoperators on M_D, plus the
// strict-positivity certificates used to detect positivity-improving maps.

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "rmps/errors.hpp"
#include "rmps/matrix.hpp"
#include "rmps/rng.hpp"

namespace rmps {

// A linear map M_D -> M_D stored as its D^2 x D^2 Liouville matrix.
struct Superoperator {
    int bond_dim = 0;
    CMatrix liouville;

    CMatrix apply(const CMatrix& x) const {
        if (x.rows() != bond_dim || x.cols() != bond_dim)
            throw DimMismatch("Superoperator::apply: input is not D x D");
        return devectorize(liouville * vectorize(x));
    }

    static Superoperator identity(int D) {
        return {D, CMatrix::Identity(D * D, D * D)};
    }
};

// K(phi) = sum_p conj(A_p) (x) A_p, so that K vec(rho) = vec(sum_p A_p rho A_p^dagger).
inline Superoperator liouville_of_tensor(const LocalTensor& t) {
    const int D = t.bond_dim;
    CMatrix k = CMatrix::Zero(D * D, D * D);
    for (const auto& a : t.kraus) k += kron(a.conjugate(), a);
    return {D, std::move(k)};
}

// K(O) = sum_{p,q} O_{pq} conj(A_q) (x) A_p; acts as X -> sum O_{pq} A_p X A_q^dagger.
inline Superoperator observable_liouville(const LocalTensor& t, const HermitianObservable& o) {
    if (o.dim() != t.phys_dim)
        throw DimMismatch("observable dimension " + std::to_string(o.dim()) +
                          " differs from physical dimension " + std::to_string(t.phys_dim));
    const int D = t.bond_dim;
    CMatrix k = CMatrix::Zero(D * D, D * D);
    for (int p = 0; p < t.phys_dim; ++p)
        for (int q = 0; q < t.phys_dim; ++q) {
            const Complex w = o.mat(p, q);
            if (w != Complex(0.0)) k += w * kron(t.kraus[q].conjugate(), t.kraus[p]);
        }
    return {D, std::move(k)};
}

inline Complex superop_trace(const Superoperator& s) { return s.liouville.trace(); }

inline Superoperator superop_adjoint(const Superoperator& s) {
    return {s.bond_dim, s.liouville.adjoint()};
}

// K(outer o inner) = K(outer) K(inner).
inline Superoperator superop_compose(const Superoperator& outer, const Superoperator& inner) {
    if (outer.bond_dim != inner.bond_dim)
        throw DimMismatch("superop_compose: bond dimensions differ");
    return {outer.bond_dim, outer.liouville * inner.liouville};
}

// Choi matrix by index reshuffle: J[(i,j),(k,l)] = K[(i,k),(j,l)], which for
// K = sum_r conj(K_r) (x) K_r gives J = sum_r vec(K_r) vec(K_r)^dagger.
inline CMatrix choi_matrix(const Superoperator& s) {
    const int D = s.bond_dim;
    CMatrix j(D * D, D * D);
    for (int i = 0; i < D; ++i)
        for (int jj = 0; jj < D; ++jj)
            for (int k = 0; k < D; ++k)
                for (int l = 0; l < D; ++l)
                    j(i + D * jj, k + D * l) = s.liouville(i + D * k, jj + D * l);
    return j;
}

enum class Positivity { certified_positive, certified_not, undetermined };
enum class PositivityMode { choi_sufficient, pure_sweep, combined };

inline const char* to_string(Positivity p) {
    switch (p) {
        case Positivity::certified_positive: return "certified_positive";
        case Positivity::certified_not: return "certified_not";
        default: return "undetermined";
    }
}

// Strict positivity (positivity improvement) certification for completely
// positive maps.
//
//   choi_sufficient: full Choi rank (lambda_min > tol * lambda_max) certifies
//     that the Kraus span is all of M_D, which is sufficient for strict
//     positivity. Anything less is `undetermined`, not a refutation.
//   pure_sweep: samples pure inputs |v><v| and inspects lambda_min of the
//     output; a non-positive output refutes strict positivity. Sampling can
//     only refute, never certify.
inline Positivity strict_positivity_check(const Superoperator& s, PositivityMode mode,
                                          double tol = kDefaultRankTol, int sweep_samples = 64,
                                          RngSeed seed = RngSeed{0x5eed, 0}) {
    if (!(tol > 0.0)) throw InvalidInput("strict_positivity_check: tol must be positive");

    const auto choi_verdict = [&]() -> Positivity {
        const CMatrix j = choi_matrix(s);
        const Eigen::VectorXd ev = hermitian_eigenvalues(j);
        const double hi = ev.maxCoeff();
        if (!(hi > 0.0)) return Positivity::certified_not;  // zero map
        if (ev.minCoeff() > tol * hi) return Positivity::certified_positive;
        return Positivity::undetermined;
    };

    const auto sweep_verdict = [&]() -> Positivity {
        RngStream rng = make_stream(seed, rng_tag::probe);
        for (int i = 0; i < sweep_samples; ++i) {
            const CVector v = rng.unit_vector(s.bond_dim);
            const CMatrix out = hermitize(s.apply(v * v.adjoint()));
            const Eigen::VectorXd ev = hermitian_eigenvalues(out);
            const double hi = ev.cwiseAbs().maxCoeff();
            if (ev.minCoeff() <= tol * hi) return Positivity::certified_not;
        }
        return Positivity::undetermined;
    };

    switch (mode) {
        case PositivityMode::choi_sufficient:
            return choi_verdict();
        case PositivityMode::pure_sweep:
            return sweep_verdict();
        case PositivityMode::combined: {
            const Positivity c = choi_verdict();
            if (c == Positivity::certified_positive) return c;
            const Positivity p = sweep_verdict();
            if (p == Positivity::certified_not) return p;
            return Positivity::undetermined;
        }
    }
    return Positivity::undetermined;
}

// ---------------------------------------------------------------------------
// Scale-tracked compositions. Long products of unnormalized transfer maps
// overflow/underflow; the running Liouville matrix is renormalized by its
// Frobenius norm each step and the log of the accumulated scale kept aside.
struct ScaledSuperop {
    Superoperator op;
    double log_scale = 0.0;  // true operator = op * exp(log_scale)

    static ScaledSuperop identity(int D) { return {Superoperator::identity(D), 0.0}; }

    // Composes `next` on the outside: result = next o current.
    void compose_left(const Superoperator& next) {
        op = superop_compose(next, op);
        renormalize();
    }

    // Composes `next` on the inside: result = current o next.
    void compose_right(const Superoperator& next) {
        op = superop_compose(op, next);
        renormalize();
    }

    void renormalize() {
        const double f = op.liouville.norm();
        if (!(f > 0.0)) {
            if (!all_finite(op.liouville))
                throw DegenerateChain("transfer product left the representable range");
            return;  // exact zero map stays zero
        }
        op.liouville /= f;
        log_scale += std::log(f);
    }
};

}  // namespace rmps
