#pragma once

// Dense complex matrix algebra on M_D: Schatten norms, the Hilbert-Schmidt
// pairing, column-stacking vectorization, Hermitian eigenvalues, and the
// domain types (density states, observables, local tensors).
//
// Vectorization convention: vec stacks columns, so vec(A X B^T) = (B (x) A) vec X
// with the standard Kronecker product. All Liouville matrices in this library
// follow that convention; tests/test_matrix.cpp pins it on a basis so an
// alternate convention cannot slip in silently.

#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rmps/errors.hpp"

namespace rmps {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline constexpr double kDefaultRankTol = 1e-9;
inline constexpr double kHermitianTol = 1e-12;

inline bool all_finite(const CMatrix& m) {
    return m.allFinite();
}

inline void require_finite(const CMatrix& m, const char* what) {
    if (!all_finite(m)) throw InvalidInput(std::string(what) + " has non-finite entries");
}

inline void require_square(const CMatrix& m, const char* what) {
    if (m.rows() != m.cols() || m.rows() < 1)
        throw InvalidInput(std::string(what) + " must be square and non-empty");
}

// ---------------------------------------------------------------------------
// Norms and pairings

// Schatten-p norm; p = inf gives the spectral norm.
inline double schatten_norm(const CMatrix& m, double p) {
    require_finite(m, "matrix");
    if (!(p >= 1.0) && !std::isinf(p)) throw InvalidInput("schatten_norm requires p >= 1");
    Eigen::JacobiSVD<CMatrix> svd(m);
    const auto& sv = svd.singularValues();
    if (std::isinf(p)) return sv.size() ? sv(0) : 0.0;
    if (p == 1.0) return sv.sum();
    if (p == 2.0) return sv.norm();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) acc += std::pow(sv(i), p);
    return std::pow(acc, 1.0 / p);
}

inline double trace_norm(const CMatrix& m) { return schatten_norm(m, 1.0); }
inline double spectral_norm(const CMatrix& m) {
    return schatten_norm(m, std::numeric_limits<double>::infinity());
}

// <A, B> = tr(A^dagger B).
inline Complex hs_inner(const CMatrix& a, const CMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimMismatch("hs_inner: operand shapes differ");
    return a.conjugate().cwiseProduct(b).sum();
}

// ---------------------------------------------------------------------------
// Vectorization

inline CVector vectorize(const CMatrix& x) {
    require_square(x, "vectorize argument");
    const Eigen::Index d = x.rows();
    return Eigen::Map<const CVector>(x.data(), d * d);
}

inline CMatrix devectorize(const CVector& v) {
    const auto n = v.size();
    const auto d = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(n))));
    if (d * d != n) throw InvalidInput("devectorize: length is not a perfect square");
    return Eigen::Map<const CMatrix>(v.data(), d, d);
}

// Standard Kronecker product (left factor indexes the coarse blocks).
inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
    CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// ---------------------------------------------------------------------------
// Hermitian helpers

inline CMatrix hermitize(const CMatrix& m) { return 0.5 * (m + m.adjoint()); }

inline bool is_hermitian(const CMatrix& m, double rtol = kHermitianTol) {
    if (m.rows() != m.cols()) return false;
    const double scale = m.cwiseAbs().maxCoeff();
    if (scale == 0.0) return true;
    return (m - m.adjoint().eval()).cwiseAbs().maxCoeff() <= rtol * scale;
}

inline Eigen::VectorXd hermitian_eigenvalues(const CMatrix& m) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitize(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

// Smallest eigenvalue of a Hermitian matrix.
inline double min_eigenvalue(const CMatrix& m) {
    require_finite(m, "matrix");
    require_square(m, "matrix");
    if (!is_hermitian(m)) throw InvalidInput("min_eigenvalue: matrix is not Hermitian");
    return hermitian_eigenvalues(m).minCoeff();
}

// Trace norm of a Hermitian matrix via its eigenvalues (cheaper than SVD).
inline double trace_norm_hermitian(const CMatrix& m) {
    return hermitian_eigenvalues(m).cwiseAbs().sum();
}

// ---------------------------------------------------------------------------
// Domain types

// An observable in its site basis. Hermiticity is enforced on construction.
struct HermitianObservable {
    CMatrix mat;

    int dim() const { return static_cast<int>(mat.rows()); }
    double sup_norm() const { return hermitian_eigenvalues(mat).cwiseAbs().maxCoeff(); }

    static HermitianObservable make(const CMatrix& m) {
        require_finite(m, "observable");
        require_square(m, "observable");
        if (!is_hermitian(m)) throw InvalidInput("observable is not Hermitian");
        return {hermitize(m)};
    }

    static HermitianObservable identity(int d) { return {CMatrix::Identity(d, d)}; }

    static HermitianObservable pauli_z(int d = 2) {
        CMatrix m = CMatrix::Zero(d, d);
        for (int i = 0; i < d; ++i) m(i, i) = (i % 2 == 0) ? 1.0 : -1.0;
        return {m};
    }
};

// A trace-one positive semidefinite matrix.
struct DensityState {
    CMatrix mat;
    double eta = 0.0;  // smallest eigenvalue

    int dim() const { return static_cast<int>(mat.rows()); }
    bool full_rank(double rank_tol = kDefaultRankTol) const { return eta > rank_tol; }

    // Validating factory: PSD within 1e-10, trace one within 1e-10.
    static DensityState make(const CMatrix& m) {
        require_finite(m, "state");
        require_square(m, "state");
        if (!is_hermitian(m, 1e-10)) throw InvalidInput("state is not Hermitian");
        CMatrix h = hermitize(m);
        const double tr = h.trace().real();
        if (std::abs(h.trace() - Complex(1.0)) > 1e-10)
            throw InvalidInput("state trace differs from one");
        const double lo = hermitian_eigenvalues(h).minCoeff();
        if (lo < -1e-10) throw InvalidInput("state has negative eigenvalue " + std::to_string(lo));
        (void)tr;
        return {h, lo};
    }

    // For outputs of completely positive maps: hermitize, normalize the trace.
    // The caller guarantees positivity up to roundoff.
    static DensityState from_positive(const CMatrix& m) {
        CMatrix h = hermitize(m);
        const double tr = h.trace().real();
        if (!(tr > 0.0) || !all_finite(h))
            throw InvalidInput("from_positive: matrix has nonpositive trace");
        h /= tr;
        return {h, hermitian_eigenvalues(h).minCoeff()};
    }

    static DensityState maximally_mixed(int d) {
        return {CMatrix::Identity(d, d) / static_cast<double>(d), 1.0 / d};
    }

    static DensityState pure(const CVector& v) {
        const double n = v.norm();
        if (n == 0.0) throw InvalidInput("pure state from zero vector");
        CVector u = v / n;
        return {u * u.adjoint(), 0.0};
    }
};

// Site tensor: d Kraus matrices of size D x D.
struct LocalTensor {
    int phys_dim = 0;
    int bond_dim = 0;
    std::vector<CMatrix> kraus;

    static LocalTensor make(std::vector<CMatrix> ops) {
        if (ops.empty()) throw InvalidInput("local tensor needs at least one Kraus matrix");
        const auto D = ops.front().rows();
        for (const auto& k : ops) {
            require_finite(k, "Kraus matrix");
            if (k.rows() != D || k.cols() != D)
                throw InvalidInput("Kraus matrices must share one square bond dimension");
        }
        LocalTensor t;
        t.phys_dim = static_cast<int>(ops.size());
        t.bond_dim = static_cast<int>(D);
        t.kraus = std::move(ops);
        return t;
    }

    // phi(X) = sum_p A_p X A_p^dagger.
    CMatrix apply_channel(const CMatrix& x) const {
        CMatrix out = CMatrix::Zero(bond_dim, bond_dim);
        for (const auto& a : kraus) out += a * x * a.adjoint();
        return out;
    }
};

// The fully depolarizing site: Kraus {E_ij / sqrt(D)}, d = D^2.
inline LocalTensor depolarizing_tensor(int D) {
    std::vector<CMatrix> ops;
    ops.reserve(static_cast<std::size_t>(D) * D);
    const double s = 1.0 / std::sqrt(static_cast<double>(D));
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) {
            CMatrix e = CMatrix::Zero(D, D);
            e(i, j) = s;
            ops.push_back(e);
        }
    return LocalTensor::make(std::move(ops));
}

// Single-Kraus tensor (unitary conjugation when u is unitary).
inline LocalTensor single_kraus_tensor(const CMatrix& u) {
    return LocalTensor::make({u});
}

}  // namespace rmps
