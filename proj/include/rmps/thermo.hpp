#pragma once

// Thermodynamic-limit machinery: finite-chain expectations as supertrace
// ratios, boundary states by projective-limit iteration, the infinite-volume
// functional, connected two-point functions with their contraction bound,
// rank-one defect evaluation, and dynamic gauge fixing.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rmps/contraction.hpp"
#include "rmps/ensembles.hpp"
#include "rmps/errors.hpp"
#include "rmps/matrix.hpp"
#include "rmps/superoperator.hpp"

namespace rmps {

using SiteObservable = std::pair<int, HermitianObservable>;

struct BoundaryOptions {
    int max_depth = 96;
    double tol = 1e-10;
    double rank_tol = kDefaultRankTol;
};

namespace detail {

// Observable insertion for expectation chains. The pairing is fixed so that
// supertrace ratios reproduce <Psi|O|Psi>/<Psi|Psi> for the trace-closed chain
// whose amplitudes are tr(A^(m)_{p_m} ... A^(n)_{p_n}) in ascending site
// order; that requires inserting the entrywise conjugate of O (Hermitian, same
// spectrum up to conjugation, same norms). Pinned against the dense-state
// oracle in tests/test_thermo.cpp.
inline Superoperator expectation_map(const LocalTensor& t, const HermitianObservable& o) {
    return observable_liouville(t, HermitianObservable{o.mat.conjugate()});
}

inline CMatrix identity_state(int D) {
    return CMatrix::Identity(D, D) / static_cast<double>(D);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Finite-chain expectation: Tr[phi_N o ... o O_sites o ... o phi_-N] divided
// by the same product without observables. Running products are Frobenius-
// renormalized with the log scale tracked; the scales cancel in the ratio.
inline double finite_expectation(const ChainWindow& window,
                                 const std::vector<SiteObservable>& obs, int N) {
    if (!window.contains(-N) || !window.contains(N))
        throw InvalidInput("finite_expectation: window does not cover [-N, N]");
    for (const auto& [site, o] : obs) {
        if (site <= -N || site >= N)
            throw InvalidInput("finite_expectation: observable site outside (-N, N)");
        if (o.dim() != window.at_site(site).phys_dim)
            throw DimMismatch("finite_expectation: observable dimension mismatch");
    }

    const int D = window.tensors.front().bond_dim;
    ScaledSuperop num = ScaledSuperop::identity(D);
    ScaledSuperop den = ScaledSuperop::identity(D);
    for (int s = -N; s <= N; ++s) {
        const LocalTensor& t = window.at_site(s);
        const Superoperator k = liouville_of_tensor(t);
        den.compose_left(k);
        const auto it = std::find_if(obs.begin(), obs.end(),
                                     [s](const SiteObservable& so) { return so.first == s; });
        if (it != obs.end())
            num.compose_left(detail::expectation_map(t, it->second));
        else
            num.compose_left(k);
    }

    const Complex tr_num = superop_trace(num.op);
    const Complex tr_den = superop_trace(den.op);
    const double den_log10 = std::log10(std::abs(tr_den) + 1e-320) + den.log_scale / std::log(10.0);
    if (std::abs(tr_den) == 0.0 || den_log10 < -300.0)
        throw DegenerateChain("finite_expectation: chain norm underflowed");

    const Complex ratio = (tr_num / tr_den) * std::exp(num.log_scale - den.log_scale);
    return ratio.real();
}

// ---------------------------------------------------------------------------
// Boundary states

struct BoundaryStates {
    int site = 0;
    DensityState Z;   // forward projective limit, built from sites <= site
    DensityState Zp;  // backward (adjoint) limit, built from sites >= site
    int depth_used = 0;
    double residual = 0.0;          // successive-iterate gap at termination
    double cocycle_residual = 0.0;  // consistency with the neighboring limits
};

namespace detail {

struct DeepSolve {
    DensityState state;
    int depth = 0;
    double residual = 0.0;
};

// Iterates the projective product from increasing depth until two successive
// iterates differ by less than tol in trace norm.
//   forward:  Z_site^(depth)  = (phi_site o ... o phi_{site-depth+1}) . (I/D)
//   backward: Z'_site^(depth) = (phi_site^+ o ... o phi_{site+depth-1}^+) . (I/D)
inline DeepSolve projective_limit(const ChainWindow& w, int site, bool backward,
                                  const BoundaryOptions& opt) {
    const int D = w.tensors.front().bond_dim;
    const int avail = backward ? (w.last_site() - site + 1) : (site - w.first_site + 1);
    const int depth_cap = std::min(opt.max_depth, avail);
    if (depth_cap < 1)
        throw InvalidInput("boundary iteration has no sites available at site " +
                           std::to_string(site));

    ScaledSuperop prod = ScaledSuperop::identity(D);
    const CVector start = vectorize(identity_state(D));
    DensityState prev = DensityState::maximally_mixed(D);
    double residual = 0.0;
    int depth = 0;
    for (int d = 1; d <= depth_cap; ++d) {
        const int s = backward ? site + d - 1 : site - d + 1;
        Superoperator k = liouville_of_tensor(w.at_site(s));
        if (backward) k = superop_adjoint(k);
        prod.compose_right(k);

        const CMatrix out = hermitize(devectorize(prod.op.liouville * start));
        const double tr = out.trace().real();
        if (!(tr > 1e-14 * prod.op.liouville.norm()))
            throw KernelMeetsStates("boundary iteration annihilated the start state at site " +
                                    std::to_string(s));
        DensityState cur;
        cur.mat = out / tr;
        cur.eta = hermitian_eigenvalues(cur.mat).minCoeff();

        residual = trace_norm_hermitian(cur.mat - prev.mat);
        prev = cur;
        depth = d;
        if (d > 1 && residual < opt.tol) break;
    }
    if (residual >= 100.0 * opt.tol && depth == depth_cap && depth_cap == opt.max_depth)
        throw NoConvergence("boundary iteration at site " + std::to_string(site) +
                            " stalled with residual " + std::to_string(residual));
    return {prev, depth, residual};
}

}  // namespace detail

// Computes, for one site, the forward limit Z_site and backward limit Z'_site
// by independent deep solves, and reports the iterate and cocycle residuals.
inline BoundaryStates boundary_states(const ChainWindow& window, int site,
                                      const BoundaryOptions& opt = {}) {
    const auto fwd = detail::projective_limit(window, site, false, opt);
    const auto bwd = detail::projective_limit(window, site, true, opt);

    BoundaryStates out;
    out.site = site;
    out.Z = fwd.state;
    out.Zp = bwd.state;
    out.depth_used = std::max(fwd.depth, bwd.depth);
    out.residual = std::max(fwd.residual, bwd.residual);

    // Cocycle residuals against independently solved neighbors:
    //   || phi_site . Z_{site-1} - Z_site ||_1 and
    //   || phi_site^+ . Z'_{site+1} - Z'_site ||_1.
    double coc = 0.0;
    if (site - 1 >= window.first_site) {
        const auto left = detail::projective_limit(window, site - 1, false, opt);
        const auto stepped =
            projective_apply(liouville_of_tensor(window.at_site(site)), left.state.mat, opt.rank_tol);
        if (!stepped) throw KernelMeetsStates("cocycle step annihilated the forward state");
        coc = std::max(coc, trace_norm_hermitian(stepped->mat - out.Z.mat));
    }
    if (site + 1 <= window.last_site()) {
        const auto right = detail::projective_limit(window, site + 1, true, opt);
        const auto stepped = projective_apply(
            superop_adjoint(liouville_of_tensor(window.at_site(site))), right.state.mat, opt.rank_tol);
        if (!stepped) throw KernelMeetsStates("cocycle step annihilated the backward state");
        coc = std::max(coc, trace_norm_hermitian(stepped->mat - out.Zp.mat));
    }
    out.cocycle_residual = coc;
    return out;
}

// Shared boundary-state store for a window: one deep solve per flank, then
// exact cocycle propagation toward the interior.
class BoundaryCache {
public:
    BoundaryCache(const ChainWindow& window, BoundaryOptions opt = {})
        : window_(&window), opt_(opt) {}

    const DensityState& z(int site) {
        auto it = fwd_.find(site);
        if (it != fwd_.end()) return it->second;
        auto below = fwd_.lower_bound(site);
        if (below != fwd_.begin()) {
            --below;
            DensityState cur = below->second;
            for (int s = below->first + 1; s <= site; ++s) {
                const auto next =
                    projective_apply(liouville_of_tensor(window_->at_site(s)), cur.mat, opt_.rank_tol);
                if (!next)
                    throw KernelMeetsStates("forward propagation annihilated the state at site " +
                                            std::to_string(s));
                cur = *next;
                fwd_.emplace(s, cur);
            }
            return fwd_.at(site);
        }
        auto solved = detail::projective_limit(*window_, site, false, opt_);
        return fwd_.emplace(site, std::move(solved.state)).first->second;
    }

    const DensityState& zp(int site) {
        auto it = bwd_.find(site);
        if (it != bwd_.end()) return it->second;
        auto above = bwd_.upper_bound(site);
        if (above != bwd_.end()) {
            DensityState cur = above->second;
            for (int s = above->first - 1; s >= site; --s) {
                const auto next = projective_apply(
                    superop_adjoint(liouville_of_tensor(window_->at_site(s))), cur.mat, opt_.rank_tol);
                if (!next)
                    throw KernelMeetsStates("backward propagation annihilated the state at site " +
                                            std::to_string(s));
                cur = *next;
                bwd_.emplace(s, cur);
            }
            return bwd_.at(site);
        }
        auto solved = detail::projective_limit(*window_, site, true, opt_);
        return bwd_.emplace(site, std::move(solved.state)).first->second;
    }

    const ChainWindow& window() const { return *window_; }
    const BoundaryOptions& options() const { return opt_; }

private:
    const ChainWindow* window_;
    BoundaryOptions opt_;
    std::map<int, DensityState> fwd_;
    std::map<int, DensityState> bwd_;
};

// ---------------------------------------------------------------------------
// Thermodynamic-limit expectation of one or two single-site observables:
//   T(O) = <Z'_{n+1} | O_[m,n] | Z_{m-1}> / <Z'_{n+1} | Phi_[m,n] | Z_{m-1}>.
inline double thermo_expectation(BoundaryCache& cache, const std::vector<SiteObservable>& obs) {
    if (obs.empty() || obs.size() > 2)
        throw InvalidInput("thermo_expectation: need one or two site observables");
    int m = obs.front().first, n = obs.front().first;
    for (const auto& [site, o] : obs) {
        m = std::min(m, site);
        n = std::max(n, site);
        if (o.dim() != cache.window().at_site(site).phys_dim)
            throw DimMismatch("thermo_expectation: observable dimension mismatch");
    }
    if (obs.size() == 2 && obs[0].first == obs[1].first)
        throw InvalidInput("thermo_expectation: observable sites must be distinct");

    const DensityState& zl = cache.z(m - 1);
    const DensityState& zr = cache.zp(n + 1);

    const int D = cache.window().tensors.front().bond_dim;
    ScaledSuperop num = ScaledSuperop::identity(D);
    ScaledSuperop den = ScaledSuperop::identity(D);
    for (int s = m; s <= n; ++s) {
        const LocalTensor& t = cache.window().at_site(s);
        const Superoperator k = liouville_of_tensor(t);
        den.compose_left(k);
        const auto it = std::find_if(obs.begin(), obs.end(),
                                     [s](const SiteObservable& so) { return so.first == s; });
        num.compose_left(it != obs.end() ? detail::expectation_map(t, it->second) : k);
    }

    const Complex a = hs_inner(zr.mat, num.op.apply(zl.mat));
    const Complex b = hs_inner(zr.mat, den.op.apply(zl.mat));
    const double b_log10 = std::log10(std::abs(b) + 1e-320) + den.log_scale / std::log(10.0);
    if (std::abs(b) == 0.0 || b_log10 < -300.0)
        throw DegenerateChain("thermo_expectation: denominator underflowed");
    return ((a / b) * std::exp(num.log_scale - den.log_scale)).real();
}

inline double thermo_expectation(const ChainWindow& window, const std::vector<SiteObservable>& obs,
                                 const BoundaryOptions& opt = {}) {
    BoundaryCache cache(window, opt);
    return thermo_expectation(cache, obs);
}

// ---------------------------------------------------------------------------
// Connected two-point function with the 8 D c contraction bound.

struct TwoPointOptions {
    BoundaryOptions boundary{};
    ContractionOptions contraction{16, 100, kDefaultRankTol};
    RngSeed seed{0, 0};  // seeds the contraction search
};

struct TwoPointResult {
    int m = 0, n = 0;
    double f_value = 0.0;
    double c_inner = 0.0;    // contraction estimate of phi_{n-1} o ... o phi_{m+1}
    double bound_8Dc = 0.0;  // 8 D ||O_n|| ||O_m|| c_inner
    double norm_om = 0.0, norm_on = 0.0;
    bool bound_ok = true;   // f <= bound + 1e-8 after any retry
    bool escalated = false; // retried the c search with 4x restarts
};

inline TwoPointResult two_point_function(BoundaryCache& cache, SiteObservable om,
                                         SiteObservable on, const TwoPointOptions& opt = {}) {
    if (om.first >= on.first) std::swap(om, on);
    const int m = om.first, n = on.first;
    if (n - m < 2) throw InvalidInput("two_point_function: separation must be at least 2");

    const double t_mn = thermo_expectation(cache, {om, on});
    const double t_m = thermo_expectation(cache, {om});
    const double t_n = thermo_expectation(cache, {on});

    TwoPointResult r;
    r.m = m;
    r.n = n;
    r.f_value = std::abs(t_mn - t_m * t_n);
    r.norm_om = om.second.sup_norm();
    r.norm_on = on.second.sup_norm();

    const int D = cache.window().tensors.front().bond_dim;
    ScaledSuperop inner = ScaledSuperop::identity(D);
    for (int s = m + 1; s <= n - 1; ++s)
        inner.compose_left(liouville_of_tensor(cache.window().at_site(s)));

    const RngSeed cseed = derive_seed(opt.seed, rng_tag::restart,
                                      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(m)) << 32) ^
                                          static_cast<std::uint32_t>(n));
    r.c_inner = contraction_estimate(inner.op, cseed, opt.contraction).lower;
    r.bound_8Dc = 8.0 * D * r.norm_om * r.norm_on * r.c_inner;

    if (r.f_value > r.bound_8Dc + 1e-8) {
        // The c search only lower-bounds c; retry harder before reporting a
        // violation.
        ContractionOptions harder = opt.contraction;
        harder.restarts *= 4;
        r.c_inner = std::max(r.c_inner, contraction_estimate(inner.op, cseed, harder).lower);
        r.bound_8Dc = 8.0 * D * r.norm_om * r.norm_on * r.c_inner;
        r.escalated = true;
    }
    r.bound_ok = r.f_value <= r.bound_8Dc + 1e-8;
    return r;
}

inline TwoPointResult two_point_function(const ChainWindow& window, SiteObservable om,
                                         SiteObservable on, const TwoPointOptions& opt = {}) {
    BoundaryCache cache(window, opt.boundary);
    return two_point_function(cache, om, on, opt);
}

// ---------------------------------------------------------------------------
// Rank-one defect: how far the normalized product sits from the replacement
// channel X -> tr(Z'_m X) Z_n, measured in the (probe lower-bounded) 1->1 norm.

struct RankOneDefect {
    double defect = 0.0;
    double bound = 0.0;  // 8 c(phi_n o ... o phi_m)
    double c_value = 0.0;
    bool ok = true;
};

inline RankOneDefect rank_one_defect(BoundaryCache& cache, int m, int n,
                                     const TwoPointOptions& opt = {}) {
    if (m > n) std::swap(m, n);
    const int D = cache.window().tensors.front().bond_dim;

    ScaledSuperop prod = ScaledSuperop::identity(D);
    for (int s = m; s <= n; ++s)
        prod.compose_left(liouville_of_tensor(cache.window().at_site(s)));

    // tr(T^+ (I)) of the renormalized representative; scale factors cancel.
    const double norm_scalar =
        superop_adjoint(prod.op).apply(CMatrix::Identity(D, D)).trace().real();
    if (!(norm_scalar > 0.0)) throw DegenerateChain("rank_one_defect: normalizer vanished");

    const DensityState& zpm = cache.zp(m);
    const DensityState& zn = cache.z(n);

    const auto defect_of = [&](const CMatrix& x) {
        const CMatrix lhs = prod.op.apply(x) / norm_scalar;
        const CMatrix rhs = hs_inner(zpm.mat, x) * zn.mat;
        return schatten_norm(lhs - rhs, 1.0);
    };

    RngSeed pseed = derive_seed(cache.window().seed, rng_tag::probe,
                                (static_cast<std::uint64_t>(static_cast<std::uint32_t>(m)) << 32) ^
                                    static_cast<std::uint32_t>(n));
    RngStream rng = make_stream(pseed, rng_tag::probe);

    double defect = 0.0;
    // Pure-state probes (extreme points of the trace-norm ball in the
    // Hermitian cone; sign and phase multiples leave the value unchanged).
    const int pure_probes = 64;
    for (int i = 0; i < pure_probes; ++i) {
        const CVector v = rng.unit_vector(D);
        defect = std::max(defect, defect_of(v * v.adjoint()));
    }
    // Random trace-norm-one inputs, Hermitian and general.
    for (int i = 0; i < 200; ++i) {
        CMatrix x(D, D);
        for (int r = 0; r < D; ++r)
            for (int c = 0; c < D; ++c) x(r, c) = rng.complex_normal();
        if (i % 2 == 0) x = hermitize(x);
        const double tn = schatten_norm(x, 1.0);
        if (tn > 0.0) defect = std::max(defect, defect_of(x / tn));
    }
    // Rank-one u v^+ probes (extreme points of the full Schatten-1 ball).
    for (int i = 0; i < 64; ++i) {
        const CVector u = rng.unit_vector(D);
        const CVector v = rng.unit_vector(D);
        defect = std::max(defect, defect_of(u * v.adjoint()));
    }

    RankOneDefect out;
    out.defect = defect;
    const RngSeed cseed = derive_seed(pseed, rng_tag::restart);
    out.c_value = contraction_estimate(prod.op, cseed, opt.contraction).lower;
    out.bound = 8.0 * out.c_value;
    if (out.defect > out.bound + 1e-8) {
        ContractionOptions harder = opt.contraction;
        harder.restarts *= 4;
        out.c_value = std::max(out.c_value, contraction_estimate(prod.op, cseed, harder).lower);
        out.bound = 8.0 * out.c_value;
    }
    out.ok = out.defect <= out.bound + 1e-8;
    return out;
}

inline RankOneDefect rank_one_defect(const ChainWindow& window, int m, int n,
                                     const TwoPointOptions& opt = {}) {
    BoundaryCache cache(window, opt.boundary);
    return rank_one_defect(cache, m, n, opt);
}

// ---------------------------------------------------------------------------
// Dynamic gauge fixing:
//   B^(k)_i = Z'_{k+1}^{1/2} A^(k)_i Z'_k^{-1/2} / sqrt(tr(phi_k^+(Z'_{k+1}))),
// which makes every transfer map trace preserving without moving the
// infinite-volume expectations.

struct GaugedChain {
    ChainWindow original;
    int first_site = 0;  // gauged range [first_site, first_site + gauged.size())
    std::vector<LocalTensor> gauged;
    std::vector<double> normalizers;     // tr(phi_k^+(Z'_{k+1})) per site
    std::vector<double> tp_residuals;    // || phi~_k^+(I) - I ||_inf per site
    std::vector<DensityState> zprime;    // Z'_k for k in [first_site, last+1]
    std::vector<DensityState> ztilde;    // Z~_k for k in [first_site-1, last]

    ChainWindow gauged_window() const {
        ChainWindow w;
        w.first_site = first_site;
        w.tensors = gauged;
        w.seed = original.seed;
        return w;
    }
};

namespace detail {

inline CMatrix hermitian_sqrt(const CMatrix& h) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitize(h));
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().adjoint();
}

inline CMatrix hermitian_inv_sqrt(const CMatrix& h, double rank_tol) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitize(h));
    const Eigen::VectorXd ev = es.eigenvalues();
    if (ev.minCoeff() <= rank_tol)
        throw SingularGauge("inverse square root of a near-singular state");
    return es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() *
           es.eigenvectors().adjoint();
}

}  // namespace detail

inline GaugedChain gauge_fix(const ChainWindow& window, int first_site, int last_site,
                             const BoundaryOptions& opt = {}) {
    if (first_site > last_site) throw InvalidInput("gauge_fix: empty site range");
    BoundaryCache cache(window, opt);

    GaugedChain g;
    g.original = window;
    g.first_site = first_site;

    for (int k = first_site; k <= last_site + 1; ++k) {
        const DensityState& zp = cache.zp(k);
        if (zp.eta < opt.rank_tol)
            throw SingularGauge("Z' at site " + std::to_string(k) + " is rank deficient");
        g.zprime.push_back(zp);
    }

    const int D = window.tensors.front().bond_dim;
    for (int k = first_site; k <= last_site; ++k) {
        const LocalTensor& t = window.at_site(k);
        const CMatrix& zp_next = g.zprime[static_cast<std::size_t>(k - first_site + 1)].mat;
        const CMatrix& zp_here = g.zprime[static_cast<std::size_t>(k - first_site)].mat;

        double norm = 0.0;  // tr(phi_k^+(Z'_{k+1})) = sum_i tr(A_i^+ Z' A_i)
        for (const auto& a : t.kraus) norm += (a.adjoint() * zp_next * a).trace().real();
        if (!(norm > 0.0)) throw SingularGauge("gauge normalizer vanished at site " + std::to_string(k));

        const CMatrix left = detail::hermitian_sqrt(zp_next);
        const CMatrix right = detail::hermitian_inv_sqrt(zp_here, opt.rank_tol);
        const double inv_sqrt_norm = 1.0 / std::sqrt(norm);

        std::vector<CMatrix> gauged;
        gauged.reserve(t.kraus.size());
        for (const auto& a : t.kraus) gauged.push_back(inv_sqrt_norm * (left * a * right));
        LocalTensor bt = LocalTensor::make(std::move(gauged));

        // Trace-preservation certificate: phi~^+(I) = sum_i B_i^+ B_i = I.
        CMatrix acc = CMatrix::Zero(D, D);
        for (const auto& b : bt.kraus) acc += b.adjoint() * b;
        g.tp_residuals.push_back(spectral_norm(acc - CMatrix::Identity(D, D)));

        g.normalizers.push_back(norm);
        g.gauged.push_back(std::move(bt));
    }

    // Z~_k = sqrt(Z'_{k+1}) Z_k sqrt(Z'_{k+1}) / tr(Z'_{k+1} Z_k), k in [first-1, last].
    for (int k = first_site - 1; k <= last_site; ++k) {
        const DensityState& zk = cache.z(k);
        const CMatrix& zp_next = (k + 1 <= last_site + 1 && k + 1 >= first_site)
                                     ? g.zprime[static_cast<std::size_t>(k + 1 - first_site)].mat
                                     : cache.zp(k + 1).mat;
        const CMatrix root = detail::hermitian_sqrt(zp_next);
        const double denom = hs_inner(zp_next, zk.mat).real();
        if (!(denom > 0.0)) throw SingularGauge("Z~ normalizer vanished at site " + std::to_string(k));
        g.ztilde.push_back(DensityState::from_positive(root * zk.mat * root / denom));
    }

    return g;
}

}  // namespace rmps
