#pragma once

// Samplers for strictly stationary local-tensor processes (TI, IID, finite
// pool, Markov-modulated), the entry time to strict positivity, its tail,
// the near-noncontractive mass, and exact beta-mixing coefficients for
// finite Markov modulators.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "rmps/contraction.hpp"
#include "rmps/errors.hpp"
#include "rmps/matrix.hpp"
#include "rmps/rng.hpp"
#include "rmps/superoperator.hpp"

namespace rmps {

// ---------------------------------------------------------------------------
// Marginal laws on the tensor space

struct GaussianMarginal {
    double sigma = 0.0;  // 0 means "default 1/sqrt(D)", filled at validation
};

struct ExplicitMarginal {
    LocalTensor tensor;
};

// Finite mixture of marginals (used to match a modulated ensemble's one-site law).
struct MixtureMarginal;

using Marginal = std::variant<GaussianMarginal, ExplicitMarginal, MixtureMarginal>;

struct MixtureMarginal {
    std::vector<double> weights;
    std::vector<Marginal> components;
};

enum class EnsembleKind { TI, IID, FinitePool, MarkovModulated };

inline const char* to_string(EnsembleKind k) {
    switch (k) {
        case EnsembleKind::TI: return "ti";
        case EnsembleKind::IID: return "iid";
        case EnsembleKind::FinitePool: return "finite_pool";
        default: return "markov";
    }
}

// Declared spatial rho-mixing upper bound. The library never estimates rho
// for a general process; callers declare what they are entitled to assume.
struct RhoProfile {
    enum class Kind { zero, one, from_beta };
    Kind kind = Kind::one;
    // for from_beta: rho_q = min(1, scale * beta_q^power)
    double scale = 1.0;
    double power = 1.0;
};

struct EnsembleSpec {
    EnsembleKind kind = EnsembleKind::TI;
    int phys_dim = 2;
    int bond_dim = 2;

    // TI / IID
    std::optional<Marginal> marginal;

    // FinitePool
    std::vector<LocalTensor> pool;
    std::vector<double> pool_probs;

    // MarkovModulated
    Eigen::MatrixXd transition;   // row-stochastic
    Eigen::VectorXd stationary;   // pi with pi P = pi
    std::vector<Marginal> branches;

    std::optional<RhoProfile> rho_profile;

    void validate() const;
};

// ---------------------------------------------------------------------------

struct ChainWindow {
    int first_site = 0;
    std::vector<LocalTensor> tensors;
    std::vector<int> hidden_path;  // modulator states; empty unless Markov
    RngSeed seed;

    int size() const { return static_cast<int>(tensors.size()); }
    int last_site() const { return first_site + size() - 1; }
    bool contains(int site) const { return site >= first_site && site <= last_site(); }

    const LocalTensor& at_site(int site) const {
        if (!contains(site)) throw InvalidInput("window does not cover site " + std::to_string(site));
        return tensors[static_cast<std::size_t>(site - first_site)];
    }
};

// ---------------------------------------------------------------------------
// Validation helpers

namespace detail {

inline void validate_probability_vector(const std::vector<double>& p, const char* what) {
    if (p.empty()) throw InvalidInput(std::string(what) + " is empty");
    double sum = 0.0;
    for (double x : p) {
        if (!(x >= 0.0)) throw InvalidInput(std::string(what) + " has a negative entry");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw InvalidInput(std::string(what) + " sums to " + std::to_string(sum) + ", not 1");
}

inline void validate_marginal(const Marginal& m, int phys_dim, int bond_dim);

struct MarginalValidator {
    int d, D;
    void operator()(const GaussianMarginal& g) const {
        if (g.sigma < 0.0) throw InvalidInput("gaussian sigma must be positive");
    }
    void operator()(const ExplicitMarginal& e) const {
        if (e.tensor.phys_dim != d || e.tensor.bond_dim != D)
            throw InvalidInput("explicit tensor dims (" + std::to_string(e.tensor.phys_dim) + "," +
                               std::to_string(e.tensor.bond_dim) + ") do not match spec (" +
                               std::to_string(d) + "," + std::to_string(D) + ")");
    }
    void operator()(const MixtureMarginal& mix) const {
        if (mix.weights.size() != mix.components.size())
            throw InvalidInput("mixture weights/components size mismatch");
        validate_probability_vector(mix.weights, "mixture weights");
        for (const auto& c : mix.components) validate_marginal(c, d, D);
    }
};

inline void validate_marginal(const Marginal& m, int phys_dim, int bond_dim) {
    std::visit(MarginalValidator{phys_dim, bond_dim}, m);
}

// Irreducible and aperiodic iff some power P^k, k <= m^2, is entrywise positive.
inline bool is_primitive(const Eigen::MatrixXd& p) {
    const auto m = p.rows();
    Eigen::MatrixXd power = Eigen::MatrixXd::Identity(m, m);
    for (Eigen::Index k = 1; k <= m * m; ++k) {
        power = power * p;
        if ((power.array() > 0.0).all()) return true;
    }
    return false;
}

}  // namespace detail

inline void EnsembleSpec::validate() const {
    if (phys_dim < 1 || bond_dim < 2)
        throw InvalidInput("ensemble requires phys_dim >= 1 and bond_dim >= 2");
    switch (kind) {
        case EnsembleKind::TI:
        case EnsembleKind::IID: {
            if (!marginal) throw InvalidInput("TI/IID spec needs a marginal law");
            detail::validate_marginal(*marginal, phys_dim, bond_dim);
            break;
        }
        case EnsembleKind::FinitePool: {
            if (pool.empty()) throw InvalidInput("finite pool is empty");
            if (pool.size() != pool_probs.size())
                throw InvalidInput("pool and probability vector sizes differ");
            detail::validate_probability_vector(pool_probs, "pool probabilities");
            for (const auto& t : pool)
                if (t.phys_dim != phys_dim || t.bond_dim != bond_dim)
                    throw InvalidInput("pool tensor dimensions do not match spec");
            break;
        }
        case EnsembleKind::MarkovModulated: {
            const auto m = transition.rows();
            if (m < 1 || transition.cols() != m)
                throw InvalidInput("transition matrix must be square");
            if (static_cast<Eigen::Index>(branches.size()) != m)
                throw InvalidInput("need one branch law per modulator state");
            for (Eigen::Index i = 0; i < m; ++i) {
                double row = 0.0;
                for (Eigen::Index j = 0; j < m; ++j) {
                    if (!(transition(i, j) >= 0.0))
                        throw InvalidInput("transition row " + std::to_string(i) +
                                           " has a negative entry");
                    row += transition(i, j);
                }
                if (std::abs(row - 1.0) > 1e-12)
                    throw InvalidInput("transition row " + std::to_string(i) + " sums to " +
                                       std::to_string(row) + ", not 1");
            }
            if (stationary.size() != m) throw InvalidInput("stationary vector has wrong length");
            if (std::abs(stationary.sum() - 1.0) > 1e-12)
                throw InvalidInput("stationary vector does not sum to 1");
            if ((stationary.transpose() * transition - stationary.transpose()).cwiseAbs().maxCoeff() >
                1e-10)
                throw InvalidInput("stationary vector is not invariant under the transition matrix");
            if (!detail::is_primitive(transition))
                throw InvalidInput("transition matrix is reducible or periodic");
            for (const auto& b : branches) detail::validate_marginal(b, phys_dim, bond_dim);
            break;
        }
    }
}

// Left eigenvector of P for eigenvalue 1, normalized to a distribution.
inline Eigen::VectorXd markov_stationary(const Eigen::MatrixXd& p) {
    const auto m = p.rows();
    Eigen::MatrixXd a = p.transpose() - Eigen::MatrixXd::Identity(m, m);
    // Replace one equation by the normalization sum(pi) = 1.
    Eigen::MatrixXd sys(m + 1, m);
    sys.topRows(m) = a;
    sys.row(m).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
    rhs(m) = 1.0;
    Eigen::VectorXd pi = sys.colPivHouseholderQr().solve(rhs);
    for (Eigen::Index i = 0; i < m; ++i) pi(i) = std::max(pi(i), 0.0);
    pi /= pi.sum();
    return pi;
}

// ---------------------------------------------------------------------------
// Sampling

// Per-entry complex Gaussian tensor: real and imaginary parts iid N(0, sigma^2).
inline LocalTensor gaussian_local_tensor(int d, int D, double sigma, RngStream& rng) {
    if (!(sigma > 0.0)) throw InvalidInput("gaussian_local_tensor: sigma must be positive");
    std::vector<CMatrix> ops;
    ops.reserve(d);
    for (int p = 0; p < d; ++p) {
        CMatrix a(D, D);
        for (int i = 0; i < D; ++i)
            for (int j = 0; j < D; ++j) a(i, j) = rng.complex_normal(sigma);
        ops.push_back(std::move(a));
    }
    return LocalTensor::make(std::move(ops));
}

namespace detail {

inline double default_sigma(int D) { return 1.0 / std::sqrt(static_cast<double>(D)); }

inline LocalTensor draw_marginal(const Marginal& m, int d, int D, RngStream& rng) {
    if (const auto* g = std::get_if<GaussianMarginal>(&m)) {
        const double sigma = g->sigma > 0.0 ? g->sigma : default_sigma(D);
        return gaussian_local_tensor(d, D, sigma, rng);
    }
    if (const auto* e = std::get_if<ExplicitMarginal>(&m)) return e->tensor;
    const auto& mix = std::get<MixtureMarginal>(m);
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = mix.components.size() - 1;
    for (std::size_t i = 0; i < mix.weights.size(); ++i) {
        acc += mix.weights[i];
        if (u < acc) {
            pick = i;
            break;
        }
    }
    return draw_marginal(mix.components[pick], d, D, rng);
}

inline std::size_t draw_categorical(const std::vector<double>& probs, RngStream& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

}  // namespace detail

inline LocalTensor pool_pick(const EnsembleSpec& spec, RngStream& rng) {
    return spec.pool[detail::draw_categorical(spec.pool_probs, rng)];
}

// Draws the window [first_site, first_site + length). Per-site draws are keyed
// by the absolute site index, so enlarging or shifting a window re-reads the
// same realization at shared sites; statistics over seeds are invariant under
// first_site shifts.
inline ChainWindow sample_window(const EnsembleSpec& spec, int first_site, int length,
                                 RngSeed seed) {
    if (length < 1) throw InvalidInput("sample_window: length must be >= 1");
    spec.validate();

    ChainWindow w;
    w.first_site = first_site;
    w.seed = seed;
    w.tensors.reserve(length);

    const auto site_key = [](int site) {
        return static_cast<std::uint64_t>(static_cast<std::int64_t>(site)) * 2654435761u + 12345u;
    };

    switch (spec.kind) {
        case EnsembleKind::TI: {
            RngStream rng = make_stream(seed, rng_tag::ti_tensor);
            const LocalTensor t =
                detail::draw_marginal(*spec.marginal, spec.phys_dim, spec.bond_dim, rng);
            for (int i = 0; i < length; ++i) w.tensors.push_back(t);
            break;
        }
        case EnsembleKind::IID: {
            for (int i = 0; i < length; ++i) {
                RngStream rng = make_stream(seed, rng_tag::site, site_key(first_site + i));
                w.tensors.push_back(
                    detail::draw_marginal(*spec.marginal, spec.phys_dim, spec.bond_dim, rng));
            }
            break;
        }
        case EnsembleKind::FinitePool: {
            for (int i = 0; i < length; ++i) {
                RngStream rng = make_stream(seed, rng_tag::site, site_key(first_site + i));
                w.tensors.push_back(pool_pick(spec, rng));
            }
            break;
        }
        case EnsembleKind::MarkovModulated: {
            RngStream path_rng = make_stream(seed, rng_tag::markov_path);
            const auto m = spec.transition.rows();
            std::vector<double> pi(m), row(m);
            for (Eigen::Index i = 0; i < m; ++i) pi[i] = spec.stationary(i);
            int state = static_cast<int>(detail::draw_categorical(pi, path_rng));
            w.hidden_path.reserve(length);
            for (int i = 0; i < length; ++i) {
                w.hidden_path.push_back(state);
                RngStream rng = make_stream(seed, rng_tag::site, site_key(first_site + i));
                w.tensors.push_back(detail::draw_marginal(spec.branches[state], spec.phys_dim,
                                                          spec.bond_dim, rng));
                for (Eigen::Index j = 0; j < m; ++j) row[j] = spec.transition(state, j);
                state = static_cast<int>(detail::draw_categorical(row, path_rng));
            }
            break;
        }
    }
    return w;
}

// ---------------------------------------------------------------------------
// Entry time to strict positivity and its tail

// Smallest n <= cap with phi_{n-1} o ... o phi_0 certified strictly positive
// (Choi certificate); nullopt when the cap is exceeded.
inline std::optional<int> entry_time_tau(const ChainWindow& window, int cap,
                                         double tol = kDefaultRankTol) {
    if (window.size() < cap) throw InvalidInput("entry_time_tau: window shorter than cap");
    ScaledSuperop prod = ScaledSuperop::identity(window.tensors.front().bond_dim);
    for (int n = 1; n <= cap; ++n) {
        prod.compose_left(liouville_of_tensor(window.tensors[static_cast<std::size_t>(n - 1)]));
        if (strict_positivity_check(prod.op, PositivityMode::choi_sufficient, tol) ==
            Positivity::certified_positive)
            return n;
    }
    return std::nullopt;
}

inline int default_tau_cap(int d, int D) {
    const int wielandt = static_cast<int>(std::ceil(std::log(double(D)) / std::log(double(d))));
    return 8 * std::max(wielandt, 1);
}

struct BinomialEstimate {
    double value = 0.0;
    double stderror = 0.0;
    int samples = 0;
};

// Monte Carlo estimate of Pr{tau > b}.
inline BinomialEstimate tail_estimate_f(const EnsembleSpec& spec, int b, int samples,
                                        RngSeed seed) {
    if (samples < 1) throw InvalidInput("tail_estimate_f: samples must be >= 1");
    int exceed = 0;
    for (int i = 0; i < samples; ++i) {
        const ChainWindow w =
            sample_window(spec, 0, b, derive_seed(seed, rng_tag::replica, static_cast<std::uint64_t>(i)));
        if (!entry_time_tau(w, b)) ++exceed;
    }
    BinomialEstimate out;
    out.samples = samples;
    out.value = static_cast<double>(exceed) / samples;
    out.stderror = std::sqrt(out.value * (1.0 - out.value) / samples);
    return out;
}

// Monte Carlo estimate of zeta_b(u) = sum_t Pr(tau = t and c(Phi^(t)) > 1 - 1/u).
inline BinomialEstimate zeta_estimate(const EnsembleSpec& spec, int b, int u, int samples,
                                      RngSeed seed, const ContractionOptions& copt = {}) {
    if (u < 2) throw InvalidInput("zeta_estimate: u must be >= 2");
    if (samples < 1) throw InvalidInput("zeta_estimate: samples must be >= 1");
    int hits = 0;
    for (int i = 0; i < samples; ++i) {
        const RngSeed rs = derive_seed(seed, rng_tag::replica, static_cast<std::uint64_t>(i));
        const ChainWindow w = sample_window(spec, 0, b, rs);
        const auto tau = entry_time_tau(w, b);
        if (!tau) continue;
        ScaledSuperop prod = ScaledSuperop::identity(spec.bond_dim);
        for (int k = 0; k < *tau; ++k)
            prod.compose_left(liouville_of_tensor(w.tensors[static_cast<std::size_t>(k)]));
        const double c = contraction_estimate(prod.op, derive_seed(rs, rng_tag::restart), copt).lower;
        if (c > 1.0 - 1.0 / u) ++hits;
    }
    BinomialEstimate out;
    out.samples = samples;
    out.value = static_cast<double>(hits) / samples;
    out.stderror = std::sqrt(out.value * (1.0 - out.value) / samples);
    return out;
}

// ---------------------------------------------------------------------------
// Exact beta-mixing for the hidden Markov modulator:
//   beta_n = sum_i pi_i * (1/2) sum_j |P^n(i,j) - pi_j|.
inline double markov_beta_exact(const Eigen::MatrixXd& p, const Eigen::VectorXd& pi, int n) {
    if (n < 1) throw InvalidInput("markov_beta_exact: n must be >= 1");
    const auto m = p.rows();
    if (p.cols() != m || pi.size() != m) throw InvalidInput("markov_beta_exact: shape mismatch");
    if ((pi.transpose() * p - pi.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw InvalidInput("markov_beta_exact: pi is not stationary for P");
    if (!detail::is_primitive(p))
        throw InvalidInput("markov_beta_exact: P is reducible or periodic");
    Eigen::MatrixXd pn = Eigen::MatrixXd::Identity(m, m);
    for (int k = 0; k < n; ++k) pn = pn * p;
    double beta = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        double tv = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) tv += std::abs(pn(i, j) - pi(j));
        beta += pi(i) * 0.5 * tv;
    }
    return beta;
}

// Declared rho_q upper bound for a spec (see RhoProfile).
inline double declared_rho(const EnsembleSpec& spec, int q) {
    switch (spec.kind) {
        case EnsembleKind::IID:
        case EnsembleKind::FinitePool:
            return 0.0;  // independent site draws
        case EnsembleKind::TI:
            return 1.0;
        case EnsembleKind::MarkovModulated: {
            if (!spec.rho_profile) throw MissingProfile("Markov spec has no declared rho profile");
            const RhoProfile& r = *spec.rho_profile;
            switch (r.kind) {
                case RhoProfile::Kind::zero: return 0.0;
                case RhoProfile::Kind::one: return 1.0;
                case RhoProfile::Kind::from_beta: {
                    const double beta = markov_beta_exact(spec.transition, spec.stationary, q);
                    return std::min(1.0, r.scale * std::pow(beta, r.power));
                }
            }
            return 1.0;
        }
    }
    return 1.0;
}

}  // namespace rmps
