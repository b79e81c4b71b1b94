#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "rmps/ensembles.hpp"
#include "test_support.hpp"

using namespace rmps;
using Catch::Approx;

namespace {

EnsembleSpec gaussian_spec(EnsembleKind kind, int d, int D, double sigma = 0.0) {
    EnsembleSpec s;
    s.kind = kind;
    s.phys_dim = d;
    s.bond_dim = D;
    s.marginal = GaussianMarginal{sigma};
    return s;
}

EnsembleSpec explicit_ti(const LocalTensor& t) {
    EnsembleSpec s;
    s.kind = EnsembleKind::TI;
    s.phys_dim = t.phys_dim;
    s.bond_dim = t.bond_dim;
    s.marginal = ExplicitMarginal{t};
    return s;
}

EnsembleSpec two_state_markov(double stay, std::vector<Marginal> branches, int d, int D) {
    EnsembleSpec s;
    s.kind = EnsembleKind::MarkovModulated;
    s.phys_dim = d;
    s.bond_dim = D;
    s.transition = Eigen::MatrixXd(2, 2);
    s.transition << stay, 1 - stay, 1 - stay, stay;
    s.stationary = Eigen::VectorXd::Constant(2, 0.5);
    s.branches = std::move(branches);
    return s;
}

// Exhaustive-partition beta between sigma(X_0) and sigma(X_n) for a finite
// chain: enumerates every pair of set partitions of the state space.
double beta_brute_force(const Eigen::MatrixXd& p, const Eigen::VectorXd& pi, int n) {
    const int m = static_cast<int>(p.rows());
    Eigen::MatrixXd pn = Eigen::MatrixXd::Identity(m, m);
    for (int k = 0; k < n; ++k) pn = pn * p;
    // joint(i,j) = pi_i P^n(i,j); product(i,j) = pi_i pi_j
    Eigen::MatrixXd joint(m, m), prod(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            joint(i, j) = pi(i) * pn(i, j);
            prod(i, j) = pi(i) * pi(j);
        }

    // All set partitions of {0..m-1} encoded as restricted-growth strings.
    std::vector<std::vector<int>> partitions;
    std::vector<int> code(m, 0);
    const auto emit = [&]() { partitions.push_back(code); };
    const auto max_prefix = [&](int upto) {
        int mx = -1;
        for (int i = 0; i < upto; ++i) mx = std::max(mx, code[i]);
        return mx;
    };
    // iterate restricted growth strings
    std::function<void(int)> rec = [&](int pos) {
        if (pos == m) {
            emit();
            return;
        }
        const int mx = max_prefix(pos);
        for (int v = 0; v <= mx + 1; ++v) {
            code[pos] = v;
            rec(pos + 1);
        }
    };
    rec(0);

    double best = 0.0;
    for (const auto& pa : partitions)
        for (const auto& pb : partitions) {
            const int na = *std::max_element(pa.begin(), pa.end()) + 1;
            const int nb = *std::max_element(pb.begin(), pb.end()) + 1;
            double sum = 0.0;
            for (int a = 0; a < na; ++a)
                for (int b = 0; b < nb; ++b) {
                    double pj = 0.0, pp = 0.0;
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < m; ++j)
                            if (pa[i] == a && pb[j] == b) {
                                pj += joint(i, j);
                                pp += prod(i, j);
                            }
                    sum += std::abs(pj - pp);
                }
            best = std::max(best, 0.5 * sum);
        }
    return best;
}

}  // namespace

TEST_CASE("TI windows repeat one tensor exactly") {
    const auto spec = gaussian_spec(EnsembleKind::TI, 2, 2);
    const ChainWindow w = sample_window(spec, -2, 5, {11, 0});
    REQUIRE(w.size() == 5);
    for (int i = 1; i < 5; ++i)
        for (int p = 0; p < 2; ++p)
            CHECK((w.tensors[i].kraus[p] - w.tensors[0].kraus[p]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("finite pool with one tensor is deterministic") {
    RngStream rng = make_stream({11, 1}, 0);
    EnsembleSpec s;
    s.kind = EnsembleKind::FinitePool;
    s.phys_dim = 2;
    s.bond_dim = 2;
    s.pool = {testkit::random_tensor(rng, 2, 2)};
    s.pool_probs = {1.0};
    const ChainWindow w = sample_window(s, 0, 4, {11, 2});
    for (int i = 0; i < 4; ++i)
        CHECK((w.tensors[i].kraus[0] - s.pool[0].kraus[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sampling is deterministic in the seed") {
    const auto spec = gaussian_spec(EnsembleKind::IID, 2, 2);
    const ChainWindow a = sample_window(spec, 0, 6, {42, 7});
    const ChainWindow b = sample_window(spec, 0, 6, {42, 7});
    for (int i = 0; i < 6; ++i)
        for (int p = 0; p < 2; ++p)
            CHECK((a.tensors[i].kraus[p] - b.tensors[i].kraus[p]).cwiseAbs().maxCoeff() == 0.0);
    const ChainWindow c = sample_window(spec, 0, 6, {42, 8});
    CHECK((a.tensors[0].kraus[0] - c.tensors[0].kraus[0]).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("gaussian entries have the requested moments") {
    const double sigma = 0.6;
    RngStream rng = make_stream({11, 3}, 0);
    const int draws = 100000;
    double sum = 0.0, sumsq = 0.0;
    int count = 0;
    for (int i = 0; i < draws / 8; ++i) {
        const LocalTensor t = gaussian_local_tensor(2, 2, sigma, rng);
        for (const auto& k : t.kraus)
            for (int r = 0; r < 2; ++r)
                for (int c = 0; c < 2; ++c) {
                    sum += k(r, c).real() + k(r, c).imag();
                    sumsq += k(r, c).real() * k(r, c).real() + k(r, c).imag() * k(r, c).imag();
                    count += 2;
                }
    }
    const double mean = sum / count;
    const double var = sumsq / count - mean * mean;
    CHECK(std::abs(mean) <= 4.0 * sigma / std::sqrt(double(count)));
    CHECK(var == Approx(sigma * sigma).epsilon(0.05));

    RngStream r1 = make_stream({11, 4}, 0), r2 = make_stream({11, 4}, 0);
    const LocalTensor t1 = gaussian_local_tensor(2, 3, sigma, r1);
    const LocalTensor t2 = gaussian_local_tensor(2, 3, sigma, r2);
    for (int p = 0; p < 2; ++p)
        CHECK((t1.kraus[p] - t2.kraus[p]).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(gaussian_local_tensor(2, 2, 0.0, r1), InvalidInput);
}

TEST_CASE("entry time examples") {
    const auto dep = explicit_ti(depolarizing_tensor(2));
    const ChainWindow wd = sample_window(dep, 0, 4, {11, 5});
    CHECK(entry_time_tau(wd, 4) == 1);

    RngStream rng = make_stream({11, 6}, 0);
    const auto uni = explicit_ti(single_kraus_tensor(testkit::random_unitary(rng, 2)));
    const ChainWindow wu = sample_window(uni, 0, 16, {11, 6});
    CHECK_FALSE(entry_time_tau(wu, 16).has_value());

    CHECK_THROWS_AS(entry_time_tau(wd, 10), InvalidInput);  // window shorter than cap
}

TEST_CASE("Gaussian IID d=2 D=3 enters strict positivity by the generic depth") {
    const auto spec = gaussian_spec(EnsembleKind::IID, 2, 3);
    const int cap = 4;  // 2 * ceil(log_2 3)
    int within = 0;
    const int trials = 500;
    for (int i = 0; i < trials; ++i) {
        const ChainWindow w =
            sample_window(spec, 0, cap, derive_seed({11, 7}, rng_tag::replica, i));
        const auto tau = entry_time_tau(w, cap);
        if (tau && *tau <= cap) ++within;
    }
    CHECK(within >= 499);
}

TEST_CASE("tau persistence under extension") {
    const auto spec = gaussian_spec(EnsembleKind::IID, 2, 2);
    for (int i = 0; i < 25; ++i) {
        const RngSeed rs = derive_seed({11, 8}, rng_tag::replica, i);
        const ChainWindow w = sample_window(spec, 0, 12, rs);
        const auto tau = entry_time_tau(w, 8);
        REQUIRE(tau.has_value());
        ScaledSuperop prod = ScaledSuperop::identity(2);
        for (int k = 0; k < *tau + 3; ++k) {
            prod.compose_left(liouville_of_tensor(w.tensors[k]));
            if (k + 1 >= *tau)
                REQUIRE(strict_positivity_check(prod.op, PositivityMode::choi_sufficient) ==
                        Positivity::certified_positive);
        }
    }
}

TEST_CASE("tail estimates") {
    const auto dep = explicit_ti(depolarizing_tensor(2));
    CHECK(tail_estimate_f(dep, 1, 50, {11, 9}).value == 0.0);

    RngStream rng = make_stream({11, 10}, 0);
    const auto uni = explicit_ti(single_kraus_tensor(testkit::random_unitary(rng, 2)));
    CHECK(tail_estimate_f(uni, 3, 50, {11, 10}).value == 1.0);

    const auto spec = gaussian_spec(EnsembleKind::IID, 2, 2);
    const auto est = tail_estimate_f(spec, 2, 1000, {11, 11});
    CHECK(est.value <= 0.01);
}

TEST_CASE("zeta estimates") {
    ContractionOptions copt;
    copt.restarts = 8;
    copt.iters = 60;

    const auto dep = explicit_ti(depolarizing_tensor(2));
    CHECK(zeta_estimate(dep, 2, 2, 40, {11, 12}, copt).value == 0.0);
    CHECK(zeta_estimate(dep, 2, 64, 40, {11, 12}, copt).value == 0.0);

    RngStream rng = make_stream({11, 13}, 0);
    const auto uni = explicit_ti(single_kraus_tensor(testkit::random_unitary(rng, 2)));
    CHECK(zeta_estimate(uni, 3, 4, 40, {11, 13}, copt).value == 0.0);

    // Monotone in u at fixed b, within Monte Carlo error.
    const auto ti = gaussian_spec(EnsembleKind::TI, 2, 2);
    const auto z2 = zeta_estimate(ti, 4, 2, 300, {11, 14}, copt);
    const auto z8 = zeta_estimate(ti, 4, 8, 300, {11, 14}, copt);
    CHECK(z2.value >= z8.value - 2.0 * (z2.stderror + z8.stderror));
}

TEST_CASE("markov beta exact matches brute force and the two-state closed form") {
    for (double stay : {0.6, 0.75, 0.9}) {
        Eigen::MatrixXd p(2, 2);
        p << stay, 1 - stay, 1 - stay, stay;
        Eigen::VectorXd pi = Eigen::VectorXd::Constant(2, 0.5);
        for (int n : {1, 2, 3, 5, 8}) {
            const double exact = markov_beta_exact(p, pi, n);
            CHECK(exact == Approx(std::pow(std::abs(2 * stay - 1), n) / 2.0).margin(1e-14));
            CHECK(exact == Approx(beta_brute_force(p, pi, n)).margin(1e-12));
        }
    }
}

TEST_CASE("markov beta on a random 3-state chain decays monotonically") {
    RngStream rng = make_stream({11, 15}, 0);
    Eigen::MatrixXd p(3, 3);
    for (int i = 0; i < 3; ++i) {
        double row = 0.0;
        for (int j = 0; j < 3; ++j) {
            p(i, j) = 0.2 + rng.uniform();
            row += p(i, j);
        }
        for (int j = 0; j < 3; ++j) p(i, j) /= row;
    }
    const Eigen::VectorXd pi = markov_stationary(p);
    double prev = 1.0;
    for (int n = 1; n <= 12; ++n) {
        const double b = markov_beta_exact(p, pi, n);
        CHECK(b == Approx(beta_brute_force(p, pi, n)).margin(1e-12));
        REQUIRE(b <= prev + 1e-12);
        prev = b;
    }
    CHECK(prev < 1e-3);

    // All rows equal to pi: independent, beta = 0.
    Eigen::MatrixXd indep(2, 2);
    indep << 0.3, 0.7, 0.3, 0.7;
    Eigen::VectorXd pi2(2);
    pi2 << 0.3, 0.7;
    CHECK(markov_beta_exact(indep, pi2, 3) == Approx(0.0).margin(1e-14));

    Eigen::MatrixXd periodic(2, 2);
    periodic << 0.0, 1.0, 1.0, 0.0;
    CHECK_THROWS_AS(markov_beta_exact(periodic, Eigen::VectorXd::Constant(2, 0.5), 2),
                    InvalidInput);
}

TEST_CASE("markov marginal matches the pi-mixture when rows equal pi") {
    // With P = all-rows-pi the modulator is iid, so the one-site law is the
    // pi-mixture of branch laws. Compare the mean of ||A_1||_2^2 against
    // direct mixture sampling.
    RngStream rng = make_stream({11, 16}, 0);
    EnsembleSpec mk;
    mk.kind = EnsembleKind::MarkovModulated;
    mk.phys_dim = 2;
    mk.bond_dim = 2;
    mk.transition = Eigen::MatrixXd(2, 2);
    mk.transition << 0.25, 0.75, 0.25, 0.75;
    mk.stationary = Eigen::VectorXd(2);
    mk.stationary << 0.25, 0.75;
    mk.branches = {Marginal{GaussianMarginal{0.4}}, Marginal{GaussianMarginal{1.1}}};

    EnsembleSpec mix;
    mix.kind = EnsembleKind::IID;
    mix.phys_dim = 2;
    mix.bond_dim = 2;
    MixtureMarginal mm;
    mm.weights = {0.25, 0.75};
    mm.components = {Marginal{GaussianMarginal{0.4}}, Marginal{GaussianMarginal{1.1}}};
    mix.marginal = mm;

    const int n = 10000;
    double mean_mk = 0.0, mean_mix = 0.0, sq_mk = 0.0, sq_mix = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto w1 = sample_window(mk, 0, 1, derive_seed({11, 17}, rng_tag::replica, i));
        const auto w2 = sample_window(mix, 0, 1, derive_seed({11, 18}, rng_tag::replica, i));
        const double v1 = w1.tensors[0].kraus[0].squaredNorm();
        const double v2 = w2.tensors[0].kraus[0].squaredNorm();
        mean_mk += v1;
        mean_mix += v2;
        sq_mk += v1 * v1;
        sq_mix += v2 * v2;
    }
    mean_mk /= n;
    mean_mix /= n;
    const double se = std::sqrt((sq_mk / n - mean_mk * mean_mk) / n) +
                      std::sqrt((sq_mix / n - mean_mix * mean_mix) / n);
    CHECK(std::abs(mean_mk - mean_mix) <= 4.0 * se);
}

TEST_CASE("markov windows carry an auditable hidden path") {
    RngStream rng = make_stream({11, 19}, 0);
    auto spec = two_state_markov(
        0.9, {Marginal{GaussianMarginal{0.5}}, Marginal{GaussianMarginal{1.5}}}, 2, 2);
    const ChainWindow w = sample_window(spec, 0, 64, {11, 19});
    REQUIRE(w.hidden_path.size() == 64);
    // A sticky chain should mostly stay put.
    int switches = 0;
    for (int i = 1; i < 64; ++i)
        if (w.hidden_path[i] != w.hidden_path[i - 1]) ++switches;
    CHECK(switches < 25);
}

TEST_CASE("stationarity in law across sites (Kolmogorov-Smirnov)") {
    // Two-sample KS on ||A_1||_2 at site 0 vs site 7 over many seeds,
    // threshold at significance 1e-3.
    const auto check_spec = [](const EnsembleSpec& spec, std::uint64_t salt) {
        const int n = 10000;
        std::vector<double> a, b;
        a.reserve(n);
        b.reserve(n);
        for (int i = 0; i < n; ++i) {
            const RngSeed rs = derive_seed({11, salt}, rng_tag::replica, i);
            const ChainWindow w = sample_window(spec, 0, 8, rs);
            a.push_back(schatten_norm(w.tensors[0].kraus[0], 2.0));
            b.push_back(schatten_norm(w.tensors[7].kraus[0], 2.0));
        }
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        double ks = 0.0;
        std::size_t i = 0, j = 0;
        while (i < a.size() && j < b.size()) {
            if (a[i] <= b[j]) ++i;
            else ++j;
            ks = std::max(ks, std::abs(double(i) / n - double(j) / n));
        }
        const double crit = 1.9495 * std::sqrt(2.0 / n);  // alpha = 1e-3
        CHECK(ks <= crit);
    };

    check_spec(gaussian_spec(EnsembleKind::IID, 2, 2), 20);
    check_spec(two_state_markov(
                   0.8, {Marginal{GaussianMarginal{0.5}}, Marginal{GaussianMarginal{1.5}}}, 2, 2),
               21);
}

TEST_CASE("Assumption-1 sampling check for Gaussian specs") {
    // Neither sampled transfer maps nor their adjoints annihilate I/D.
    const auto spec = gaussian_spec(EnsembleKind::IID, 2, 2);
    const CMatrix mixed = CMatrix::Identity(2, 2) * 0.5;
    for (int i = 0; i < 10000; ++i) {
        const ChainWindow w = sample_window(spec, 0, 1, derive_seed({11, 22}, rng_tag::replica, i));
        const Superoperator k = liouville_of_tensor(w.tensors[0]);
        REQUIRE(projective_apply(k, mixed).has_value());
        REQUIRE(projective_apply(superop_adjoint(k), mixed).has_value());
    }
}

TEST_CASE("spec validation rejects malformed input") {
    EnsembleSpec s = gaussian_spec(EnsembleKind::TI, 2, 2);
    s.marginal.reset();
    CHECK_THROWS_AS(s.validate(), InvalidInput);

    EnsembleSpec pool;
    pool.kind = EnsembleKind::FinitePool;
    pool.phys_dim = 2;
    pool.bond_dim = 2;
    RngStream rng = make_stream({11, 23}, 0);
    pool.pool = {testkit::random_tensor(rng, 2, 2)};
    pool.pool_probs = {0.7};
    CHECK_THROWS_AS(pool.validate(), InvalidInput);

    auto mk = two_state_markov(0.9, {Marginal{GaussianMarginal{0.5}}, Marginal{GaussianMarginal{1.5}}},
                               2, 2);
    mk.stationary(0) = 0.9;  // not stationary for symmetric P
    mk.stationary(1) = 0.1;
    CHECK_THROWS_AS(mk.validate(), InvalidInput);
}
