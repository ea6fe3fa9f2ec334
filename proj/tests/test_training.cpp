#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pbrt/errors.hpp"
#include "pbrt/simgen.hpp"
#include "pbrt/training.hpp"

using namespace pbrt;

namespace {

double max_abs(const Matrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

struct Stacked {
    Matrix x;
    Vector y;
    std::vector<Matrix> x_blocks;
};

Stacked stack(const TrainingSet& ts) {
    Stacked s;
    s.x = Matrix(static_cast<Eigen::Index>(ts.num_observations()), ts.spec.p());
    s.y = Vector(s.x.rows());
    Eigen::Index row = 0;
    for (const auto& [id, obs] : ts.drivers) {
        const Design d = build_design(ts.spec, obs);
        s.x.middleRows(row, d.x.rows()) = d.x;
        s.y.segment(row, d.y.size()) = d.y;
        s.x_blocks.push_back(d.x);
        row += d.x.rows();
    }
    return s;
}

/// Whole-matrix V for the stacked data.
Matrix dense_v(const Stacked& s, double sigma2, const Matrix& sigma_gamma) {
    Matrix v = Matrix::Zero(s.x.rows(), s.x.rows());
    Eigen::Index row = 0;
    for (const auto& xb : s.x_blocks) {
        v.block(row, row, xb.rows(), xb.rows()) = xb * sigma_gamma * xb.transpose();
        row += xb.rows();
    }
    v.diagonal().array() += sigma2;
    return v;
}

/// Dense GLS ignoring block structure.
std::pair<Vector, Matrix> dense_gls(const Stacked& s, const Matrix& v) {
    const Matrix vinv = oracle::gauss_jordan_inverse(v);
    const Matrix info = s.x.transpose() * vinv * s.x;
    const Matrix cov = oracle::gauss_jordan_inverse(info);
    return {cov * s.x.transpose() * vinv * s.y, cov};
}

/// Small simulated training set with all parameters randomized.
TrainingSet random_training_set(std::mt19937_64& rng, int drivers, int max_per_stimulus) {
    SimConfig cfg = default_config();
    cfg.num_drivers = drivers;
    std::uniform_int_distribution<int> count(1, max_per_stimulus);
    cfg.obs_per_driver = {count(rng), count(rng), count(rng)};
    cfg.seed = rng();
    return generate(cfg).training;
}

VarianceParams random_params(std::mt19937_64& rng, int p) {
    std::normal_distribution<double> nd(0.0, 1.0);
    VarianceParams vp;
    vp.log_sigma = std::log(0.2) + 0.3 * nd(rng);
    vp.chol_factor = Matrix::Zero(p, p);
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < i; ++j) {
            vp.chol_factor(i, j) = 0.03 * nd(rng);
        }
        vp.chol_factor(i, i) = std::log(0.05) + 0.5 * nd(rng);
    }
    return vp;
}

}  // namespace

TEST_CASE("marginal_cov") {
    std::mt19937_64 rng(11);
    SUBCASE("zero random effects give sigma2 I") {
        const Matrix x = oracle::random_matrix(rng, 5, 9);
        const SymMatrix v = marginal_cov(x, 1.0, SymMatrix::zero(9));
        CHECK(max_abs(v.matrix() - Matrix::Identity(5, 5)) == 0.0);
    }
    SUBCASE("identity design") {
        const Matrix s = oracle::random_spd(rng, 9, 10.0, 0.1);
        const SymMatrix v = marginal_cov(Matrix::Identity(9, 9), 0.5, SymMatrix(s));
        Matrix expected = s;
        expected.diagonal().array() += 0.5;
        CHECK(max_abs(v.matrix() - expected) < 1e-15);
    }
    SUBCASE("matches the element-wise triple product") {
        const Matrix x = oracle::random_matrix(rng, 4, 9);
        const Matrix s = oracle::random_spd(rng, 9, 5.0, 0.2);
        const SymMatrix v = marginal_cov(x, 0.3, SymMatrix(s));
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
                double acc = i == j ? 0.3 : 0.0;
                for (int a = 0; a < 9; ++a) {
                    for (int b = 0; b < 9; ++b) {
                        acc += x(i, a) * s(a, b) * x(j, b);
                    }
                }
                CHECK(std::abs(v(i, j) - acc) < 1e-10);
            }
        }
    }
    SUBCASE("parameterized form checks the column count") {
        const VarianceParams vp = random_params(rng, 9);
        CHECK_THROWS_AS(marginal_cov(ModelSpec{3, 2}, Matrix::Zero(2, 6), vp), InvalidInput);
        const Matrix x = oracle::random_matrix(rng, 3, 9);
        const SymMatrix a = marginal_cov(ModelSpec{3, 2}, x, vp);
        const SymMatrix b = marginal_cov(x, vp.sigma2(), vp.sigma_gamma());
        CHECK(max_abs(a.matrix() - b.matrix()) == 0.0);
    }
}

TEST_CASE("VarianceParams keeps Sigma_gamma PSD for arbitrary coordinates") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> nd(0.0, 3.0);
    for (int rep = 0; rep < 50; ++rep) {
        VarianceParams vp;
        vp.log_sigma = nd(rng);
        vp.chol_factor = oracle::random_matrix(rng, 9, 9) * 3.0;
        CHECK(is_psd(vp.sigma_gamma(), 1e-10));
        CHECK(vp.sigma2() > 0.0);
    }
    const Matrix s = oracle::random_spd(rng, 4, 3.0, 0.5);
    const VarianceParams back = VarianceParams::from_covariances(0.7, SymMatrix(s));
    CHECK(back.sigma2() == doctest::Approx(0.7));
    CHECK(max_abs(back.sigma_gamma().matrix() - s) < 1e-12);
}

TEST_CASE("gls_beta") {
    std::mt19937_64 rng(13);
    SUBCASE("identity covariance reduces to OLS") {
        const Matrix x = oracle::random_matrix(rng, 12, 4);
        const Vector y = oracle::random_matrix(rng, 12, 1);
        const std::vector<SymMatrix> blocks{SymMatrix::identity(5), SymMatrix::identity(7)};
        const GlsResult r = gls_beta(x, y, blocks);
        const Matrix xtx_inv = oracle::gauss_jordan_inverse(x.transpose() * x);
        CHECK(max_abs(r.beta - xtx_inv * x.transpose() * y) < 1e-10);
        CHECK(max_abs(r.beta_cov.matrix() - xtx_inv) < 1e-10);
    }
    SUBCASE("mean of two points") {
        const Matrix x = Matrix::Ones(2, 1);
        Vector y(2);
        y << 2, 4;
        const std::vector<SymMatrix> blocks{SymMatrix::identity(1), SymMatrix::identity(1)};
        const GlsResult r = gls_beta(x, y, blocks);
        CHECK(r.beta(0) == doctest::Approx(3.0).epsilon(1e-14));
        CHECK(r.beta_cov(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
    }
    SUBCASE("matches the dense whole-matrix oracle") {
        for (int rep = 0; rep < 5; ++rep) {
            const TrainingSet ts = random_training_set(rng, 6, 4);
            const VarianceParams vp = random_params(rng, 9);
            const Stacked s = stack(ts);
            std::vector<SymMatrix> blocks;
            for (const auto& xb : s.x_blocks) {
                blocks.push_back(marginal_cov(xb, vp.sigma2(), vp.sigma_gamma()));
            }
            const GlsResult r = gls_beta(s.x, s.y, blocks);
            const auto [beta, cov] = dense_gls(s, dense_v(s, vp.sigma2(), vp.sigma_gamma()));
            CHECK(max_abs(r.beta - beta) < 1e-9);
            CHECK(max_abs(r.beta_cov.matrix() - cov) < 1e-9 * std::max(1.0, max_abs(cov)));
        }
    }
    SUBCASE("invariant under driver reordering") {
        const TrainingSet ts = random_training_set(rng, 8, 5);
        const VarianceParams vp = random_params(rng, 9);
        std::vector<std::pair<Matrix, Vector>> per_driver;
        for (const auto& [id, obs] : ts.drivers) {
            const Design d = build_design(ts.spec, obs);
            per_driver.emplace_back(d.x, d.y);
        }
        auto solve = [&](const std::vector<std::pair<Matrix, Vector>>& order) {
            Eigen::Index n = 0;
            for (const auto& e : order) {
                n += e.first.rows();
            }
            Matrix x(n, 9);
            Vector y(n);
            std::vector<SymMatrix> blocks;
            Eigen::Index row = 0;
            for (const auto& [xb, yb] : order) {
                x.middleRows(row, xb.rows()) = xb;
                y.segment(row, yb.size()) = yb;
                blocks.push_back(marginal_cov(xb, vp.sigma2(), vp.sigma_gamma()));
                row += xb.rows();
            }
            return gls_beta(x, y, blocks).beta;
        };
        const Vector base = solve(per_driver);
        for (int rep = 0; rep < 5; ++rep) {
            std::shuffle(per_driver.begin(), per_driver.end(), rng);
            CHECK(max_abs(solve(per_driver) - base) < 1e-9);
        }
    }
    SUBCASE("a stimulus with no rows leaves a rank-deficient but finite solution") {
        const Matrix x = oracle::random_matrix(rng, 6, 3);
        Matrix padded = Matrix::Zero(6, 6);
        padded.leftCols(3) = x;
        const Vector y = oracle::random_matrix(rng, 6, 1);
        const std::vector<SymMatrix> blocks{SymMatrix::identity(6)};
        const GlsResult r = gls_beta(padded, y, blocks);
        CHECK(r.beta.tail(3).cwiseAbs().maxCoeff() == 0.0);
        CHECK(r.beta.allFinite());
    }
    SUBCASE("blocks must cover the rows") {
        const std::vector<SymMatrix> blocks{SymMatrix::identity(2)};
        CHECK_THROWS_AS(gls_beta(Matrix::Ones(3, 1), Vector::Ones(3), blocks), InvalidInput);
    }
}

TEST_CASE("log_likelihood") {
    std::mt19937_64 rng(14);
    SUBCASE("standard normal density at zero") {
        TrainingSet ts;
        ts.spec = ModelSpec{1, 0};
        ts.stimuli = StimulusRegistry::anonymous(1);
        ts.drivers["a"] = {{"a", 0, 1.0, 2.0}};
        const auto vp = VarianceParams::from_covariances(1.0, SymMatrix::zero(1));
        CHECK(log_likelihood(ts, vp) ==
              doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
    }
    SUBCASE("doubling sigma with zero residuals lowers the value") {
        TrainingSet ts;
        ts.spec = ModelSpec{1, 0};
        ts.stimuli = StimulusRegistry::anonymous(1);
        ts.drivers["a"] = {{"a", 0, 1.0, 2.0}, {"a", 0, 2.0, 2.0}};
        ts.drivers["b"] = {{"b", 0, 1.0, 2.0}};
        const SymMatrix s(Matrix::Constant(1, 1, 0.1));
        double prev = log_likelihood(ts, VarianceParams::from_covariances(0.25, s));
        for (double sigma : {1.0, 2.0, 4.0}) {
            const double next = log_likelihood(ts, VarianceParams::from_covariances(sigma * sigma, s));
            CHECK(next < prev);
            prev = next;
        }
    }
    SUBCASE("matches the dense multivariate normal oracle") {
        for (int rep = 0; rep < 8; ++rep) {
            const TrainingSet ts = random_training_set(rng, 5, 4);
            const VarianceParams vp = random_params(rng, 9);
            const Stacked s = stack(ts);
            const Matrix v = dense_v(s, vp.sigma2(), vp.sigma_gamma());
            const Vector beta = dense_gls(s, v).first;
            const double expected = oracle::mvn_log_density(s.y, s.x * beta, v);
            CHECK(std::abs(log_likelihood(ts, vp) - expected) < 1e-8);
        }
    }
    SUBCASE("GLS beta maximizes the joint density for fixed variances") {
        const TrainingSet ts = random_training_set(rng, 6, 4);
        const VarianceParams vp = random_params(rng, 9);
        const Stacked s = stack(ts);
        const Matrix v = dense_v(s, vp.sigma2(), vp.sigma_gamma());
        const Vector beta = dense_gls(s, v).first;
        const double at_gls = oracle::mvn_log_density(s.y, s.x * beta, v);
        CHECK(std::abs(log_likelihood(ts, vp) - at_gls) < 1e-8);
        std::normal_distribution<double> nd(0.0, 0.05);
        for (int k = 0; k < 20; ++k) {
            Vector moved = beta;
            for (Eigen::Index i = 0; i < moved.size(); ++i) {
                moved(i) += nd(rng);
            }
            CHECK(oracle::mvn_log_density(s.y, s.x * moved, v) <= at_gls + 1e-10);
        }
    }
}

TEST_CASE("fit without random effects") {
    SimConfig cfg = default_config();
    cfg.sigma_gamma_true = SymMatrix::zero(9);
    cfg.num_drivers = 100;
    cfg.obs_per_driver = {7, 7, 6};
    cfg.seed = 5;
    const SimResult sim = generate(cfg);
    const TrainedModel m = fit(sim.training);
    CHECK(m.fit_info.converged);
    CHECK(std::abs(m.sigma2 - cfg.sigma2_true) <= 0.15 * cfg.sigma2_true);
    // 45 covariance parameters from 100 drivers overfit a little; what matters
    // is the implied between-driver spread at a typical headway.
    for (int s = 0; s < 3; ++s) {
        const Vector w = feature_row(cfg.spec, s, kDefaultTStar);
        CHECK(w.dot(m.sigma_gamma.matrix() * w) <= 0.25 * cfg.sigma2_true);
    }

    const auto truth = VarianceParams::from_covariances(cfg.sigma2_true, cfg.sigma_gamma_true);
    CHECK(m.fit_info.loglik >= log_likelihood(sim.training, truth));
    CHECK(m.fit_info.loglik ==
          doctest::Approx(log_likelihood(sim.training, VarianceParams::from_covariances(
                                                           m.sigma2, m.sigma_gamma)))
              .epsilon(1e-9));
}

TEST_CASE("fit is deterministic for a seed and honors the block-diagonal option") {
    SimConfig cfg = default_config();
    cfg.num_drivers = 15;
    cfg.obs_per_driver = {4, 4, 4};
    cfg.seed = 99;
    const SimResult sim = generate(cfg);
    FitOptions opts;
    opts.max_iterations = 1500;
    opts.restarts = 1;
    opts.seed = 17;
    const TrainedModel a = fit(sim.training, opts);
    const TrainedModel b = fit(sim.training, opts);
    CHECK(a.beta == b.beta);
    CHECK(a.sigma2 == b.sigma2);
    CHECK(a.sigma_gamma.matrix() == b.sigma_gamma.matrix());
    CHECK(a.beta_cov.matrix() == b.beta_cov.matrix());
    CHECK(a.fit_info.iterations == b.fit_info.iterations);
    CHECK(a.fit_info.seed == 17);

    opts.block_diagonal = true;
    const TrainedModel blk = fit(sim.training, opts);
    for (int i = 0; i < 9; ++i) {
        for (int j = 0; j < 9; ++j) {
            if (i / 3 != j / 3) {
                CHECK(blk.sigma_gamma(i, j) == 0.0);
            }
        }
    }
    CHECK(is_psd(blk.sigma_gamma, 1e-10));
}

TEST_CASE("fit flags exhausted iteration budgets") {
    SimConfig cfg = default_config();
    cfg.num_drivers = 10;
    cfg.obs_per_driver = {3, 3, 3};
    const SimResult sim = generate(cfg);
    FitOptions opts;
    opts.max_iterations = 20;
    opts.restarts = 0;
    const TrainedModel m = fit(sim.training, opts);
    CHECK_FALSE(m.fit_info.converged);
    CHECK(m.beta.allFinite());
}

TEST_CASE("training set validation") {
    TrainingSet ts;
    ts.spec = ModelSpec{3, 2};
    ts.stimuli = StimulusRegistry::default_registry();
    ts.drivers["a"] = {{"a", 0, 1.0, 1.0}};
    CHECK_THROWS_WITH_AS(ts.validate(), "at least 2 drivers required", InvalidInput);
    ts.drivers["b"] = {};
    CHECK_THROWS_AS(ts.validate(), InvalidInput);
    ts.drivers["b"] = {{"a", 0, 1.0, 1.0}};
    CHECK_THROWS_AS(ts.validate(), InvalidInput);
    ts.drivers["b"] = {{"b", 0, 1.0, 1.0}};
    CHECK_NOTHROW(ts.validate());
}

TEST_CASE("parameter recovery with 200 drivers and 30 events each" * doctest::timeout(900)) {
    SimConfig cfg = default_config();
    cfg.seed = 20240601;
    const SimResult sim = generate(cfg);
    const TrainedModel m = fit(sim.training);
    CHECK(m.fit_info.converged);
    // Errors measured in units of the reported standard error; quadratic
    // coordinates carry 3-6% relative sampling error at this design size.
    for (Eigen::Index i = 0; i < cfg.beta_true.size(); ++i) {
        const double z = (m.beta(i) - cfg.beta_true(i)) / std::sqrt(m.beta_cov(i, i));
        INFO("beta[" << i << "] z-score " << z);
        CHECK(std::abs(z) <= 4.0);
    }
    CHECK(std::abs(m.sigma2 - cfg.sigma2_true) <= 0.10 * cfg.sigma2_true);
    CHECK(m.fit_info.loglik >=
          log_likelihood(sim.training, VarianceParams::from_covariances(cfg.sigma2_true,
                                                                        cfg.sigma_gamma_true)));
}
