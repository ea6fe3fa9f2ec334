#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pbrt/model.hpp"
#include "pbrt/numerics.hpp"

namespace pbrt {

/// Multi-driver training data. Drivers are keyed (and iterated) by id.
struct TrainingSet {
    ModelSpec spec;
    StimulusRegistry stimuli;
    std::map<std::string, std::vector<Observation>> drivers;

    /// Requires >= min_drivers drivers, each with >= 1 valid observation whose
    /// driver_id matches its key.
    void validate(std::size_t min_drivers = 2) const;
    std::size_t num_observations() const;
};

/// Unconstrained variance parameters: sigma = exp(log_sigma) and
/// Sigma_gamma = L L^T where L is lower triangular with its diagonal
/// stored as logs.
struct VarianceParams {
    double log_sigma = 0.0;
    Matrix chol_factor;

    double sigma2() const;
    /// L with the diagonal exponentiated.
    Matrix factor() const;
    SymMatrix sigma_gamma() const;

    /// Inverse map. A singular sigma_gamma yields -inf log-diagonal entries.
    static VarianceParams from_covariances(double sigma2, const SymMatrix& sigma_gamma);
};

/// X_d Sigma_gamma X_d^T + sigma2 I.
SymMatrix marginal_cov(const Matrix& x_d, double sigma2, const SymMatrix& sigma_gamma);
SymMatrix marginal_cov(const ModelSpec& spec, const Matrix& x_d, const VarianceParams& params);

struct GlsResult {
    Vector beta;
    SymMatrix beta_cov;
};

/// Generalized least squares with block-diagonal V. Block k covers the next
/// v_blocks[k].dim() rows of x and y; the full V is never formed.
GlsResult gls_beta(const Matrix& x, const Vector& y, std::span<const SymMatrix> v_blocks);

/// Gaussian marginal log-likelihood with beta profiled out by GLS.
double log_likelihood(const TrainingSet& ts, const VarianceParams& params);

struct FitOptions {
    long max_iterations = 60000;  // per Nelder-Mead run
    double tolerance = 1e-6;
    std::uint64_t seed = 42;
    int restarts = 3;
    /// Restrict Sigma_gamma to one block per stimulus.
    bool block_diagonal = false;
};

/// Maximum-likelihood fit. A run that exhausts max_iterations is reported
/// through fit_info.converged == false; the estimates are still returned.
TrainedModel fit(const TrainingSet& ts, const FitOptions& opts = {});

/// Pooled within-driver OLS residual variance, used to seed the optimizer.
double pooled_residual_variance(const TrainingSet& ts);

}  // namespace pbrt
