#pragma once

#include <span>
#include <utility>
#include <vector>

#include "pbrt/driver.hpp"
#include "pbrt/model.hpp"

namespace pbrt {

/// Lognormal PBRT distribution at a reference headway: log-PBRT ~ N(mu, var).
struct PbrtEstimate {
    double mu = 0.0;
    double var_naive = 0.0;
    /// var_naive plus the prediction-error quadratic form at t*.
    double var_conservative = 0.0;
    double t_star = kDefaultTStar;
    StimulusId stimulus = 0;

    double variance(bool conservative) const { return conservative ? var_conservative : var_naive; }
};

/// With w = feature_row(stimulus, t_star):
///   mu = w'(beta + gamma_hat), var_naive = sigma2,
///   var_conservative = w' pred_err_cov w + sigma2.
PbrtEstimate estimate_pbrt(const TrainedModel& model, const BlupResult& blup, StimulusId stimulus,
                           double t_star);
PbrtEstimate estimate_pbrt(const TrainedModel& model, const BlupResult& blup, StimulusId stimulus);

/// The estimate for a driver with no data (the population distribution).
PbrtEstimate population_pbrt(const TrainedModel& model, StimulusId stimulus, double t_star);

/// Standard normal quantile (Wichura's AS 241, ~1e-16 relative accuracy).
/// Throws InvalidQuantile outside (0, 1).
double normal_quantile(double q);

/// exp(mu + z_q sqrt(var)). Throws InvalidQuantile outside (0, 1).
double percentile(const PbrtEstimate& est, double q, bool conservative);

double lognormal_pdf(double t, double mu, double var);

/// (t, pdf) pairs over the grid. Nonpositive grid points yield pdf 0.
std::vector<std::pair<double, double>> density_curve(const PbrtEstimate& est, bool conservative,
                                                     std::span<const double> grid);

}  // namespace pbrt
