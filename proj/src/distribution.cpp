#include "pbrt/distribution.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "pbrt/errors.hpp"

namespace pbrt {

PbrtEstimate estimate_pbrt(const TrainedModel& model, const BlupResult& blup, StimulusId stimulus,
                           double t_star) {
    if (!(t_star > 0.0)) {
        throw InvalidInput("t_star must be positive");
    }
    const Vector w = feature_row(model.spec, stimulus, t_star);
    PbrtEstimate est;
    est.mu = w.dot(model.beta + blup.gamma_hat);
    est.var_naive = model.sigma2;
    est.var_conservative = w.dot(blup.pred_err_cov.matrix() * w) + model.sigma2;
    est.t_star = t_star;
    est.stimulus = stimulus;
    return est;
}

PbrtEstimate estimate_pbrt(const TrainedModel& model, const BlupResult& blup, StimulusId stimulus) {
    return estimate_pbrt(model, blup, stimulus, model.t_star);
}

PbrtEstimate population_pbrt(const TrainedModel& model, StimulusId stimulus, double t_star) {
    return estimate_pbrt(model, compute_blup({}, model), stimulus, t_star);
}

double normal_quantile(double q) {
    if (!(q > 0.0 && q < 1.0)) {
        throw InvalidQuantile("quantile must lie in (0, 1), got " + std::to_string(q));
    }
    // Wichura, Algorithm AS 241 (PPND16).
    const double dq = q - 0.5;
    if (std::abs(dq) <= 0.425) {
        const double r = 0.180625 - dq * dq;
        return dq *
               (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r +
                     67265.770927008700853) * r + 45921.953931549871457) * r +
                   13731.693765509461125) * r + 1971.5909503065514427) * r +
                 133.14166789178437745) * r + 3.387132872796366608) /
               (((((((r * 5226.495278852545925 + 28729.085735721942674) * r +
                     39307.89580009271061) * r + 21213.794301586595867) * r +
                   5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    double r = dq < 0.0 ? q : 1.0 - q;
    r = std::sqrt(-std::log(r));
    double z = 0.0;
    if (r <= 5.0) {
        r -= 1.6;
        z = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r +
                  0.24178072517745061177) * r + 1.27045825245236838258) * r +
                3.64784832476320460504) * r + 5.7694972214606914055) * r +
              4.6303378461565452959) * r + 1.42343711074968357734) /
            (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r +
                  0.0151986665636164571966) * r + 0.14810397642748007459) * r +
                0.68976733498510000455) * r + 1.6763848301838038494) * r +
              2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        z = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r +
                  0.0012426609473880784386) * r + 0.026532189526576123093) * r +
                0.29656057182850489123) * r + 1.7848265399172913358) * r +
              5.4637849111641143699) * r + 6.6579046435011037772) /
            (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r +
                  1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
                0.0148753612908506148525) * r + 0.13692988092273580531) * r +
              0.59983220655588793769) * r + 1.0);
    }
    return dq < 0.0 ? -z : z;
}

double percentile(const PbrtEstimate& est, double q, bool conservative) {
    const double z = normal_quantile(q);
    return std::exp(est.mu + z * std::sqrt(est.variance(conservative)));
}

double lognormal_pdf(double t, double mu, double var) {
    if (!(t > 0.0)) {
        return 0.0;
    }
    const double z = std::log(t) - mu;
    return std::exp(-0.5 * z * z / var) / (t * std::sqrt(2.0 * std::numbers::pi * var));
}

std::vector<std::pair<double, double>> density_curve(const PbrtEstimate& est, bool conservative,
                                                     std::span<const double> grid) {
    std::vector<std::pair<double, double>> out;
    out.reserve(grid.size());
    const double var = est.variance(conservative);
    for (double t : grid) {
        out.emplace_back(t, lognormal_pdf(t, est.mu, var));
    }
    return out;
}

}  // namespace pbrt
