#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pbrt/model.hpp"
#include "pbrt/numerics.hpp"

namespace pbrt {

/// Plug-in BLUP of one driver's random effects with its uncertainty.
struct BlupResult {
    Vector gamma_hat;
    /// Estimated Cov of the BLUP itself.
    SymMatrix gamma_hat_cov;
    /// Estimated Cov((beta_hat + gamma_hat) - (beta + gamma)).
    SymMatrix pred_err_cov;
};

/// Computes the plug-in BLUP from a driver's observations:
///   V = X S X' + sigma2 I
///   gamma_hat = S X' V^-1 (y - X beta)
///   Cov(gamma_hat) = S X' V^-1 (V - X B X') V^-1 X S
///   pred_err_cov = B + S - Cov(gamma_hat) - C - C'   with C = B X' V^-1 X S
/// where S = sigma_gamma and B = beta_cov. With no observations the result is
/// the population prior: gamma_hat = 0 and pred_err_cov = S.
BlupResult compute_blup(std::span<const Observation> obs, const TrainedModel& model);

/// Henderson mixed-model equations for gamma with beta held at beta_hat,
/// solved in the range space of sigma_gamma. Test oracle for compute_blup.
/// Requires at least one observation.
Vector henderson_oracle(std::span<const Observation> obs, const TrainedModel& model);

/// One driver's observation history with a cached BLUP. Single writer.
class DriverState {
public:
    static constexpr std::size_t kDefaultWindow = 500;

    explicit DriverState(std::string driver_id, std::size_t window = kDefaultWindow);

    const std::string& driver_id() const { return driver_id_; }
    std::size_t size() const { return observations_.size(); }
    std::size_t window() const { return window_; }
    std::vector<Observation> observations() const;

    /// Appends obs, evicting the oldest entry beyond the window, and drops the
    /// cached BLUP. Throws DriverMismatch or InvalidObservation.
    void add_observation(const Observation& obs);

    /// Returns the cached BLUP, recomputing it if observations changed.
    const BlupResult& blup(const TrainedModel& model);
    const std::optional<BlupResult>& cached() const { return cached_; }

    /// Restores a cache read from disk. The caller vouches that it matches
    /// the current observations.
    void restore_cache(BlupResult blup) { cached_ = std::move(blup); }

private:
    std::string driver_id_;
    std::size_t window_;
    std::deque<Observation> observations_;
    std::optional<BlupResult> cached_;
};

}  // namespace pbrt
