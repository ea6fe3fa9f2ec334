#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pbrt/model.hpp"
#include "pbrt/numerics.hpp"
#include "pbrt/training.hpp"

namespace pbrt {

/// Generating values for a synthetic training study.
struct SimConfig {
    ModelSpec spec;
    StimulusRegistry stimuli;
    Vector beta_true;
    double sigma2_true = 0.0;
    SymMatrix sigma_gamma_true;
    int num_drivers = 0;
    /// Observations per driver for each stimulus.
    std::vector<int> obs_per_driver;
    std::pair<double, double> headway_range{0.5, 6.0};
    std::uint64_t seed = 42;

    /// Throws InvalidInput on any violated invariant.
    void validate() const;
};

/// The committed fixture: three stimuli, quadratic in headway, 200 drivers
/// with 10 events per stimulus, seed 42.
SimConfig default_config();

struct SimResult {
    TrainingSet training;
    /// True random effects per driver.
    std::map<std::string, Vector> gamma_truth;
};

/// Draws gamma_d ~ N(0, Sigma_gamma), uniform headways and lognormal BRTs.
/// Each driver uses its own stream derived from (seed, driver index), so the
/// output depends only on the config.
SimResult generate(const SimConfig& config);

/// Gaussian draws from mt19937_64 through Box-Muller. Both pieces are fully
/// specified, so streams match across standard library implementations.
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed);

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// SplitMix64 finalizer used to derive per-driver seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

std::string driver_name(int index, int num_drivers);

}  // namespace pbrt
