#include "pbrt/simgen.hpp"

#include <cmath>
#include <numbers>

#include "pbrt/errors.hpp"

namespace pbrt {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

GaussianStream::GaussianStream(std::uint64_t seed) : engine_(seed) {}

double GaussianStream::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double GaussianStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::string driver_name(int index, int num_drivers) {
    const int width = static_cast<int>(std::to_string(std::max(num_drivers - 1, 0)).size());
    std::string digits = std::to_string(index);
    if (static_cast<int>(digits.size()) < width) {
        digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
    }
    return "driver_" + digits;
}

void SimConfig::validate() const {
    spec.validate();
    const auto p = static_cast<Eigen::Index>(spec.p());
    if (stimuli.size() != spec.num_stimuli) {
        throw InvalidInput("stimulus registry size does not match num_stimuli");
    }
    if (beta_true.size() != p) {
        throw InvalidInput("beta_true must have length " + std::to_string(p));
    }
    if (sigma_gamma_true.dim() != p) {
        throw InvalidInput("sigma_gamma_true must be " + std::to_string(p) + "x" + std::to_string(p));
    }
    if (!(sigma2_true >= 0.0) || !std::isfinite(sigma2_true)) {
        throw InvalidInput("sigma2_true must be nonnegative");
    }
    if (!is_psd(sigma_gamma_true, 1e-10)) {
        throw InvalidInput("sigma_gamma_true is not positive semidefinite");
    }
    if (num_drivers < 0) {
        throw InvalidInput("num_drivers must be nonnegative");
    }
    if (static_cast<int>(obs_per_driver.size()) != spec.num_stimuli) {
        throw InvalidInput("obs_per_driver needs one count per stimulus");
    }
    for (int c : obs_per_driver) {
        if (c < 0) {
            throw InvalidInput("observation counts must be nonnegative");
        }
    }
    if (!(headway_range.first > 0.0) || !(headway_range.second >= headway_range.first)) {
        throw InvalidInput("headway range must satisfy 0 < min <= max");
    }
}

SimConfig default_config() {
    SimConfig c;
    c.spec = ModelSpec{3, 2};
    c.stimuli = StimulusRegistry::default_registry();
    // Per stimulus (intercept, slope, quadratic) in log-seconds. Median BRT at
    // 1.5 s headway is about 0.80, 0.74 and 0.85 s, rising to roughly 3 s at
    // 6 s headway. Each curve peaks just past 6 s.
    c.beta_true.resize(9);
    c.beta_true << -1.25, 0.78, -0.064,
                   -1.38, 0.82, -0.068,
                   -1.13, 0.74, -0.061;
    c.sigma2_true = 0.04;

    const double intercept_var = 0.02;
    const double slope_var = 0.005;
    const double quad_var = 0.00005;
    const double intercept_corr = 0.3;
    Matrix s = Matrix::Zero(9, 9);
    for (int a = 0; a < 3; ++a) {
        s(3 * a, 3 * a) = intercept_var;
        s(3 * a + 1, 3 * a + 1) = slope_var;
        s(3 * a + 2, 3 * a + 2) = quad_var;
        for (int b = 0; b < 3; ++b) {
            if (a != b) {
                s(3 * a, 3 * b) = intercept_corr * intercept_var;
            }
        }
    }
    c.sigma_gamma_true = SymMatrix(s);
    c.num_drivers = 200;
    c.obs_per_driver = {10, 10, 10};
    c.headway_range = {0.5, 6.0};
    c.seed = 42;
    return c;
}

SimResult generate(const SimConfig& config) {
    config.validate();
    const Matrix root = psd_factor(config.sigma_gamma_true);
    const double sigma = std::sqrt(config.sigma2_true);
    const auto p = static_cast<Eigen::Index>(config.spec.p());

    SimResult out;
    out.training.spec = config.spec;
    out.training.stimuli = config.stimuli;
    for (int d = 0; d < config.num_drivers; ++d) {
        GaussianStream rng(mix_seed(config.seed, static_cast<std::uint64_t>(d)));
        const std::string id = driver_name(d, config.num_drivers);
        Vector z(p);
        for (Eigen::Index k = 0; k < p; ++k) {
            z(k) = rng.normal();
        }
        const Vector gamma = root * z;

        std::vector<Observation> obs;
        for (int s = 0; s < config.spec.num_stimuli; ++s) {
            for (int k = 0; k < config.obs_per_driver[static_cast<std::size_t>(s)]; ++k) {
                const double t = rng.uniform(config.headway_range.first, config.headway_range.second);
                const Vector row = feature_row(config.spec, s, t);
                const double y = row.dot(config.beta_true) + row.dot(gamma) + sigma * rng.normal();
                obs.push_back({id, s, t, std::exp(y)});
            }
        }
        out.training.drivers.emplace(id, std::move(obs));
        out.gamma_truth.emplace(id, gamma);
    }
    return out;
}

}  // namespace pbrt
