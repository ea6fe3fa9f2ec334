#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pbrt/numerics.hpp"

namespace pbrt {

using StimulusId = int;

/// Upper bound on a plausible brake response; longer events are sensor errors
/// or drivers that never stopped.
inline constexpr double kMaxBrtSeconds = 60.0;
inline constexpr double kDefaultTStar = 1.5;

/// Ordered stimulus labels; a label's position is its id.
class StimulusRegistry {
public:
    StimulusRegistry() = default;
    explicit StimulusRegistry(std::vector<std::string> names);

    /// traffic_signal, lead_car_brake, pedestrian_crossing
    static StimulusRegistry default_registry();
    /// Labels s0, s1, ... for registries built from a bare count.
    static StimulusRegistry anonymous(int count);

    int size() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(StimulusId id) const;
    std::optional<StimulusId> find(std::string_view name) const;
    /// Throws UnknownStimulus.
    StimulusId id(std::string_view name) const;

    bool operator==(const StimulusRegistry&) const = default;

private:
    std::vector<std::string> names_;
};

struct ModelSpec {
    int num_stimuli = 3;
    int degree = 2;

    int block_size() const { return degree + 1; }
    int p() const { return num_stimuli * block_size(); }
    /// Throws InvalidInput if num_stimuli < 1 or degree < 0.
    void validate() const;

    bool operator==(const ModelSpec&) const = default;
};

struct Observation {
    std::string driver_id;
    StimulusId stimulus = 0;
    double headway_s = 0.0;
    double brt_s = 0.0;

    /// Throws InvalidObservation for nonpositive or non-finite headway/BRT
    /// and for BRT above kMaxBrtSeconds.
    void validate() const;

    bool operator==(const Observation&) const = default;
};

struct FitInfo {
    bool converged = false;
    double loglik = 0.0;
    long iterations = 0;
    unsigned long long seed = 0;
};

/// Population-level estimates from the training study. Immutable once built.
struct TrainedModel {
    ModelSpec spec;
    StimulusRegistry stimuli;
    Vector beta;
    double sigma2 = 1.0;
    SymMatrix sigma_gamma;
    SymMatrix beta_cov;
    double t_star = kDefaultTStar;
    FitInfo fit_info;

    /// Checks dimensions, sigma2 > 0 and PSD of sigma_gamma and beta_cov at 1e-8.
    void validate() const;
};

struct Design {
    Matrix x;
    Vector y;
};

/// Block-selector row: (1, t, ..., t^degree) inside the stimulus block, zero elsewhere.
Vector feature_row(const ModelSpec& spec, StimulusId stimulus, double headway_s);

/// Stacks feature rows; y holds natural-log BRTs. Row order follows obs.
Design build_design(const ModelSpec& spec, std::span<const Observation> obs);

}  // namespace pbrt
