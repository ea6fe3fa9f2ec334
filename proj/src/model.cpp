#include "pbrt/model.hpp"

#include <cmath>
#include <set>

#include "pbrt/errors.hpp"

namespace pbrt {

StimulusRegistry::StimulusRegistry(std::vector<std::string> names) : names_(std::move(names)) {
    std::set<std::string> seen;
    for (const auto& n : names_) {
        if (n.empty()) {
            throw InvalidInput("empty stimulus name");
        }
        if (!seen.insert(n).second) {
            throw InvalidInput("duplicate stimulus name '" + n + "'");
        }
    }
}

StimulusRegistry StimulusRegistry::default_registry() {
    return StimulusRegistry({"traffic_signal", "lead_car_brake", "pedestrian_crossing"});
}

StimulusRegistry StimulusRegistry::anonymous(int count) {
    std::vector<std::string> names;
    for (int i = 0; i < count; ++i) {
        names.push_back("s" + std::to_string(i));
    }
    return StimulusRegistry(std::move(names));
}

const std::string& StimulusRegistry::name(StimulusId id) const {
    if (id < 0 || id >= size()) {
        throw UnknownStimulus("stimulus id " + std::to_string(id) + " out of range");
    }
    return names_[static_cast<std::size_t>(id)];
}

std::optional<StimulusId> StimulusRegistry::find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) {
            return static_cast<StimulusId>(i);
        }
    }
    return std::nullopt;
}

StimulusId StimulusRegistry::id(std::string_view name) const {
    if (auto found = find(name)) {
        return *found;
    }
    throw UnknownStimulus("unknown stimulus '" + std::string(name) + "'");
}

void ModelSpec::validate() const {
    if (num_stimuli < 1) {
        throw InvalidInput("num_stimuli must be positive");
    }
    if (degree < 0) {
        throw InvalidInput("degree must be nonnegative");
    }
}

void Observation::validate() const {
    if (!std::isfinite(headway_s) || headway_s <= 0.0) {
        throw InvalidObservation("headway must be positive, got " + std::to_string(headway_s));
    }
    if (!std::isfinite(brt_s) || brt_s <= 0.0) {
        throw InvalidObservation("brake response time must be positive, got " +
                                 std::to_string(brt_s));
    }
    if (brt_s > kMaxBrtSeconds) {
        throw InvalidObservation("brake response time " + std::to_string(brt_s) +
                                 " s exceeds the 60 s sanity bound");
    }
}

void TrainedModel::validate() const {
    spec.validate();
    const auto p = static_cast<Eigen::Index>(spec.p());
    if (stimuli.size() != spec.num_stimuli) {
        throw InvalidInput("stimulus registry size does not match num_stimuli");
    }
    if (beta.size() != p || sigma_gamma.dim() != p || beta_cov.dim() != p) {
        throw InvalidInput("parameter dimensions do not match the model spec");
    }
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
        throw InvalidInput("sigma2 must be positive");
    }
    if (!is_psd(sigma_gamma, 1e-8)) {
        throw InvalidInput("sigma_gamma is not positive semidefinite");
    }
    if (!is_psd(beta_cov, 1e-8)) {
        throw InvalidInput("beta_cov is not positive semidefinite");
    }
    if (!(t_star > 0.0)) {
        throw InvalidInput("t_star must be positive");
    }
}

Vector feature_row(const ModelSpec& spec, StimulusId stimulus, double headway_s) {
    if (stimulus < 0 || stimulus >= spec.num_stimuli) {
        throw UnknownStimulus("stimulus id " + std::to_string(stimulus) + " out of range [0, " +
                              std::to_string(spec.num_stimuli) + ")");
    }
    Vector row = Vector::Zero(spec.p());
    const int offset = stimulus * spec.block_size();
    double power = 1.0;
    for (int k = 0; k <= spec.degree; ++k) {
        row(offset + k) = power;
        power *= headway_s;
    }
    return row;
}

Design build_design(const ModelSpec& spec, std::span<const Observation> obs) {
    Design d{Matrix::Zero(static_cast<Eigen::Index>(obs.size()), spec.p()),
             Vector::Zero(static_cast<Eigen::Index>(obs.size()))};
    for (std::size_t i = 0; i < obs.size(); ++i) {
        obs[i].validate();
        const auto row = static_cast<Eigen::Index>(i);
        d.x.row(row) = feature_row(spec, obs[i].stimulus, obs[i].headway_s).transpose();
        d.y(row) = std::log(obs[i].brt_s);
    }
    return d;
}

}  // namespace pbrt
