#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pbrt/driver.hpp"
#include "pbrt/model.hpp"
#include "pbrt/simgen.hpp"
#include "pbrt/training.hpp"

namespace pbrt::io {

inline constexpr const char* kObservationHeader = "driver_id,stimulus,headway_s,brt_s";

/// One parsed CSV record before the stimulus label is resolved.
struct ObservationRow {
    std::string driver_id;
    std::string stimulus;
    double headway_s = 0.0;
    double brt_s = 0.0;
    std::size_t line = 0;
};

/// Parses the observation CSV. Errors name the 1-based line (InvalidInput).
std::vector<ObservationRow> parse_observation_csv(std::istream& in);

/// Resolves labels and validates every row; errors carry the line number.
std::vector<Observation> resolve_rows(const std::vector<ObservationRow>& rows,
                                      const StimulusRegistry& registry);

/// The default registry when every label belongs to it, otherwise the labels
/// in order of first appearance.
StimulusRegistry infer_registry(const std::vector<ObservationRow>& rows);

/// Groups rows into a TrainingSet (degree 2).
TrainingSet training_set_from_rows(const std::vector<ObservationRow>& rows, int degree = 2);

std::string observations_to_csv(const TrainingSet& ts);

/// Shortest round-trip decimal form.
std::string format_number(double v);

std::string model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const std::string& text);

std::string driver_state_to_json(const DriverState& state, const StimulusRegistry& registry);
DriverState driver_state_from_json(const std::string& text, const StimulusRegistry& registry);

/// Keys missing from the document keep their default_config() values.
SimConfig sim_config_from_json(const std::string& text);
std::string sim_config_to_json(const SimConfig& config);

std::string gamma_truth_to_json(const std::map<std::string, Vector>& truth);

std::string read_file(const std::filesystem::path& path);

/// Writes path.tmp, then renames it over path. before_rename runs between the
/// two steps; if it throws, the temp file is removed and path is untouched.
void atomic_write(const std::filesystem::path& path, const std::string& content,
                  const std::function<void()>& before_rename = {});

}  // namespace pbrt::io
