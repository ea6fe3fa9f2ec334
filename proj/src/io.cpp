#include "pbrt/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pbrt/errors.hpp"

namespace pbrt::io {

namespace {

using Json = nlohmann::ordered_json;

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos - start)));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return out;
}

double parse_double(const std::string& field, std::size_t line, const char* what) {
    double v = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    if (!field.empty() && *begin == '+') {
        ++begin;
    }
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (field.empty() || ec != std::errc() || ptr != end) {
        throw InvalidInput("line " + std::to_string(line) + ": cannot parse " + what + " '" + field +
                           "'");
    }
    return v;
}

/// %.17g: at least 15 significant digits and an exact round trip.
std::string format_json_number(double v) {
    if (!std::isfinite(v)) {
        throw InvalidInput("cannot serialize non-finite number");
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s(buf);
    if (s.find_first_of(".eEn") == std::string::npos) {
        s += ".0";
    }
    return s;
}

void write_json(std::ostringstream& os, const Json& j, int indent) {
    const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
    const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
    switch (j.type()) {
        case Json::value_t::object: {
            if (j.empty()) {
                os << "{}";
                return;
            }
            os << "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) {
                    os << ",\n";
                }
                first = false;
                os << inner << Json(it.key()).dump() << ": ";
                write_json(os, it.value(), indent + 1);
            }
            os << "\n" << pad << "}";
            return;
        }
        case Json::value_t::array: {
            if (j.empty()) {
                os << "[]";
                return;
            }
            const bool scalar_items =
                std::all_of(j.begin(), j.end(), [](const Json& e) { return e.is_primitive(); });
            if (scalar_items) {
                os << "[";
                bool first = true;
                for (const auto& e : j) {
                    if (!first) {
                        os << ", ";
                    }
                    first = false;
                    write_json(os, e, indent + 1);
                }
                os << "]";
                return;
            }
            os << "[\n";
            bool first = true;
            for (const auto& e : j) {
                if (!first) {
                    os << ",\n";
                }
                first = false;
                os << inner;
                write_json(os, e, indent + 1);
            }
            os << "\n" << pad << "]";
            return;
        }
        case Json::value_t::number_float:
            os << format_json_number(j.get<double>());
            return;
        default:
            os << j.dump();
            return;
    }
}

std::string render(const Json& j) {
    std::ostringstream os;
    write_json(os, j, 0);
    os << "\n";
    return os.str();
}

Json parse(const std::string& text, const char* what) {
    try {
        return Json::parse(text);
    } catch (const Json::exception& e) {
        throw InvalidInput(std::string("malformed ") + what + ": " + e.what());
    }
}

Json vector_json(const Vector& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        a.push_back(v(i));
    }
    return a;
}

Json matrix_json(const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        rows.push_back(vector_json(m.row(i).transpose()));
    }
    return rows;
}

Vector vector_from(const Json& j, const char* key) {
    if (!j.is_array()) {
        throw InvalidInput(std::string("'") + key + "' must be an array");
    }
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) {
            throw InvalidInput(std::string("'") + key + "' must contain numbers");
        }
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

Matrix matrix_from(const Json& j, const char* key) {
    if (!j.is_array()) {
        throw InvalidInput(std::string("'") + key + "' must be an array of rows");
    }
    const auto n = static_cast<Eigen::Index>(j.size());
    Matrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vector row = vector_from(j[static_cast<std::size_t>(i)], key);
        if (row.size() != n) {
            throw InvalidInput(std::string("'") + key + "' must be square");
        }
        m.row(i) = row.transpose();
    }
    return m;
}

const Json& require(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) {
        throw InvalidInput(std::string("missing key '") + key + "'");
    }
    return j.at(key);
}

Json spec_json(const ModelSpec& spec, const StimulusRegistry& stimuli) {
    Json j;
    j["num_stimuli"] = spec.num_stimuli;
    j["degree"] = spec.degree;
    j["stimuli"] = stimuli.names();
    return j;
}

std::pair<ModelSpec, StimulusRegistry> spec_from(const Json& j) {
    ModelSpec spec;
    spec.num_stimuli = require(j, "num_stimuli").get<int>();
    spec.degree = require(j, "degree").get<int>();
    spec.validate();
    StimulusRegistry reg = j.contains("stimuli")
                               ? StimulusRegistry(j.at("stimuli").get<std::vector<std::string>>())
                               : StimulusRegistry::anonymous(spec.num_stimuli);
    if (reg.size() != spec.num_stimuli) {
        throw InvalidInput("stimuli list length does not match num_stimuli");
    }
    return {spec, std::move(reg)};
}

}  // namespace

std::vector<ObservationRow> parse_observation_csv(std::istream& in) {
    std::vector<ObservationRow> rows;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
            line.erase(0, 3);
        }
        if (trim(line).empty()) {
            continue;
        }
        if (!header_seen) {
            if (trim(line) != kObservationHeader) {
                throw InvalidInput("line " + std::to_string(line_no) + ": expected header '" +
                                   kObservationHeader + "'");
            }
            header_seen = true;
            continue;
        }
        const auto fields = split(line, ',');
        if (fields.size() != 4) {
            throw InvalidInput("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                               std::to_string(fields.size()));
        }
        if (fields[0].empty()) {
            throw InvalidInput("line " + std::to_string(line_no) + ": empty driver_id");
        }
        rows.push_back({fields[0], fields[1], parse_double(fields[2], line_no, "headway_s"),
                        parse_double(fields[3], line_no, "brt_s"), line_no});
    }
    if (!header_seen) {
        throw InvalidInput("observation CSV is empty");
    }
    return rows;
}

std::vector<Observation> resolve_rows(const std::vector<ObservationRow>& rows,
                                      const StimulusRegistry& registry) {
    std::vector<Observation> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        const auto id = registry.find(r.stimulus);
        if (!id) {
            throw UnknownStimulus("line " + std::to_string(r.line) + ": unknown stimulus '" +
                                  r.stimulus + "'");
        }
        Observation o{r.driver_id, *id, r.headway_s, r.brt_s};
        try {
            o.validate();
        } catch (const InvalidObservation& e) {
            throw InvalidObservation("line " + std::to_string(r.line) + ": " + e.what());
        }
        out.push_back(std::move(o));
    }
    return out;
}

StimulusRegistry infer_registry(const std::vector<ObservationRow>& rows) {
    const auto defaults = StimulusRegistry::default_registry();
    std::vector<std::string> seen;
    std::set<std::string> unique;
    bool all_default = true;
    for (const auto& r : rows) {
        if (unique.insert(r.stimulus).second) {
            seen.push_back(r.stimulus);
            all_default = all_default && defaults.find(r.stimulus).has_value();
        }
    }
    if (all_default) {
        return defaults;
    }
    return StimulusRegistry(std::move(seen));
}

TrainingSet training_set_from_rows(const std::vector<ObservationRow>& rows, int degree) {
    TrainingSet ts;
    ts.stimuli = infer_registry(rows);
    ts.spec = ModelSpec{ts.stimuli.size(), degree};
    for (auto& o : resolve_rows(rows, ts.stimuli)) {
        ts.drivers[o.driver_id].push_back(std::move(o));
    }
    return ts;
}

std::string format_number(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string observations_to_csv(const TrainingSet& ts) {
    std::string out = std::string(kObservationHeader) + "\n";
    for (const auto& [id, obs] : ts.drivers) {
        for (const auto& o : obs) {
            out += o.driver_id;
            out += ',';
            out += ts.stimuli.name(o.stimulus);
            out += ',';
            out += format_number(o.headway_s);
            out += ',';
            out += format_number(o.brt_s);
            out += '\n';
        }
    }
    return out;
}

std::string model_to_json(const TrainedModel& model) {
    Json j;
    j["spec"] = spec_json(model.spec, model.stimuli);
    j["beta"] = vector_json(model.beta);
    j["sigma2"] = model.sigma2;
    j["sigma_gamma"] = matrix_json(model.sigma_gamma);
    j["beta_cov"] = matrix_json(model.beta_cov);
    j["t_star"] = model.t_star;
    Json info;
    info["converged"] = model.fit_info.converged;
    info["loglik"] = model.fit_info.loglik;
    info["iterations"] = model.fit_info.iterations;
    info["seed"] = model.fit_info.seed;
    j["fit_info"] = info;
    return render(j);
}

TrainedModel model_from_json(const std::string& text) {
    const Json j = parse(text, "model file");
    TrainedModel m;
    try {
        std::tie(m.spec, m.stimuli) = spec_from(require(j, "spec"));
        m.beta = vector_from(require(j, "beta"), "beta");
        m.sigma2 = require(j, "sigma2").get<double>();
        m.sigma_gamma = SymMatrix(matrix_from(require(j, "sigma_gamma"), "sigma_gamma"));
        m.beta_cov = SymMatrix(matrix_from(require(j, "beta_cov"), "beta_cov"));
        m.t_star = j.contains("t_star") ? j.at("t_star").get<double>() : kDefaultTStar;
        if (j.contains("fit_info")) {
            const Json& info = j.at("fit_info");
            m.fit_info.converged = require(info, "converged").get<bool>();
            m.fit_info.loglik = require(info, "loglik").get<double>();
            m.fit_info.iterations = require(info, "iterations").get<long>();
            m.fit_info.seed = require(info, "seed").get<unsigned long long>();
        }
    } catch (const Json::exception& e) {
        throw InvalidInput(std::string("model file: ") + e.what());
    }
    m.validate();
    return m;
}

std::string driver_state_to_json(const DriverState& state, const StimulusRegistry& registry) {
    Json j;
    j["driver_id"] = state.driver_id();
    Json obs = Json::array();
    for (const auto& o : state.observations()) {
        Json e;
        e["driver_id"] = o.driver_id;
        e["stimulus"] = registry.name(o.stimulus);
        e["headway_s"] = o.headway_s;
        e["brt_s"] = o.brt_s;
        obs.push_back(e);
    }
    j["observations"] = obs;
    if (const auto& c = state.cached()) {
        Json cached;
        cached["gamma_hat"] = vector_json(c->gamma_hat);
        cached["gamma_hat_cov"] = matrix_json(c->gamma_hat_cov);
        cached["pred_err_cov"] = matrix_json(c->pred_err_cov);
        j["cached"] = cached;
    }
    return render(j);
}

DriverState driver_state_from_json(const std::string& text, const StimulusRegistry& registry) {
    const Json j = parse(text, "driver state file");
    try {
        DriverState state(require(j, "driver_id").get<std::string>());
        for (const auto& e : require(j, "observations")) {
            Observation o;
            o.driver_id = require(e, "driver_id").get<std::string>();
            o.stimulus = registry.id(require(e, "stimulus").get<std::string>());
            o.headway_s = require(e, "headway_s").get<double>();
            o.brt_s = require(e, "brt_s").get<double>();
            state.add_observation(o);
        }
        if (j.contains("cached")) {
            const Json& c = j.at("cached");
            BlupResult b{vector_from(require(c, "gamma_hat"), "gamma_hat"),
                         SymMatrix(matrix_from(require(c, "gamma_hat_cov"), "gamma_hat_cov")),
                         SymMatrix(matrix_from(require(c, "pred_err_cov"), "pred_err_cov"))};
            state.restore_cache(std::move(b));
        }
        return state;
    } catch (const Json::exception& e) {
        throw InvalidInput(std::string("driver state file: ") + e.what());
    }
}

SimConfig sim_config_from_json(const std::string& text) {
    const Json j = parse(text, "simulation config");
    SimConfig c = default_config();
    try {
        if (j.contains("spec")) {
            std::tie(c.spec, c.stimuli) = spec_from(j.at("spec"));
        }
        if (j.contains("beta_true")) {
            c.beta_true = vector_from(j.at("beta_true"), "beta_true");
        }
        if (j.contains("sigma2_true")) {
            c.sigma2_true = j.at("sigma2_true").get<double>();
        }
        if (j.contains("sigma_gamma_true")) {
            c.sigma_gamma_true = SymMatrix(matrix_from(j.at("sigma_gamma_true"), "sigma_gamma_true"));
        }
        if (j.contains("num_drivers")) {
            c.num_drivers = j.at("num_drivers").get<int>();
        }
        if (j.contains("obs_per_driver")) {
            c.obs_per_driver = j.at("obs_per_driver").get<std::vector<int>>();
        }
        if (j.contains("headway_range")) {
            const auto r = j.at("headway_range").get<std::vector<double>>();
            if (r.size() != 2) {
                throw InvalidInput("headway_range must be [min, max]");
            }
            c.headway_range = {r[0], r[1]};
        }
        if (j.contains("seed")) {
            c.seed = j.at("seed").get<std::uint64_t>();
        }
    } catch (const Json::exception& e) {
        throw InvalidInput(std::string("simulation config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string sim_config_to_json(const SimConfig& config) {
    Json j;
    j["spec"] = spec_json(config.spec, config.stimuli);
    j["beta_true"] = vector_json(config.beta_true);
    j["sigma2_true"] = config.sigma2_true;
    j["sigma_gamma_true"] = matrix_json(config.sigma_gamma_true);
    j["num_drivers"] = config.num_drivers;
    j["obs_per_driver"] = config.obs_per_driver;
    j["headway_range"] = {config.headway_range.first, config.headway_range.second};
    j["seed"] = config.seed;
    return render(j);
}

std::string gamma_truth_to_json(const std::map<std::string, Vector>& truth) {
    Json j = Json::object();
    for (const auto& [id, g] : truth) {
        j[id] = vector_json(g);
    }
    return render(j);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) {
        throw IoError("error reading '" + path.string() + "'");
    }
    return ss.str();
}

void atomic_write(const std::filesystem::path& path, const std::string& content,
                  const std::function<void()>& before_rename) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open '" + tmp.string() + "' for writing");
        }
        out << content;
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("error writing '" + tmp.string() + "'");
        }
    }
    try {
        if (before_rename) {
            before_rename();
        }
        std::filesystem::rename(tmp, path);
    } catch (const std::filesystem::filesystem_error& e) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw IoError(std::string("cannot replace '") + path.string() + "': " + e.what());
    } catch (...) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw;
    }
}

}  // namespace pbrt::io
