#include "uavafl/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "uavafl/errors.hpp"

namespace uavafl {

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        const std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

}  // namespace

Scenario ExperimentConfig::scenario_params() const {
    Scenario s;
    s.area_side = area_side_m;
    s.altitude = altitude_m;
    s.v_max = v_max_mps;
    s.a_max = a_max_mps2;
    s.dispatch_point = {qf_x, qf_y, altitude_m};
    s.g0 = db_to_linear(g0_db);
    s.noise_power = dbm_to_watts(noise_dbm);
    s.tx_power_max = p0_w;
    s.slot_duration = delta_t_s;
    s.num_slots = total_slots;
    return s;
}

Scenario ExperimentConfig::make_scenario() const {
    Scenario s = generate_scenario(seed, layout, devices, scenario_params());
    if (!compute_slots.empty()) {
        for (int m = 0; m < s.device_count(); ++m) {
            s.devices[m].compute_slots =
                compute_slots.size() == 1
                    ? compute_slots[0]
                    : compute_slots[m % compute_slots.size()];
        }
    }
    s.check();
    return s;
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool lambda_given = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find('#');
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "area_side_m") cfg.area_side_m = std::stod(value);
            else if (key == "M") cfg.devices = std::stoi(value);
            else if (key == "layout") {
                if (value == "uniform") cfg.layout.kind = LayoutSpec::Kind::Uniform;
                else if (value == "clusters") cfg.layout.kind = LayoutSpec::Kind::Clusters;
                else throw ConfigError("unknown layout '" + value + "'");
            }
            else if (key == "cluster_count") cfg.layout.cluster_count = std::stoi(value);
            else if (key == "cluster_radius_m") cfg.layout.cluster_radius = std::stod(value);
            else if (key == "H_m") cfg.altitude_m = std::stod(value);
            else if (key == "v_max_mps") cfg.v_max_mps = std::stod(value);
            else if (key == "a_max_mps2") cfg.a_max_mps2 = std::stod(value);
            else if (key == "qF_xy") {
                const auto parts = split(value, ',');
                if (parts.size() != 2) throw ConfigError("qF_xy expects 'x,y'");
                cfg.qf_x = std::stod(parts[0]);
                cfg.qf_y = std::stod(parts[1]);
            }
            else if (key == "g0_dB") cfg.g0_db = std::stod(value);
            else if (key == "noise_dBm") cfg.noise_dbm = std::stod(value);
            else if (key == "P0_W") cfg.p0_w = std::stod(value);
            else if (key == "delta_t_s") cfg.delta_t_s = std::stod(value);
            else if (key == "K") cfg.total_slots = std::stoi(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "compute_slots") {
                cfg.compute_slots.clear();
                for (const std::string& v : split(value, ',')) {
                    cfg.compute_slots.push_back(std::stoi(v));
                }
            }
            else if (key == "S") cfg.params.staleness_bound = std::stoi(value);
            else if (key == "mu") cfg.params.mu = std::stod(value);
            else if (key == "L") cfg.params.lipschitz = std::stod(value);
            else if (key == "delta") cfg.params.delta = std::stod(value);
            else if (key == "alpha1") cfg.params.alpha1 = std::stod(value);
            else if (key == "alpha2") cfg.params.alpha2 = std::stod(value);
            else if (key == "lambda") {
                cfg.params.learning_rate = std::stod(value);
                lambda_given = true;
            }
            else if (key == "task") cfg.task = value;
            else if (key == "D") cfg.dimension = std::stoi(value);
            else if (key == "heterogeneity") cfg.heterogeneity = std::stod(value);
            else if (key == "samples_per_device") cfg.samples_per_device = std::stoi(value);
            else if (key == "test_samples") cfg.test_samples = std::stoi(value);
            else if (key == "class_margin") cfg.class_margin = std::stod(value);
            else if (key == "ridge") cfg.ridge = std::stod(value);
            else if (key == "cycle_slots") cfg.cycle_slots = std::stoi(value);
            else if (key == "trials") cfg.trials = std::stoi(value);
            else if (key == "strategies") cfg.strategies = split(value, ',');
            else if (key == "eps1") cfg.eps1 = std::stod(value);
            else if (key == "eps2") cfg.eps2 = std::stod(value);
            else if (key == "eta0") cfg.eta0 = std::stod(value);
            else if (key == "eta_scale") cfg.eta_scale = std::stod(value);
            else if (key == "max_inner") cfg.max_inner = std::stoi(value);
            else if (key == "max_outer") cfg.max_outer = std::stoi(value);
            else if (key == "hga_dthr_m") cfg.hga_threshold_m = std::stod(value);
            else if (key == "out_dir") cfg.out_dir = value;
            else throw ConfigError("unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw ConfigError("line " + std::to_string(line_no) + ": bad value for " + key);
        }
    }
    if (!lambda_given) cfg.params.learning_rate = 1.0 / cfg.params.lipschitz;
    if (cfg.devices < 1) throw ConfigError("M must be at least 1");
    if (cfg.trials < 1) throw ConfigError("trials must be at least 1");
    if (cfg.task != "quadratic" && cfg.task != "logistic") {
        throw ConfigError("task must be quadratic or logistic");
    }
    if (cfg.dimension < 2 || cfg.dimension % 2 != 0) {
        throw ConfigError("D must be even and at least 2");
    }
    if (cfg.cycle_slots > cfg.total_slots) cfg.cycle_slots = cfg.total_slots;
    if (cfg.total_slots % cfg.cycle_slots != 0) {
        throw ConfigError("K must be a multiple of cycle_slots for periodic execution");
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

}  // namespace uavafl
