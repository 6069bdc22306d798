#pragma once

#include "qns/experiments.hpp"
#include "qns/lattice.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qns {

/// Invalid configuration (exit code 2). The message names the offending key.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

const std::vector<std::string>& experiment_kinds();

/// Flat run configuration. Nullable fields take an experiment-dependent
/// default during resolution; a resolved config has none left unset.
struct RunConfig {
    std::string experiment = "train";
    std::string output_dir = "qns-out";
    std::uint64_t seed = 1;
    int threads = 0;  // 0: QNS_THREADS, else 1

    // Lattice
    std::string lattice_preset;
    int rows = 3;
    int cols = 3;
    std::optional<double> coupling_mhz;  // 2.185, or 2.0 for ramping
    std::optional<int> readout_index;    // site nearest the centre
    std::vector<Site> inactive_sites;

    // Dynamics and spectra
    double h_mhz = 50.0;
    std::vector<double> times_ns;                 // 0:400:81
    std::optional<int> realizations;              // 200 level-stats and sweep-disorder, 50 imbalance, 5 ramping
    std::optional<std::vector<double>> h_over_g;  // 0.5:18:20 level-stats, 0.46:18.3:20 sweep-disorder
    std::optional<int> sector_excitations;        // Neel excitation count
    double central_fraction = 1.0;

    // Datasets
    double h_erg_mhz = 1.0;
    double h_loc_mhz = 50.0;
    double t_state_ns = 200.0;
    int n_train_per_class = 10;
    int n_test_per_class = 25;
    int n_per_class = 10;  // dataset command
    bool init_search = true;
    int init_candidates = 50;
    int init_per_class = 50;

    // Training
    int epochs = 25;
    int layers = 1;
    std::string optimizer = "adam";
    double learning_rate = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double w_ergodic = 3.0;
    double w_localized = 1.0;
    std::string gradient_mode = "chain-shift";
    double fd_step = 1e-5;
    std::string batch_mode = "full-batch";
    double t0_ns = 200.0;
    double threshold = 0.5;
    std::optional<bool> calibrate_threshold;  // true for probe and the sweeps

    // Readout noise (evaluation only)
    bool noise_enabled = false;
    double noise_f00 = 0.971;
    double noise_f11 = 0.937;
    int noise_shots = 0;

    // Sweeps
    std::string model_path;  // required by classify; sweeps train in-process when empty
    int profiles_per_point = 50;
    std::vector<double> t_grid_ns;      // log:6:501:15
    std::vector<double> retrain_t0_ns;  // 100, 200, 300, 400
    int time_sweep_per_class = 25;

    // Ramping
    std::vector<double> ramp_grid_ns;  // 0:100:26
    double hold_ns = 200.0;
    double idle_offset_mhz = 100.0;
    double ramp_h_mhz = 1.0;
    double max_step_ns = 0.5;

    bool operator==(const RunConfig&) const = default;
};

/// All accepted keys, in emission order.
std::vector<std::string> config_keys();

/// "start:stop:count" (linear, inclusive) or "log:start:stop:count".
std::vector<double> parse_range(const std::string& text);

/// Merges file values and flag overrides (flags win), resolves
/// experiment-dependent defaults and validates. Flag keys use the
/// snake_case config names; values are the raw flag text.
RunConfig parse_config(const nlohmann::json& file, const std::map<std::string, std::string>& flags,
                       const std::string& experiment);
RunConfig parse_config_file(const std::string& path, const std::map<std::string, std::string>& flags,
                            const std::string& experiment);

nlohmann::json to_json(const RunConfig& config);

LatticeSpec build_lattice(const RunConfig& config);

/// Runs the experiment and writes config.json, record.json and its declared files.
ExperimentRecord dispatch(const RunConfig& config);

/// Full command: parse, dispatch, map failures to exit codes with one JSON error line on `err`.
int run_command(const std::string& experiment, const std::string& config_path,
                const std::map<std::string, std::string>& flags, std::ostream& err);

}  // namespace qns
