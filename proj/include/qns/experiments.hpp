#pragma once

#include "qns/lattice.hpp"
#include "qns/qnn.hpp"
#include "qns/spectral.hpp"
#include "qns/statevec.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace qns {

// ---------------------------------------------------------------------------
// Readout noise

struct NoiseModel {
    double f00 = 0.971;  // P(read 0 | 0)
    double f11 = 0.937;  // P(read 1 | 1)
    int shots = 0;       // 0 = exact probabilities
    std::uint64_t seed = 0;

    void validate() const;
};

/// p f11 + (1 - p)(1 - f00), then a binomial(shots) estimate when shots > 0.
/// `stream` selects an independent draw so callers can evaluate samples in any order.
double apply_readout_noise(double p, const NoiseModel& noise, std::uint64_t stream = 0);

// ---------------------------------------------------------------------------
// Datasets

/// Recipe for an input state: Neel state evolved under H_d for t_state_ns
/// with disorder sample_disorder(h_mhz, seed).
struct LabeledSample {
    Label label = Label::localized;
    double h_mhz = 0.0;
    std::uint64_t seed = 0;
    double t_state_ns = 200.0;
};

/// standard: every qubit takes part in the preparation.
/// probe: the readout qubit is decoupled during preparation and stays in |0>.
enum class PrepKind { standard, probe };

/// Alternates ergodic and localized samples; sample i uses derive_seed(seed, "sample", i).
std::vector<LabeledSample> generate_dataset(const LatticeSpec& lattice, int n_per_class, double h_erg_mhz,
                                            double h_loc_mhz, double t_state_ns, std::uint64_t seed);

/// Neel pattern with the probe qubit cleared when prep == probe.
Bitmask initial_pattern(const LatticeSpec& lattice, PrepKind prep);

/// Preparation Hamiltonian for a disorder profile (probe couplings removed when prep == probe).
HamiltonianOp preparation_hamiltonian(const LatticeSpec& lattice, const DisorderProfile& disorder, PrepKind prep);

StateVector prepare_state(const LatticeSpec& lattice, const LabeledSample& sample, PrepKind prep = PrepKind::standard);

LabeledStates prepare_states(const LatticeSpec& lattice, std::span<const LabeledSample> samples,
                             PrepKind prep = PrepKind::standard);

// ---------------------------------------------------------------------------
// Imbalance dynamics

struct ImbalancePoint {
    double t_ns = 0.0;
    double mean = 0.0;
    double stddev = 0.0;
};

struct ImbalanceResult {
    std::vector<ImbalancePoint> curve;
    double h_mhz = 0.0;
    int realizations = 0;
    double i200_mean = 0.0;  // quasi-steady-state value at 200 ns
    double i200_stddev = 0.0;
};

/// time_grid_ns must be ascending and non-negative. Realization r uses
/// derive_seed(seed, "imbalance", r).
ImbalanceResult run_imbalance_dynamics(const LatticeSpec& lattice, double h_mhz, std::span<const double> time_grid_ns,
                                       int realizations, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Classification

struct ClassificationConfig {
    int n_train_per_class = 10;
    int n_test_per_class = 25;
    double h_erg_mhz = 1.0;
    double h_loc_mhz = 50.0;
    double t_state_ns = 200.0;
    bool init_search = true;
    int init_candidates = 50;
    int init_per_class = 50;
    TrainingConfig training;
    bool noise_enabled = false;
    NoiseModel noise;
    PrepKind prep = PrepKind::standard;
    std::uint64_t seed = 1;

    void validate() const;
};

struct ClassificationResult {
    TrainedModel model;
    InitSearchResult init;                 // empty candidates when the search is disabled
    std::vector<LabeledSample> test_samples;
    std::vector<double> test_raw;          // readout P(1) of the input state, no circuit
    std::vector<double> test_probs;        // circuit output, after noise when enabled
    double test_accuracy = 0.0;            // at model.threshold
    double test_accuracy_default = 0.0;    // at threshold 0.5
    GaussianFit fit_ergodic;
    GaussianFit fit_localized;
};

/// Datasets, optional initialisation search, training and final test distributions.
/// Noise, when enabled, acts on evaluated probabilities only; training is noiseless.
ClassificationResult run_classification_experiment(const LatticeSpec& lattice, const ClassificationConfig& config);

/// Classification with the readout qubit as a probe that is excluded from
/// state preparation and a calibrated threshold.
ClassificationResult run_probe_experiment(const LatticeSpec& lattice, ClassificationConfig config);

/// Evaluates a trained model on prepared samples.
std::vector<double> evaluate_model(const TrainedModel& model, const LatticeSpec& lattice,
                                   std::span<const LabeledSample> samples, PrepKind prep = PrepKind::standard);

// ---------------------------------------------------------------------------
// Generalisation sweeps

struct DisorderSweepPoint {
    double h_over_g = 0.0;
    double h_mhz = 0.0;
    double p_localized = 0.0;  // fraction classified localized
    double mean_p = 0.0;       // mean readout probability
    int profiles = 0;
};

/// Sample j of grid point k uses derive_seed(seed, "sweep-disorder", k * profiles + j).
std::vector<DisorderSweepPoint> run_disorder_sweep(const TrainedModel& model, const LatticeSpec& lattice,
                                                   std::span<const double> h_over_g_grid, int profiles_per_point,
                                                   std::uint64_t seed, double t_state_ns = 200.0);

struct TimeSweepPoint {
    double t_ns = 0.0;
    double mean_p_ergodic = 0.0;
    double std_p_ergodic = 0.0;
    double mean_p_localized = 0.0;
    double std_p_localized = 0.0;
    double accuracy = 0.0;
    double separation = 0.0;  // mean_p_ergodic - mean_p_localized
};

struct RetrainPoint {
    double t0_ns = 0.0;
    double test_accuracy = 0.0;
    double threshold = 0.5;
};

struct TimeSweepConfig {
    int per_class = 25;
    double h_erg_mhz = 1.0;
    double h_loc_mhz = 50.0;
    std::vector<double> retrain_t0_ns{100.0, 200.0, 300.0, 400.0};
    ClassificationConfig retrain;  // base configuration for the t0 retraining runs
    std::uint64_t seed = 1;
};

struct TimeSweepResult {
    std::vector<TimeSweepPoint> points;
    std::vector<RetrainPoint> retrain;
};

/// Classifies both classes prepared for every t in the ascending grid; the
/// disorder profiles are shared across t. Then retrains at each listed t0.
TimeSweepResult run_time_sweep(const TrainedModel& model, const LatticeSpec& lattice, std::span<const double> t_grid_ns,
                               const TimeSweepConfig& config);

// ---------------------------------------------------------------------------
// Ramping

struct RampingConfig {
    double hold_ns = 200.0;
    double idle_offset_mhz = 100.0;  // +offset on the Neel sublattice, -offset elsewhere
    double h_mhz = 1.0;              // target disorder strength
    double max_step_ns = 0.5;
    int realizations = 5;
    std::uint64_t seed = 1;
};

struct RampingPoint {
    double t_ramp_ns = 0.0;
    double f_mean = 0.0;
    double f_stddev = 0.0;
    int steps = 0;  // piecewise-constant steps per ramp
};

/// Detunings move linearly from the idle offsets to the target profile over
/// t_ramp, hold for hold_ns and return. F compares the final basis
/// distribution with the instant-ramp (hold only) reference.
std::vector<RampingPoint> run_ramping_study(const LatticeSpec& lattice, std::span<const double> ramp_grid_ns,
                                            const RampingConfig& config);

/// Single-profile ramped evolution from the Neel state.
StateVector ramped_evolution(const LatticeSpec& lattice, std::span<const double> target_mhz,
                             std::span<const double> idle_mhz, double t_ramp_ns, double hold_ns,
                             double max_step_ns);

// ---------------------------------------------------------------------------
// Tabular output

using Cell = std::variant<double, std::int64_t, std::uint64_t, std::string>;

/// "%.15g"; non-finite values print as nan, inf, -inf.
std::string format_number(double x);

struct Table {
    std::string name;  // file stem
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> row);
    std::string to_csv() const;
};

struct ExperimentRecord {
    std::string kind;
    nlohmann::json config;
    std::uint64_t seed = 0;
    nlohmann::json summary;
    std::vector<Table> tables;
    std::vector<std::string> extra_files;  // non-CSV artifacts such as model.json
    double duration_s = 0.0;

    nlohmann::json to_json() const;
};

}  // namespace qns
