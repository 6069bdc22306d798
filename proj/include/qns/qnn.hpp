#pragma once

#include "qns/lattice.hpp"
#include "qns/propagator.hpp"
#include "qns/statevec.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qns {

enum class Label : int { localized = 0, ergodic = 1 };

/// Rotation angles of a digital-analog circuit with `layers` full rotation
/// layers and one trailing readout rotation. Parameter p < N_q * layers acts
/// on qubit p % N_q in layer p / N_q; the last parameter is the readout
/// rotation. The flat vector is [theta_0 .. theta_{D-1}, phi_0 .. phi_{D-1}].
struct QnnParams {
    int num_qubits = 0;
    int layers = 1;
    int readout_index = 0;
    Eigen::VectorXd theta;
    Eigen::VectorXd phi;

    static QnnParams zeros(int num_qubits, int layers, int readout_index);

    /// Number of rotations, N_q * layers + 1.
    int rotations() const { return num_qubits * layers + 1; }
    /// 2 (N_q * layers + 1).
    int size() const { return 2 * rotations(); }

    int qubit_of(int rotation) const { return rotation == rotations() - 1 ? readout_index : rotation % num_qubits; }
    int layer_of(int rotation) const { return rotation / num_qubits; }

    Eigen::VectorXd flat() const;
    static QnnParams from_flat(const QnnParams& layout, const Eigen::VectorXd& x);
    void validate() const;
};

/// exp(-i H t) for a fixed Hamiltonian and time. Small systems cache a dense
/// propagator per excitation sector (H conserves excitation number); larger
/// ones fall back to the Krylov propagator on every call.
class AnalogBlock {
  public:
    /// Sector dimension up to which dense propagators are cached.
    static constexpr Eigen::Index kDenseSectorLimit = 1024;

    AnalogBlock(HamiltonianOp h, double t_ns, EvolveOptions options = {});

    bool dense() const { return !sectors_.empty(); }
    double time_ns() const { return t_ns_; }
    void apply(StateVector& state) const;

  private:
    struct Sector {
        std::vector<Bitmask> states;
        Eigen::MatrixXcd propagator;
    };
    HamiltonianOp h_;
    double t_ns_;
    EvolveOptions options_;
    std::vector<Sector> sectors_;
};

/// Digital-analog classifier bound to a lattice and analog time t0.
class Qnn {
  public:
    Qnn(const LatticeSpec& lattice, double t0_ns, EvolveOptions options = {});

    const LatticeSpec& lattice() const { return lattice_; }
    double t0_ns() const { return t0_ns_; }

    /// Circuit output state before measurement.
    StateVector run(const StateVector& input, const QnnParams& params) const;

    /// Probability of reading the readout qubit in |1>.
    double forward(const StateVector& input, const QnnParams& params) const;

  private:
    LatticeSpec lattice_;
    double t0_ns_;
    std::shared_ptr<const AnalogBlock> analog_;
};

double qnn_forward(const StateVector& input, const QnnParams& params, const LatticeSpec& lattice, double t0_ns);

inline constexpr double kProbabilityClip = 1e-12;

/// Weighted binary cross-entropy averaged over samples; probabilities are
/// clipped to [1e-12, 1 - 1e-12] inside the loss only.
double bce_loss(std::span<const double> probs, std::span<const int> labels, std::span<const double> weights);

/// dL/dp_i for the same loss (including the 1/N factor).
double bce_loss_derivative(double p, int label, double weight, std::size_t n);

Label classify(double p, double threshold = 0.5);

/// Fraction of samples whose classification matches the label.
double accuracy(std::span<const double> probs, std::span<const int> labels, double threshold);

/// Prepared input states with labels (1 = ergodic, 0 = localized).
struct LabeledStates {
    std::vector<StateVector> states;
    std::vector<int> labels;
    std::size_t size() const { return states.size(); }
};

enum class GradientMode { paper_shift, chain_shift, finite_difference };
enum class OptimizerKind { adam, gradient_descent };
enum class BatchMode { full_batch, per_sample };

std::string to_string(GradientMode m);
std::string to_string(OptimizerKind k);
std::string to_string(BatchMode b);
GradientMode parse_gradient_mode(const std::string& s);
OptimizerKind parse_optimizer(const std::string& s);
BatchMode parse_batch_mode(const std::string& s);

struct ClassWeights {
    double ergodic = 3.0;
    double localized = 1.0;
    double operator()(int label) const { return label == 1 ? ergodic : localized; }
};

/// The loss over a fixed set of samples as a function of circuit parameters.
class LossProblem {
  public:
    LossProblem(const Qnn& qnn, const LabeledStates& data, ClassWeights weights);

    std::size_t samples() const { return indices_.size(); }
    double loss(const QnnParams& params) const;

    /// Forward probability for every sample.
    std::vector<double> probabilities(const QnnParams& params) const;

    /// Restricts the problem to a single sample (per-sample updates).
    LossProblem subset(std::vector<std::size_t> indices) const;

    const Qnn& qnn() const { return qnn_; }
    const LabeledStates& data() const { return data_; }
    const std::vector<std::size_t>& indices() const { return indices_; }
    double weight(std::size_t k) const { return weights_(data_.labels[indices_[k]]); }
    int label(std::size_t k) const { return data_.labels[indices_[k]]; }
    const StateVector& state(std::size_t k) const { return data_.states[indices_[k]]; }

  private:
    const Qnn& qnn_;
    const LabeledStates& data_;
    ClassWeights weights_;
    std::vector<std::size_t> indices_;
};

/// Two-point pi/2 shift gradients.
///   paper_shift: (L(x + pi/2 e_j) - L(x - pi/2 e_j)) / 2 on the loss, for every parameter.
///   chain_shift: shift rule on p for phi, central differences (fd_step) on p
///                for theta, chained with the analytic dL/dp.
Eigen::VectorXd gradient_shift(const LossProblem& problem, const QnnParams& params, GradientMode mode,
                               double fd_step = 1e-5);

/// Central finite differences of the loss.
Eigen::VectorXd gradient_fd(const LossProblem& problem, const QnnParams& params, double step = 1e-5);

Eigen::VectorXd gradient(const LossProblem& problem, const QnnParams& params, GradientMode mode,
                         double fd_step = 1e-5);

struct InitCandidate {
    double loss = 0.0;
    double accuracy = 0.0;
};

struct InitSearchResult {
    QnnParams best;
    int best_index = 0;
    std::vector<InitCandidate> candidates;
};

/// Uniform random angles in [0, 2 pi).
QnnParams random_params(int num_qubits, int layers, int readout_index, std::uint64_t seed);

/// Draws n_candidates parameter sets and keeps the one with the lowest loss.
InitSearchResult init_search(const Qnn& qnn, const LabeledStates& data, int layers, int n_candidates,
                             std::uint64_t seed, ClassWeights weights = {}, double threshold = 0.5);

struct TrainingConfig {
    int epochs = 25;
    int layers = 1;
    OptimizerKind optimizer = OptimizerKind::adam;
    double learning_rate = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    ClassWeights weights;
    GradientMode gradient_mode = GradientMode::chain_shift;
    double fd_step = 1e-5;
    double t0_ns = 200.0;
    BatchMode batch_mode = BatchMode::full_batch;
    double threshold = 0.5;
    bool calibrate_threshold = false;
    std::uint64_t seed = 1;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;       // Forward stage, parameters entering the epoch
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;  // Testing stage, parameters after the update
};

struct TrainedModel {
    QnnParams params;
    double threshold = 0.5;
    std::vector<EpochRecord> history;
    TrainingConfig config;
    LatticeOptions lattice;
};

/// Per epoch: Forward (train loss and accuracy), Backward (gradient and one
/// optimizer step, or one step per sample), Testing (test accuracy).
/// Starts from `initial` when given, else from random_params(config.seed).
TrainedModel train(const LatticeSpec& lattice, const LabeledStates& train_set, const LabeledStates& test_set,
                   const TrainingConfig& config, std::optional<QnnParams> initial = std::nullopt);

struct GaussianFit {
    double mean = 0.0;
    double stddev = 0.0;
    int count = 0;
};

GaussianFit fit_gaussian(std::span<const double> values);

/// Crossing of the two per-class Gaussian densities between the class means;
/// the midpoint of the means when there is none or a spread is zero.
double calibrate_threshold(std::span<const double> probs, std::span<const int> labels);

nlohmann::json to_json(const TrainingConfig& config);
TrainingConfig training_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& j);

}  // namespace qns
