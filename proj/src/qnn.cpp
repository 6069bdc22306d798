#include "qns/qnn.hpp"

#include "qns/parallel.hpp"
#include "qns/random.hpp"
#include "qns/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace qns {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2;
constexpr double kTwoPi = 2 * std::numbers::pi;

}  // namespace

// ---------------------------------------------------------------------------
// Parameters

QnnParams QnnParams::zeros(int num_qubits, int layers, int readout_index) {
    QnnParams p;
    p.num_qubits = num_qubits;
    p.layers = layers;
    p.readout_index = readout_index;
    p.theta = Eigen::VectorXd::Zero(p.rotations());
    p.phi = Eigen::VectorXd::Zero(p.rotations());
    p.validate();
    return p;
}

Eigen::VectorXd QnnParams::flat() const {
    Eigen::VectorXd x(size());
    x << theta, phi;
    return x;
}

QnnParams QnnParams::from_flat(const QnnParams& layout, const Eigen::VectorXd& x) {
    if (x.size() != layout.size()) throw std::invalid_argument("QnnParams::from_flat: length mismatch");
    QnnParams p = layout;
    const int d = layout.rotations();
    p.theta = x.head(d);
    p.phi = x.tail(d);
    return p;
}

void QnnParams::validate() const {
    if (num_qubits < 1) throw std::invalid_argument("QnnParams: num_qubits must be positive");
    if (layers < 1) throw std::invalid_argument("QnnParams: layers must be >= 1");
    if (readout_index < 0 || readout_index >= num_qubits)
        throw std::invalid_argument("QnnParams: readout_index out of range");
    if (theta.size() != rotations() || phi.size() != rotations())
        throw std::invalid_argument("QnnParams: expected " + std::to_string(rotations()) +
                                    " theta and phi entries");
}

QnnParams random_params(int num_qubits, int layers, int readout_index, std::uint64_t seed) {
    QnnParams p = QnnParams::zeros(num_qubits, layers, readout_index);
    Rng rng(seed);
    for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta[i] = uniform(rng, 0.0, kTwoPi);
    for (Eigen::Index i = 0; i < p.phi.size(); ++i) p.phi[i] = uniform(rng, 0.0, kTwoPi);
    return p;
}

// ---------------------------------------------------------------------------
// Circuit

AnalogBlock::AnalogBlock(HamiltonianOp h, double t_ns, EvolveOptions options)
    : h_(std::move(h)), t_ns_(t_ns), options_(options) {
    if (!(t_ns >= 0.0)) throw std::invalid_argument("AnalogBlock: negative time");
    const int n = h_.num_qubits();
    if (binomial(n, n / 2) > static_cast<double>(kDenseSectorLimit)) return;
    for (int k = 0; k <= n; ++k) {
        const SectorBasis basis(n, k);
        const Eigen::MatrixXd hk = sector_hamiltonian(h_, basis);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hk);
        if (eig.info() != Eigen::Success) throw std::runtime_error("AnalogBlock: eigensolver failed");
        const Eigen::MatrixXd& v = eig.eigenvectors();
        Eigen::VectorXcd phase(basis.size());
        for (Eigen::Index i = 0; i < basis.size(); ++i)
            phase[i] = std::polar(1.0, -eig.eigenvalues()[i] * t_ns);
        Sector s;
        s.states = basis.states();
        s.propagator = v.cast<std::complex<double>>() * phase.asDiagonal() * v.transpose();
        sectors_.push_back(std::move(s));
    }
}

void AnalogBlock::apply(StateVector& state) const {
    if (state.num_qubits() != h_.num_qubits()) throw std::invalid_argument("AnalogBlock: dimension mismatch");
    if (!dense()) {
        state = evolve(h_, state, t_ns_, options_);
        return;
    }
    auto& amps = state.mutable_amplitudes();
    Eigen::VectorXcd x, y;
    for (const Sector& s : sectors_) {
        const auto n = static_cast<Eigen::Index>(s.states.size());
        x.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) x[i] = amps[static_cast<Eigen::Index>(s.states[static_cast<std::size_t>(i)])];
        y.noalias() = s.propagator * x;
        for (Eigen::Index i = 0; i < n; ++i) amps[static_cast<Eigen::Index>(s.states[static_cast<std::size_t>(i)])] = y[i];
    }
}

Qnn::Qnn(const LatticeSpec& lattice, double t0_ns, EvolveOptions options)
    : lattice_(lattice),
      t0_ns_(t0_ns),
      analog_(std::make_shared<AnalogBlock>(HamiltonianOp::zero_disorder(lattice), t0_ns, options)) {}

StateVector Qnn::run(const StateVector& input, const QnnParams& params) const {
    const int nq = lattice_.num_qubits();
    if (input.num_qubits() != nq || params.num_qubits != nq)
        throw std::invalid_argument("qnn: parameter/lattice size mismatch");
    if (params.theta.size() != params.rotations() || params.phi.size() != params.rotations())
        throw std::invalid_argument("qnn: malformed parameter vector");
    StateVector s = input;
    for (int l = 0; l < params.layers; ++l) {
        for (int q = 0; q < nq; ++q) {
            const int r = l * nq + q;
            apply_rotation(s, q, params.theta[r], params.phi[r]);
        }
        analog_->apply(s);
    }
    const int last = params.rotations() - 1;
    apply_rotation(s, params.readout_index, params.theta[last], params.phi[last]);
    return s;
}

double Qnn::forward(const StateVector& input, const QnnParams& params) const {
    return excitation_probability(run(input, params), params.readout_index);
}

double qnn_forward(const StateVector& input, const QnnParams& params, const LatticeSpec& lattice, double t0_ns) {
    return Qnn(lattice, t0_ns).forward(input, params);
}

// ---------------------------------------------------------------------------
// Loss

double bce_loss(std::span<const double> probs, std::span<const int> labels, std::span<const double> weights) {
    if (probs.size() != labels.size() || probs.size() != weights.size())
        throw std::invalid_argument("bce_loss: length mismatch");
    if (probs.empty()) throw std::invalid_argument("bce_loss: empty batch");
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = std::clamp(probs[i], kProbabilityClip, 1.0 - kProbabilityClip);
        const double y = labels[i];
        sum -= y * weights[i] * std::log(p) + (1.0 - y) * weights[i] * std::log(1.0 - p);
    }
    return sum / static_cast<double>(probs.size());
}

double bce_loss_derivative(double p, int label, double weight, std::size_t n) {
    const double q = std::clamp(p, kProbabilityClip, 1.0 - kProbabilityClip);
    const double y = label;
    return -weight * (y / q - (1.0 - y) / (1.0 - q)) / static_cast<double>(n);
}

Label classify(double p, double threshold) { return p < threshold ? Label::localized : Label::ergodic; }

double accuracy(std::span<const double> probs, std::span<const int> labels, double threshold) {
    if (probs.size() != labels.size()) throw std::invalid_argument("accuracy: length mismatch");
    if (probs.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < probs.size(); ++i)
        hits += static_cast<int>(classify(probs[i], threshold)) == labels[i];
    return static_cast<double>(hits) / static_cast<double>(probs.size());
}

std::string to_string(GradientMode m) {
    switch (m) {
        case GradientMode::paper_shift: return "paper-shift";
        case GradientMode::chain_shift: return "chain-shift";
        case GradientMode::finite_difference: return "finite-difference";
    }
    return "?";
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "gradient-descent"; }

std::string to_string(BatchMode b) { return b == BatchMode::full_batch ? "full-batch" : "per-sample"; }

GradientMode parse_gradient_mode(const std::string& s) {
    if (s == "paper-shift") return GradientMode::paper_shift;
    if (s == "chain-shift") return GradientMode::chain_shift;
    if (s == "finite-difference") return GradientMode::finite_difference;
    throw std::invalid_argument("unknown gradient mode '" + s + "'");
}

OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "gradient-descent") return OptimizerKind::gradient_descent;
    throw std::invalid_argument("unknown optimizer '" + s + "'");
}

BatchMode parse_batch_mode(const std::string& s) {
    if (s == "full-batch") return BatchMode::full_batch;
    if (s == "per-sample") return BatchMode::per_sample;
    throw std::invalid_argument("unknown batch mode '" + s + "'");
}

LossProblem::LossProblem(const Qnn& qnn, const LabeledStates& data, ClassWeights weights)
    : qnn_(qnn), data_(data), weights_(weights), indices_(data.size()) {
    if (data.states.size() != data.labels.size()) throw std::invalid_argument("LossProblem: label count mismatch");
    if (!(weights.ergodic > 0.0) || !(weights.localized > 0.0))
        throw std::invalid_argument("LossProblem: class weights must be positive");
    std::iota(indices_.begin(), indices_.end(), std::size_t{0});
}

LossProblem LossProblem::subset(std::vector<std::size_t> indices) const {
    LossProblem sub = *this;
    for (std::size_t& i : indices) i = indices_.at(i);
    sub.indices_ = std::move(indices);
    return sub;
}

std::vector<double> LossProblem::probabilities(const QnnParams& params) const {
    std::vector<double> p(samples());
    parallel_for(samples(), [&](std::size_t k) { p[k] = qnn_.forward(state(k), params); });
    return p;
}

double LossProblem::loss(const QnnParams& params) const {
    const auto p = probabilities(params);
    std::vector<int> y(samples());
    std::vector<double> w(samples());
    for (std::size_t k = 0; k < samples(); ++k) {
        y[k] = label(k);
        w[k] = weight(k);
    }
    return bce_loss(p, y, w);
}

// ---------------------------------------------------------------------------
// Gradients

namespace {

/// p for every (sample, parameter) with parameter j moved by +step_j and -step_j.
struct ShiftedProbs {
    std::vector<double> plus;   // [sample * P + j]
    std::vector<double> minus;
};

ShiftedProbs shifted_probabilities(const LossProblem& problem, const QnnParams& params,
                                   const Eigen::VectorXd& steps) {
    const auto s_count = problem.samples();
    const auto p_count = static_cast<std::size_t>(params.size());
    const Eigen::VectorXd x = params.flat();
    ShiftedProbs out;
    out.plus.resize(s_count * p_count);
    out.minus.resize(s_count * p_count);
    parallel_for(s_count * p_count, [&](std::size_t task) {
        const std::size_t s = task / p_count;
        const auto j = static_cast<Eigen::Index>(task % p_count);
        Eigen::VectorXd xs = x;
        xs[j] = x[j] + steps[j];
        out.plus[task] = problem.qnn().forward(problem.state(s), QnnParams::from_flat(params, xs));
        xs[j] = x[j] - steps[j];
        out.minus[task] = problem.qnn().forward(problem.state(s), QnnParams::from_flat(params, xs));
    });
    return out;
}

Eigen::VectorXd loss_differences(const LossProblem& problem, const QnnParams& params, const ShiftedProbs& sp,
                                 const Eigen::VectorXd& denominators) {
    const auto s_count = problem.samples();
    const auto p_count = static_cast<std::size_t>(params.size());
    std::vector<int> y(s_count);
    std::vector<double> w(s_count);
    for (std::size_t s = 0; s < s_count; ++s) {
        y[s] = problem.label(s);
        w[s] = problem.weight(s);
    }
    Eigen::VectorXd g(params.size());
    std::vector<double> pp(s_count), pm(s_count);
    for (std::size_t j = 0; j < p_count; ++j) {
        for (std::size_t s = 0; s < s_count; ++s) {
            pp[s] = sp.plus[s * p_count + j];
            pm[s] = sp.minus[s * p_count + j];
        }
        const auto jj = static_cast<Eigen::Index>(j);
        g[jj] = (bce_loss(pp, y, w) - bce_loss(pm, y, w)) / denominators[jj];
    }
    return g;
}

}  // namespace

Eigen::VectorXd gradient_shift(const LossProblem& problem, const QnnParams& params, GradientMode mode,
                               double fd_step) {
    params.validate();
    const int d = params.rotations();
    const auto p_count = static_cast<std::size_t>(params.size());
    if (mode == GradientMode::paper_shift) {
        const Eigen::VectorXd steps = Eigen::VectorXd::Constant(params.size(), kHalfPi);
        const auto sp = shifted_probabilities(problem, params, steps);
        return loss_differences(problem, params, sp, Eigen::VectorXd::Constant(params.size(), 2.0));
    }
    if (mode != GradientMode::chain_shift)
        throw std::invalid_argument("gradient_shift: mode must be paper-shift or chain-shift");
    if (!(fd_step > 0.0)) throw std::invalid_argument("gradient_shift: fd_step must be positive");

    Eigen::VectorXd steps(params.size());
    steps.head(d).setConstant(fd_step);
    steps.tail(d).setConstant(kHalfPi);
    const auto sp = shifted_probabilities(problem, params, steps);
    const auto base = problem.probabilities(params);

    Eigen::VectorXd g = Eigen::VectorXd::Zero(params.size());
    for (std::size_t s = 0; s < problem.samples(); ++s) {
        const double dldp = bce_loss_derivative(base[s], problem.label(s), problem.weight(s), problem.samples());
        for (std::size_t j = 0; j < p_count; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            const double diff = sp.plus[s * p_count + j] - sp.minus[s * p_count + j];
            const double dpdx = jj < d ? diff / (2.0 * fd_step) : 0.5 * diff;
            g[jj] += dldp * dpdx;
        }
    }
    return g;
}

Eigen::VectorXd gradient_fd(const LossProblem& problem, const QnnParams& params, double step) {
    params.validate();
    if (!(step > 0.0)) throw std::invalid_argument("gradient_fd: step must be positive");
    const Eigen::VectorXd steps = Eigen::VectorXd::Constant(params.size(), step);
    const auto sp = shifted_probabilities(problem, params, steps);
    return loss_differences(problem, params, sp, Eigen::VectorXd::Constant(params.size(), 2.0 * step));
}

Eigen::VectorXd gradient(const LossProblem& problem, const QnnParams& params, GradientMode mode, double fd_step) {
    if (mode == GradientMode::finite_difference) return gradient_fd(problem, params, fd_step);
    return gradient_shift(problem, params, mode, fd_step);
}

// ---------------------------------------------------------------------------
// Initialisation and training

InitSearchResult init_search(const Qnn& qnn, const LabeledStates& data, int layers, int n_candidates,
                             std::uint64_t seed, ClassWeights weights, double threshold) {
    if (n_candidates < 1) throw std::invalid_argument("init_search: need at least one candidate");
    if (data.size() == 0) throw std::invalid_argument("init_search: empty dataset");
    const LatticeSpec& lattice = qnn.lattice();
    const LossProblem problem(qnn, data, weights);

    std::vector<QnnParams> params(static_cast<std::size_t>(n_candidates));
    for (int c = 0; c < n_candidates; ++c)
        params[static_cast<std::size_t>(c)] = random_params(lattice.num_qubits(), layers, lattice.readout_index(),
                                                            derive_seed(seed, "init-candidate", static_cast<std::uint64_t>(c)));

    // Flattened (candidate, sample) tasks keep every worker busy.
    const std::size_t n = data.size();
    std::vector<double> probs(params.size() * n);
    parallel_for(probs.size(), [&](std::size_t task) {
        probs[task] = qnn.forward(data.states[task % n], params[task / n]);
    });

    std::vector<double> w(n);
    for (std::size_t s = 0; s < n; ++s) w[s] = weights(data.labels[s]);

    InitSearchResult result;
    for (std::size_t c = 0; c < params.size(); ++c) {
        const std::span<const double> p(probs.data() + c * n, n);
        InitCandidate cand{bce_loss(p, data.labels, w), accuracy(p, data.labels, threshold)};
        if (c == 0 || cand.loss < result.candidates[static_cast<std::size_t>(result.best_index)].loss)
            result.best_index = static_cast<int>(c);
        result.candidates.push_back(cand);
    }
    result.best = params[static_cast<std::size_t>(result.best_index)];
    return result;
}

void TrainingConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("training: epochs must be >= 1");
    if (layers < 1) throw std::invalid_argument("training: layers must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("training: learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("training: Adam betas must lie in [0, 1)");
    if (!(weights.ergodic > 0.0) || !(weights.localized > 0.0))
        throw std::invalid_argument("training: class weights must be positive");
    if (!(fd_step > 0.0)) throw std::invalid_argument("training: fd_step must be positive");
    if (!(t0_ns >= 0.0)) throw std::invalid_argument("training: t0_ns must be non-negative");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("training: threshold must lie in [0, 1]");
}

namespace {

class Optimizer {
  public:
    Optimizer(const TrainingConfig& c, Eigen::Index n)
        : c_(c), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

    void step(Eigen::VectorXd& x, const Eigen::VectorXd& g) {
        if (c_.optimizer == OptimizerKind::gradient_descent) {
            x -= c_.learning_rate * g;
            return;
        }
        ++t_;
        m_ = c_.beta1 * m_ + (1.0 - c_.beta1) * g;
        v_ = c_.beta2 * v_ + (1.0 - c_.beta2) * g.cwiseAbs2();
        const double bc1 = 1.0 - std::pow(c_.beta1, t_);
        const double bc2 = 1.0 - std::pow(c_.beta2, t_);
        x.array() -= c_.learning_rate * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + c_.adam_epsilon);
    }

  private:
    const TrainingConfig& c_;
    Eigen::VectorXd m_;
    Eigen::VectorXd v_;
    int t_ = 0;
};

}  // namespace

TrainedModel train(const LatticeSpec& lattice, const LabeledStates& train_set, const LabeledStates& test_set,
                   const TrainingConfig& config, std::optional<QnnParams> initial) {
    config.validate();
    if (train_set.size() == 0) throw std::invalid_argument("train: empty training set");
    const Qnn qnn(lattice, config.t0_ns);
    QnnParams params = initial ? *initial
                               : random_params(lattice.num_qubits(), config.layers, lattice.readout_index(),
                                               derive_seed(config.seed, "train-init"));
    params.validate();
    if (params.num_qubits != lattice.num_qubits()) throw std::invalid_argument("train: parameter/lattice mismatch");

    const LossProblem problem(qnn, train_set, config.weights);
    const LossProblem test_problem(qnn, test_set, config.weights);
    Optimizer opt(config, params.size());

    TrainedModel model;
    model.config = config;
    model.lattice = to_options(lattice);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        const auto p = problem.probabilities(params);
        std::vector<double> w(p.size());
        for (std::size_t k = 0; k < p.size(); ++k) w[k] = problem.weight(k);
        rec.loss = bce_loss(p, train_set.labels, w);
        rec.train_accuracy = accuracy(p, train_set.labels, config.threshold);

        Eigen::VectorXd x = params.flat();
        if (config.batch_mode == BatchMode::full_batch) {
            opt.step(x, gradient(problem, params, config.gradient_mode, config.fd_step));
        } else {
            std::vector<std::size_t> order(train_set.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            Rng rng(derive_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
            for (std::size_t s : order) {
                const QnnParams cur = QnnParams::from_flat(params, x);
                opt.step(x, gradient(problem.subset({s}), cur, config.gradient_mode, config.fd_step));
            }
        }
        params = QnnParams::from_flat(params, x);

        if (test_set.size() > 0) {
            const auto pt = test_problem.probabilities(params);
            rec.test_accuracy = accuracy(pt, test_set.labels, config.threshold);
        }
        model.history.push_back(rec);
    }
    model.params = params;
    model.threshold = config.threshold;
    if (config.calibrate_threshold) model.threshold = calibrate_threshold(problem.probabilities(params), train_set.labels);
    return model;
}

// ---------------------------------------------------------------------------
// Threshold calibration

GaussianFit fit_gaussian(std::span<const double> values) {
    GaussianFit f;
    f.count = static_cast<int>(values.size());
    if (values.empty()) return f;
    f.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - f.mean) * (v - f.mean);
        f.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return f;
}

double calibrate_threshold(std::span<const double> probs, std::span<const int> labels) {
    if (probs.size() != labels.size()) throw std::invalid_argument("calibrate_threshold: length mismatch");
    std::vector<double> erg, loc;
    for (std::size_t i = 0; i < probs.size(); ++i) (labels[i] == 1 ? erg : loc).push_back(probs[i]);
    if (erg.empty() || loc.empty()) throw std::invalid_argument("calibrate_threshold: both classes are required");
    const GaussianFit a = fit_gaussian(loc);
    const GaussianFit b = fit_gaussian(erg);
    const double mid = 0.5 * (a.mean + b.mean);
    if (!(a.stddev > 0.0) || !(b.stddev > 0.0)) return mid;

    const double lo = std::min(a.mean, b.mean);
    const double hi = std::max(a.mean, b.mean);
    // log N(x; a) = log N(x; b) rearranged to qa x^2 + qb x + qc = 0.
    const double va = a.stddev * a.stddev;
    const double vb = b.stddev * b.stddev;
    const double qa = 0.5 / vb - 0.5 / va;
    const double qb = a.mean / va - b.mean / vb;
    const double qc = 0.5 * b.mean * b.mean / vb - 0.5 * a.mean * a.mean / va + std::log(b.stddev / a.stddev);
    std::vector<double> roots;
    if (std::abs(qa) < 1e-14 * (0.5 / va + 0.5 / vb)) {
        if (std::abs(qb) > 0.0) roots.push_back(-qc / qb);
    } else {
        const double disc = qb * qb - 4.0 * qa * qc;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            const double q = -0.5 * (qb + std::copysign(sq, qb));
            if (q != 0.0) roots.push_back(qc / q);
            roots.push_back(q / qa);
        }
    }
    for (double r : roots)
        if (r >= lo && r <= hi && hi > lo) return r;
    return mid;
}

// ---------------------------------------------------------------------------
// Serialisation

nlohmann::json to_json(const TrainingConfig& c) {
    return {
        {"epochs", c.epochs},
        {"layers", c.layers},
        {"optimizer", to_string(c.optimizer)},
        {"learning_rate", c.learning_rate},
        {"beta1", c.beta1},
        {"beta2", c.beta2},
        {"adam_epsilon", c.adam_epsilon},
        {"w_ergodic", c.weights.ergodic},
        {"w_localized", c.weights.localized},
        {"gradient_mode", to_string(c.gradient_mode)},
        {"fd_step", c.fd_step},
        {"t0_ns", c.t0_ns},
        {"batch_mode", to_string(c.batch_mode)},
        {"threshold", c.threshold},
        {"calibrate_threshold", c.calibrate_threshold},
        {"seed", c.seed},
    };
}

TrainingConfig training_config_from_json(const nlohmann::json& j) {
    TrainingConfig c;
    c.epochs = j.at("epochs").get<int>();
    c.layers = j.at("layers").get<int>();
    c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    c.learning_rate = j.at("learning_rate").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.adam_epsilon = j.at("adam_epsilon").get<double>();
    c.weights.ergodic = j.at("w_ergodic").get<double>();
    c.weights.localized = j.at("w_localized").get<double>();
    c.gradient_mode = parse_gradient_mode(j.at("gradient_mode").get<std::string>());
    c.fd_step = j.at("fd_step").get<double>();
    c.t0_ns = j.at("t0_ns").get<double>();
    c.batch_mode = parse_batch_mode(j.at("batch_mode").get<std::string>());
    c.threshold = j.at("threshold").get<double>();
    c.calibrate_threshold = j.at("calibrate_threshold").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

namespace {

nlohmann::json lattice_json(const LatticeOptions& o) {
    nlohmann::json inactive = nlohmann::json::array();
    for (const Site& s : o.inactive_sites) inactive.push_back({s.row, s.col});
    nlohmann::json j = {{"rows", o.rows}, {"cols", o.cols}, {"inactive_sites", inactive}, {"coupling_mhz", o.coupling_mhz}};
    j["readout_index"] = o.readout_index ? nlohmann::json(*o.readout_index) : nlohmann::json(nullptr);
    return j;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

nlohmann::json to_json(const TrainedModel& m) {
    nlohmann::json history = nlohmann::json::array();
    for (const EpochRecord& r : m.history)
        history.push_back({{"epoch", r.epoch}, {"loss", r.loss}, {"train_accuracy", r.train_accuracy},
                           {"test_accuracy", r.test_accuracy}});
    return {
        {"format", "qns-model"},
        {"version", 1},
        {"num_qubits", m.params.num_qubits},
        {"layers", m.params.layers},
        {"readout_index", m.params.readout_index},
        {"theta", to_std(m.params.theta)},
        {"phi", to_std(m.params.phi)},
        {"threshold", m.threshold},
        {"lattice", lattice_json(m.lattice)},
        {"config", to_json(m.config)},
        {"history", history},
    };
}

TrainedModel model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "qns-model") throw std::invalid_argument("model: not a qns-model document");
    if (j.value("version", 0) != 1) throw std::invalid_argument("model: unsupported version");
    TrainedModel m;
    m.params.num_qubits = j.at("num_qubits").get<int>();
    m.params.layers = j.at("layers").get<int>();
    m.params.readout_index = j.at("readout_index").get<int>();
    const auto theta = j.at("theta").get<std::vector<double>>();
    const auto phi = j.at("phi").get<std::vector<double>>();
    m.params.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    m.params.phi = Eigen::Map<const Eigen::VectorXd>(phi.data(), static_cast<Eigen::Index>(phi.size()));
    m.params.validate();
    m.threshold = j.at("threshold").get<double>();
    m.config = training_config_from_json(j.at("config"));
    const auto& lj = j.at("lattice");
    m.lattice.rows = lj.at("rows").get<int>();
    m.lattice.cols = lj.at("cols").get<int>();
    m.lattice.coupling_mhz = lj.at("coupling_mhz").get<double>();
    for (const auto& s : lj.at("inactive_sites")) m.lattice.inactive_sites.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
    if (!lj.at("readout_index").is_null()) m.lattice.readout_index = lj.at("readout_index").get<int>();
    for (const auto& r : j.at("history"))
        m.history.push_back({r.at("epoch").get<int>(), r.at("loss").get<double>(), r.at("train_accuracy").get<double>(),
                             r.at("test_accuracy").get<double>()});
    return m;
}

}  // namespace qns
