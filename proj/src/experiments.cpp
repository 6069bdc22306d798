#include "qns/experiments.hpp"

#include "qns/parallel.hpp"
#include "qns/propagator.hpp"
#include "qns/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace qns {

namespace {

double mean_of(std::span<const double> v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation, 0 for fewer than two values.
double stddev_of(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

void require_ascending(std::span<const double> grid, const char* what) {
    if (grid.empty()) throw std::invalid_argument(std::string(what) + ": empty grid");
    if (grid.front() < 0.0) throw std::invalid_argument(std::string(what) + ": negative time");
    if (!std::is_sorted(grid.begin(), grid.end()))
        throw std::invalid_argument(std::string(what) + ": grid must be ascending");
}

}  // namespace

// ---------------------------------------------------------------------------
// Noise

void NoiseModel::validate() const {
    if (!(f00 > 0.5 && f00 <= 1.0)) throw std::invalid_argument("noise_f00 must lie in (0.5, 1]");
    if (!(f11 > 0.5 && f11 <= 1.0)) throw std::invalid_argument("noise_f11 must lie in (0.5, 1]");
    if (shots < 0) throw std::invalid_argument("noise_shots must be >= 0");
}

double apply_readout_noise(double p, const NoiseModel& noise, std::uint64_t stream) {
    noise.validate();
    if (!(p >= -1e-9 && p <= 1.0 + 1e-9)) throw std::invalid_argument("apply_readout_noise: p outside [0, 1]");
    p = std::clamp(p, 0.0, 1.0);
    const double pm = p * noise.f11 + (1.0 - p) * (1.0 - noise.f00);
    if (noise.shots == 0) return pm;
    Rng rng(derive_seed(noise.seed, "shots", stream));
    int ones = 0;
    for (int s = 0; s < noise.shots; ++s) ones += uniform01(rng) < pm;
    return static_cast<double>(ones) / static_cast<double>(noise.shots);
}

// ---------------------------------------------------------------------------
// Datasets

std::vector<LabeledSample> generate_dataset(const LatticeSpec& lattice, int n_per_class, double h_erg_mhz,
                                            double h_loc_mhz, double t_state_ns, std::uint64_t seed) {
    (void)lattice;
    if (n_per_class < 1) throw std::invalid_argument("generate_dataset: n_per_class must be >= 1");
    if (h_erg_mhz < 0.0 || h_loc_mhz < 0.0) throw std::invalid_argument("generate_dataset: negative disorder");
    if (t_state_ns < 0.0) throw std::invalid_argument("generate_dataset: negative preparation time");
    std::vector<LabeledSample> out;
    out.reserve(static_cast<std::size_t>(2 * n_per_class));
    for (int i = 0; i < 2 * n_per_class; ++i) {
        LabeledSample s;
        s.label = i % 2 == 0 ? Label::ergodic : Label::localized;
        s.h_mhz = s.label == Label::ergodic ? h_erg_mhz : h_loc_mhz;
        s.seed = derive_seed(seed, "sample", static_cast<std::uint64_t>(i));
        s.t_state_ns = t_state_ns;
        out.push_back(s);
    }
    return out;
}

Bitmask initial_pattern(const LatticeSpec& lattice, PrepKind prep) {
    Bitmask b = neel_pattern(lattice);
    if (prep == PrepKind::probe) b &= ~(Bitmask{1} << lattice.readout_index());
    return b;
}

HamiltonianOp preparation_hamiltonian(const LatticeSpec& lattice, const DisorderProfile& disorder, PrepKind prep) {
    if (prep == PrepKind::standard) return HamiltonianOp(lattice, disorder);
    const int probe = lattice.readout_index();
    std::vector<Edge> kept;
    for (const Edge& e : lattice.edges())
        if (e.i != probe && e.j != probe) kept.push_back(e);
    return HamiltonianOp(lattice.num_qubits(), std::move(kept), disorder.detunings_mhz);
}

StateVector prepare_state(const LatticeSpec& lattice, const LabeledSample& sample, PrepKind prep) {
    const DisorderProfile disorder = sample_disorder(lattice, sample.h_mhz, sample.seed);
    const StateVector s0 = basis_state(lattice, initial_pattern(lattice, prep));
    return evolve(preparation_hamiltonian(lattice, disorder, prep), s0, sample.t_state_ns);
}

LabeledStates prepare_states(const LatticeSpec& lattice, std::span<const LabeledSample> samples, PrepKind prep) {
    LabeledStates out;
    out.states.resize(samples.size());
    out.labels.resize(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
        out.states[i] = prepare_state(lattice, samples[i], prep);
        out.labels[i] = static_cast<int>(samples[i].label);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Imbalance

ImbalanceResult run_imbalance_dynamics(const LatticeSpec& lattice, double h_mhz, std::span<const double> time_grid_ns,
                                       int realizations, std::uint64_t seed) {
    if (realizations < 1) throw std::invalid_argument("run_imbalance_dynamics: realizations must be >= 1");
    require_ascending(time_grid_ns, "run_imbalance_dynamics");
    const auto reps = static_cast<std::size_t>(realizations);
    const std::size_t nt = time_grid_ns.size();
    const auto it200 = std::find(time_grid_ns.begin(), time_grid_ns.end(), 200.0);

    std::vector<double> values(reps * nt);
    std::vector<double> at200(reps);
    parallel_for(reps, [&](std::size_t r) {
        const DisorderProfile d = sample_disorder(lattice, h_mhz, derive_seed(seed, "imbalance", r));
        const HamiltonianOp h(lattice, d);
        const StateVector s0 = basis_state(lattice, neel_pattern(lattice));
        StateVector s = s0;
        double t_prev = 0.0;
        for (std::size_t k = 0; k < nt; ++k) {
            s = evolve(h, s, time_grid_ns[k] - t_prev);
            t_prev = time_grid_ns[k];
            values[r * nt + k] = imbalance(s, lattice);
        }
        at200[r] = it200 != time_grid_ns.end()
                       ? values[r * nt + static_cast<std::size_t>(it200 - time_grid_ns.begin())]
                       : imbalance(evolve(h, s0, 200.0), lattice);
    });

    ImbalanceResult out;
    out.h_mhz = h_mhz;
    out.realizations = realizations;
    std::vector<double> column(reps);
    for (std::size_t k = 0; k < nt; ++k) {
        for (std::size_t r = 0; r < reps; ++r) column[r] = values[r * nt + k];
        out.curve.push_back({time_grid_ns[k], mean_of(column), stddev_of(column)});
    }
    out.i200_mean = mean_of(at200);
    out.i200_stddev = stddev_of(at200);
    return out;
}

// ---------------------------------------------------------------------------
// Classification

void ClassificationConfig::validate() const {
    if (n_train_per_class < 1) throw std::invalid_argument("n_train_per_class must be >= 1");
    if (n_test_per_class < 1) throw std::invalid_argument("n_test_per_class must be >= 1");
    if (init_search && init_candidates < 1) throw std::invalid_argument("init_candidates must be >= 1");
    if (init_search && init_per_class < 1) throw std::invalid_argument("init_per_class must be >= 1");
    if (h_erg_mhz < 0.0 || h_loc_mhz < 0.0) throw std::invalid_argument("disorder strengths must be >= 0");
    if (t_state_ns < 0.0) throw std::invalid_argument("t_state_ns must be >= 0");
    training.validate();
    if (noise_enabled) noise.validate();
}

std::vector<double> evaluate_model(const TrainedModel& model, const LatticeSpec& lattice,
                                   std::span<const LabeledSample> samples, PrepKind prep) {
    const LatticeSpec lat = lattice.with_readout(model.params.readout_index);
    const Qnn qnn(lat, model.config.t0_ns);
    std::vector<double> p(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) { p[i] = qnn.forward(prepare_state(lat, samples[i], prep), model.params); });
    return p;
}

ClassificationResult run_classification_experiment(const LatticeSpec& lattice, const ClassificationConfig& config) {
    config.validate();
    TrainingConfig training = config.training;
    training.seed = derive_seed(config.seed, "training");

    ClassificationResult out;
    const auto train_samples = generate_dataset(lattice, config.n_train_per_class, config.h_erg_mhz, config.h_loc_mhz,
                                                config.t_state_ns, derive_seed(config.seed, "train-data"));
    out.test_samples = generate_dataset(lattice, config.n_test_per_class, config.h_erg_mhz, config.h_loc_mhz,
                                        config.t_state_ns, derive_seed(config.seed, "test-data"));
    const LabeledStates train_set = prepare_states(lattice, train_samples, config.prep);
    const LabeledStates test_set = prepare_states(lattice, out.test_samples, config.prep);

    std::optional<QnnParams> initial;
    if (config.init_search) {
        const auto init_samples = generate_dataset(lattice, config.init_per_class, config.h_erg_mhz, config.h_loc_mhz,
                                                   config.t_state_ns, derive_seed(config.seed, "init-data"));
        const LabeledStates init_set = prepare_states(lattice, init_samples, config.prep);
        const Qnn qnn(lattice, training.t0_ns);
        out.init = init_search(qnn, init_set, training.layers, config.init_candidates,
                               derive_seed(config.seed, "init-search"), training.weights, training.threshold);
        initial = out.init.best;
    }

    out.model = train(lattice, train_set, test_set, training, initial);

    const Qnn qnn(lattice, training.t0_ns);
    const std::size_t n = test_set.size();
    out.test_probs.resize(n);
    out.test_raw.resize(n);
    parallel_for(n, [&](std::size_t i) {
        out.test_raw[i] = excitation_probability(test_set.states[i], lattice.readout_index());
        out.test_probs[i] = qnn.forward(test_set.states[i], out.model.params);
    });
    if (config.noise_enabled)
        for (std::size_t i = 0; i < n; ++i) out.test_probs[i] = apply_readout_noise(out.test_probs[i], config.noise, i);

    out.test_accuracy = accuracy(out.test_probs, test_set.labels, out.model.threshold);
    out.test_accuracy_default = accuracy(out.test_probs, test_set.labels, 0.5);
    std::vector<double> erg, loc;
    for (std::size_t i = 0; i < n; ++i) (test_set.labels[i] == 1 ? erg : loc).push_back(out.test_probs[i]);
    out.fit_ergodic = fit_gaussian(erg);
    out.fit_localized = fit_gaussian(loc);
    return out;
}

ClassificationResult run_probe_experiment(const LatticeSpec& lattice, ClassificationConfig config) {
    if (lattice.rows() != 3 || lattice.cols() != 3 || lattice.num_qubits() != 9)
        throw std::invalid_argument("probe experiment requires the full 3x3 lattice");
    config.prep = PrepKind::probe;
    config.training.calibrate_threshold = true;
    return run_classification_experiment(lattice.with_readout(default_readout(lattice)), config);
}

// ---------------------------------------------------------------------------
// Sweeps

std::vector<DisorderSweepPoint> run_disorder_sweep(const TrainedModel& model, const LatticeSpec& lattice,
                                                   std::span<const double> h_over_g_grid, int profiles_per_point,
                                                   std::uint64_t seed, double t_state_ns) {
    if (profiles_per_point < 1) throw std::invalid_argument("run_disorder_sweep: profiles_per_point must be >= 1");
    if (h_over_g_grid.empty()) throw std::invalid_argument("run_disorder_sweep: empty grid");
    const auto per = static_cast<std::size_t>(profiles_per_point);
    std::vector<LabeledSample> samples;
    samples.reserve(h_over_g_grid.size() * per);
    for (std::size_t k = 0; k < h_over_g_grid.size(); ++k) {
        if (h_over_g_grid[k] < 0.0) throw std::invalid_argument("run_disorder_sweep: negative h/g");
        for (std::size_t j = 0; j < per; ++j)
            samples.push_back({Label::localized, h_over_g_grid[k] * lattice.coupling_mhz(),
                               derive_seed(seed, "sweep-disorder", k * per + j), t_state_ns});
    }
    const auto p = evaluate_model(model, lattice, samples);

    std::vector<DisorderSweepPoint> out;
    for (std::size_t k = 0; k < h_over_g_grid.size(); ++k) {
        const std::span<const double> block(p.data() + k * per, per);
        std::size_t localized = 0;
        for (double x : block) localized += classify(x, model.threshold) == Label::localized;
        out.push_back({h_over_g_grid[k], h_over_g_grid[k] * lattice.coupling_mhz(),
                       static_cast<double>(localized) / static_cast<double>(per), mean_of(block), profiles_per_point});
    }
    return out;
}

TimeSweepResult run_time_sweep(const TrainedModel& model, const LatticeSpec& lattice, std::span<const double> t_grid_ns,
                               const TimeSweepConfig& config) {
    if (config.per_class < 1) throw std::invalid_argument("run_time_sweep: per_class must be >= 1");
    require_ascending(t_grid_ns, "run_time_sweep");
    const LatticeSpec lat = lattice.with_readout(model.params.readout_index);
    const Qnn qnn(lat, model.config.t0_ns);
    const std::size_t ns = 2 * static_cast<std::size_t>(config.per_class);
    const std::size_t nt = t_grid_ns.size();

    // Even samples ergodic, odd localized; each profile is evolved along the whole grid.
    std::vector<double> p(ns * nt);
    parallel_for(ns, [&](std::size_t i) {
        const double h = i % 2 == 0 ? config.h_erg_mhz : config.h_loc_mhz;
        const DisorderProfile d = sample_disorder(lat, h, derive_seed(config.seed, "time-sweep", i));
        const HamiltonianOp ham(lat, d);
        StateVector s = basis_state(lat, neel_pattern(lat));
        double t_prev = 0.0;
        for (std::size_t k = 0; k < nt; ++k) {
            s = evolve(ham, s, t_grid_ns[k] - t_prev);
            t_prev = t_grid_ns[k];
            p[i * nt + k] = qnn.forward(s, model.params);
        }
    });

    TimeSweepResult out;
    for (std::size_t k = 0; k < nt; ++k) {
        std::vector<double> erg, loc;
        std::size_t hits = 0;
        for (std::size_t i = 0; i < ns; ++i) {
            const double x = p[i * nt + k];
            const bool ergodic = i % 2 == 0;
            (ergodic ? erg : loc).push_back(x);
            hits += (classify(x, model.threshold) == Label::ergodic) == ergodic;
        }
        TimeSweepPoint pt;
        pt.t_ns = t_grid_ns[k];
        pt.mean_p_ergodic = mean_of(erg);
        pt.std_p_ergodic = stddev_of(erg);
        pt.mean_p_localized = mean_of(loc);
        pt.std_p_localized = stddev_of(loc);
        pt.accuracy = static_cast<double>(hits) / static_cast<double>(ns);
        pt.separation = pt.mean_p_ergodic - pt.mean_p_localized;
        out.points.push_back(pt);
    }

    for (std::size_t i = 0; i < config.retrain_t0_ns.size(); ++i) {
        ClassificationConfig c = config.retrain;
        c.h_erg_mhz = config.h_erg_mhz;
        c.h_loc_mhz = config.h_loc_mhz;
        c.training.t0_ns = config.retrain_t0_ns[i];
        c.seed = derive_seed(config.seed, "retrain", i);
        const ClassificationResult r = run_classification_experiment(lattice, c);
        out.retrain.push_back({c.training.t0_ns, r.test_accuracy, r.model.threshold});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ramping

StateVector ramped_evolution(const LatticeSpec& lattice, std::span<const double> target_mhz,
                             std::span<const double> idle_mhz, double t_ramp_ns, double hold_ns, double max_step_ns) {
    const auto nq = static_cast<std::size_t>(lattice.num_qubits());
    if (target_mhz.size() != nq || idle_mhz.size() != nq)
        throw std::invalid_argument("ramped_evolution: detuning count mismatch");
    if (t_ramp_ns < 0.0 || hold_ns < 0.0) throw std::invalid_argument("ramped_evolution: negative time");
    if (!(max_step_ns > 0.0)) throw std::invalid_argument("ramped_evolution: max_step_ns must be positive");

    StateVector s = basis_state(lattice, neel_pattern(lattice));
    std::vector<double> d(nq);
    const auto ramp = [&](std::span<const double> from, std::span<const double> to) {
        if (t_ramp_ns == 0.0) return;
        const auto steps = static_cast<int>(std::ceil(t_ramp_ns / max_step_ns));
        const double dt = t_ramp_ns / steps;
        for (int k = 0; k < steps; ++k) {
            const double f = (k + 0.5) / steps;  // midpoint of the step
            for (std::size_t i = 0; i < nq; ++i) d[i] = from[i] + (to[i] - from[i]) * f;
            s = evolve(HamiltonianOp(lattice, d), s, dt);
        }
    };
    ramp(idle_mhz, target_mhz);
    s = evolve(HamiltonianOp(lattice, target_mhz), s, hold_ns);
    ramp(target_mhz, idle_mhz);
    return s;
}

std::vector<RampingPoint> run_ramping_study(const LatticeSpec& lattice, std::span<const double> ramp_grid_ns,
                                            const RampingConfig& config) {
    if (config.realizations < 1) throw std::invalid_argument("run_ramping_study: realizations must be >= 1");
    if (ramp_grid_ns.empty()) throw std::invalid_argument("run_ramping_study: empty grid");
    for (double t : ramp_grid_ns)
        if (t < 0.0) throw std::invalid_argument("run_ramping_study: ramp times must be >= 0");
    const auto nq = static_cast<std::size_t>(lattice.num_qubits());
    const Bitmask neel = neel_pattern(lattice);
    std::vector<double> idle(nq);
    for (std::size_t i = 0; i < nq; ++i) idle[i] = (neel >> i) & 1 ? config.idle_offset_mhz : -config.idle_offset_mhz;

    const auto reps = static_cast<std::size_t>(config.realizations);
    std::vector<DisorderProfile> targets(reps);
    std::vector<Eigen::VectorXd> refs(reps);
    parallel_for(reps, [&](std::size_t r) {
        targets[r] = sample_disorder(lattice, config.h_mhz, derive_seed(config.seed, "ramping", r));
        refs[r] = basis_distribution(
            ramped_evolution(lattice, targets[r].detunings_mhz, idle, 0.0, config.hold_ns, config.max_step_ns));
    });

    const std::size_t nt = ramp_grid_ns.size();
    std::vector<double> f(nt * reps);
    parallel_for(nt * reps, [&](std::size_t task) {
        const std::size_t k = task / reps;
        const std::size_t r = task % reps;
        const StateVector s = ramped_evolution(lattice, targets[r].detunings_mhz, idle, ramp_grid_ns[k],
                                               config.hold_ns, config.max_step_ns);
        f[task] = overlap_fidelity(basis_distribution(s), refs[r]);
    });

    std::vector<RampingPoint> out;
    for (std::size_t k = 0; k < nt; ++k) {
        const std::span<const double> block(f.data() + k * reps, reps);
        const double t = ramp_grid_ns[k];
        out.push_back({t, mean_of(block), stddev_of(block),
                       t == 0.0 ? 0 : static_cast<int>(std::ceil(t / config.max_step_ns))});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tables

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.15g", x == 0.0 ? 0.0 : x);  // no "-0"
    return buf;
}

void Table::add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw std::logic_error("Table::add: column count mismatch in " + name);
    rows.push_back(std::move(row));
}

std::string Table::to_csv() const {
    std::string out;
    for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
    out += '\n';
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out += ',';
            std::visit(
                [&](const auto& v) {
                    using T = std::decay_t<decltype(v)>;
                    if constexpr (std::is_same_v<T, double>) out += format_number(v);
                    else if constexpr (std::is_same_v<T, std::string>) out += v;
                    else out += std::to_string(v);
                },
                row[c]);
        }
        out += '\n';
    }
    return out;
}

nlohmann::json ExperimentRecord::to_json() const {
    nlohmann::json files = nlohmann::json::array();
    for (const Table& t : tables) files.push_back(t.name + ".csv");
    for (const std::string& f : extra_files) files.push_back(f);
    return {{"kind", kind},           {"seed", seed},       {"config", config},
            {"summary", summary},     {"files", files},    {"duration_s", duration_s}};
}

}  // namespace qns
