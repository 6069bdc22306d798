#include "oracles.hpp"

#include "qns/experiments.hpp"
#include "qns/qnn.hpp"
#include "qns/random.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace qns;

namespace {

constexpr double kPi = std::numbers::pi;

StateVector random_state(int n, std::uint64_t seed) {
    Rng rng(seed);
    Amplitudes a(Eigen::Index{1} << n);
    for (auto& x : a) x = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
    return StateVector(n, a);
}

double dense_forward(const StateVector& input, const QnnParams& p, const LatticeSpec& l, double t0) {
    return oracle::circuit_probability(input.amplitudes(), l.num_qubits(), l.edges(), p.theta, p.phi, p.layers,
                                       p.readout_index, t0);
}

LabeledStates small_dataset(const LatticeSpec& l, int per_class, std::uint64_t seed) {
    const auto samples = generate_dataset(l, per_class, 1.0, 50.0, 200.0, seed);
    return prepare_states(l, samples);
}

}  // namespace

TEST_CASE("parameter layout and count") {
    for (int nq : {4, 9, 16})
        for (int layers : {1, 2, 3}) {
            const auto p = QnnParams::zeros(nq, layers, 0);
            CHECK(p.size() == 2 * (nq * layers + 1));
            CHECK(p.qubit_of(p.rotations() - 1) == 0);
        }
    const auto p = QnnParams::zeros(9, 2, 4);
    CHECK(p.qubit_of(10) == 1);
    CHECK(p.layer_of(10) == 1);
    CHECK(p.qubit_of(18) == 4);
    const auto r = random_params(9, 1, 4, 3);
    CHECK((QnnParams::from_flat(r, r.flat()).theta - r.theta).norm() == 0.0);
    for (double x : r.flat()) CHECK((x >= 0.0 && x < 2 * kPi));
    CHECK_THROWS_AS(QnnParams::zeros(9, 0, 4), std::invalid_argument);
    CHECK_THROWS_AS(QnnParams::zeros(9, 1, 9), std::invalid_argument);
}

TEST_CASE("forward pass on the vacuum") {
    const auto l = build_lattice(3, 3, 2.185);
    const Qnn qnn(l, 200.0);
    auto p = random_params(9, 1, 4, 8);
    p.phi.setZero();
    CHECK(qnn.forward(basis_state(l, 0), p) == doctest::Approx(0.0));
    p.phi[p.rotations() - 1] = kPi;
    CHECK(qnn.forward(basis_state(l, 0), p) == doctest::Approx(1.0));
    CHECK_THROWS_AS(qnn.forward(basis_state(4, 0), p), std::invalid_argument);
}

TEST_CASE("forward pass equals the dense unitary composition") {
    const auto l = build_lattice(2, 2, 2.185);
    for (int layers : {1, 2})
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const auto s = random_state(4, seed);
            const auto p = random_params(4, layers, l.readout_index(), seed + 100);
            CHECK(std::abs(qnn_forward(s, p, l, 200.0) - dense_forward(s, p, l, 200.0)) < 1e-10);
        }
}

TEST_CASE("cached sector propagators agree with Krylov evolution") {
    const auto l = build_lattice(3, 3, 2.185);
    const AnalogBlock block(HamiltonianOp::zero_disorder(l), 200.0);
    CHECK(block.dense());
    auto a = random_state(9, 7);
    const auto b = evolve(HamiltonianOp::zero_disorder(l), a, 200.0);
    block.apply(a);
    CHECK((a.amplitudes() - b.amplitudes()).norm() < 1e-9);
    CHECK_FALSE(AnalogBlock(HamiltonianOp::zero_disorder(build_lattice(4, 4, 2.185)), 1.0).dense());
}

TEST_CASE("weighted cross-entropy values") {
    const std::vector<double> half{0.5};
    const std::vector<int> one{1};
    CHECK(bce_loss(half, one, std::vector<double>{1.0}) == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(bce_loss(half, one, std::vector<double>{3.0}) == doctest::Approx(2.079442).epsilon(1e-6));
    CHECK(bce_loss(std::vector<double>{1.0}, one, std::vector<double>{3.0}) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(std::isfinite(bce_loss(std::vector<double>{0.0}, one, std::vector<double>{1.0})));
    CHECK_THROWS_AS(bce_loss(half, std::vector<int>{1, 0}, std::vector<double>{1.0}), std::invalid_argument);

    const std::vector<double> p{0.1, 0.7, 0.4};
    const std::vector<int> y{0, 1, 1};
    const std::vector<double> w{1, 3, 3};
    const std::vector<double> p2{0.4, 0.1, 0.7};
    const std::vector<int> y2{1, 0, 1};
    const std::vector<double> w2{3, 1, 3};
    CHECK(bce_loss(p, y, w) == doctest::Approx(bce_loss(p2, y2, w2)));

    for (double q : {0.1, 0.5, 0.9}) {
        CHECK(bce_loss_derivative(q, 1, 3.0, 4) < 0.0);
        CHECK(bce_loss_derivative(q, 0, 1.0, 4) > 0.0);
        const double h = 1e-6;
        const double fd = (bce_loss(std::vector<double>{q + h}, one, std::vector<double>{3.0}) -
                           bce_loss(std::vector<double>{q - h}, one, std::vector<double>{3.0})) / (2 * h);
        CHECK(bce_loss_derivative(q, 1, 3.0, 1) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("classification threshold convention") {
    CHECK(classify(0.3, 0.5) == Label::localized);
    CHECK(classify(0.5, 0.5) == Label::ergodic);
    CHECK(classify(0.46, 0.47) == Label::localized);
    for (double t : {0.2, 0.5, 0.8}) {
        bool seen_ergodic = false;
        for (double p = 0.0; p <= 1.0; p += 0.01) {
            const bool e = classify(p, t) == Label::ergodic;
            CHECK(!(seen_ergodic && !e));
            seen_ergodic = seen_ergodic || e;
        }
    }
    CHECK(accuracy(std::vector<double>{0.2, 0.8, 0.6}, std::vector<int>{0, 1, 0}, 0.5) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("shift gradients against finite differences") {
    const auto l = build_lattice(2, 2, 2.185);
    const Qnn qnn(l, 200.0);
    LabeledStates data;
    for (std::uint64_t s = 0; s < 4; ++s) {
        data.states.push_back(random_state(4, 50 + s));
        data.labels.push_back(static_cast<int>(s % 2));
    }
    const LossProblem problem(qnn, data, {});
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const auto p = random_params(4, 1, l.readout_index(), seed);
        const auto chain = gradient_shift(problem, p, GradientMode::chain_shift);
        const auto fd = gradient_fd(problem, p, 1e-5);
        REQUIRE(chain.size() == p.size());
        CHECK((chain - fd).cwiseAbs().maxCoeff() < 1e-6);
        CHECK(gradient_shift(problem, p, GradientMode::paper_shift).size() == p.size());
        CHECK((gradient(problem, p, GradientMode::finite_difference) - fd).norm() == 0.0);
    }
    CHECK_THROWS_AS(gradient_shift(problem, random_params(4, 1, 0, 1), GradientMode::finite_difference),
                    std::invalid_argument);
}

TEST_CASE("readout phi derivative vanishes at zero on the vacuum") {
    const auto l = build_lattice(2, 2, 2.185);
    const Qnn qnn(l, 200.0);
    LabeledStates data{{basis_state(l, 0)}, {1}};
    const LossProblem problem(qnn, data, {});
    auto p = random_params(4, 1, l.readout_index(), 2);
    p.phi.setZero();
    const auto g = gradient_shift(problem, p, GradientMode::chain_shift);
    CHECK(std::abs(g[p.size() - 1]) < 1e-12);
}

TEST_CASE("gradient sign agreement") {
    const auto l = build_lattice(3, 3, 2.185);
    const Qnn qnn(l, 200.0);
    const auto data = small_dataset(l, 2, 5);
    const LossProblem problem(qnn, data, {});
    int agree = 0, total = 0;
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const auto p = random_params(9, 1, 4, seed);
        const auto a = gradient_shift(problem, p, GradientMode::paper_shift);
        const auto b = gradient_shift(problem, p, GradientMode::chain_shift);
        for (Eigen::Index j = 0; j < a.size(); ++j) {
            agree += (a[j] > 0) == (b[j] > 0);
            ++total;
        }
    }
    MESSAGE("sign agreement " << agree << "/" << total);
    CHECK(agree >= 0.9 * total);
}

TEST_CASE("initialisation search returns the lowest-loss candidate") {
    const auto l = build_lattice(2, 2, 2.185);
    const Qnn qnn(l, 200.0);
    const auto data = small_dataset(l, 3, 9);
    const auto one = init_search(qnn, data, 1, 1, 77);
    CHECK(one.best_index == 0);
    CHECK((one.best.flat() - random_params(4, 1, l.readout_index(), derive_seed(77, "init-candidate", 0)).flat()).norm() == 0.0);
    const auto many = init_search(qnn, data, 1, 12, 77);
    REQUIRE(many.candidates.size() == 12);
    for (const auto& c : many.candidates) CHECK(many.candidates[many.best_index].loss <= c.loss);
    CHECK(LossProblem(qnn, data, {}).loss(many.best) == doctest::Approx(many.candidates[many.best_index].loss));
}

TEST_CASE("training at a stationary point leaves parameters unchanged") {
    const auto l = build_lattice(2, 2, 2.185);
    LabeledStates data{{basis_state(l, 0), basis_state(l, 0)}, {0, 1}};
    auto p = random_params(4, 1, l.readout_index(), 4);
    p.phi.setZero();
    TrainingConfig c;
    c.epochs = 3;
    const auto m = train(l, data, data, c, p);
    CHECK(m.history.size() == 3);
    CHECK((m.params.flat() - p.flat()).norm() == 0.0);
}

TEST_CASE("training is deterministic and lowers the loss") {
    const auto l = build_lattice(2, 2, 2.185);
    const auto tr = small_dataset(l, 4, 1);
    const auto te = small_dataset(l, 4, 2);
    TrainingConfig c;
    c.epochs = 6;
    const auto a = train(l, tr, te, c);
    const auto b = train(l, tr, te, c);
    CHECK((a.params.flat() - b.params.flat()).norm() == 0.0);
    CHECK(a.history.size() == 6);
    CHECK(a.history.back().loss < a.history.front().loss);

    c.batch_mode = BatchMode::per_sample;
    c.optimizer = OptimizerKind::gradient_descent;
    c.gradient_mode = GradientMode::paper_shift;
    c.epochs = 2;
    CHECK(train(l, tr, te, c).history.size() == 2);
    c.epochs = 0;
    CHECK_THROWS_AS(train(l, tr, te, c), std::invalid_argument);
}

TEST_CASE("threshold calibration") {
    const std::vector<double> p{0.1, 0.2, 0.3, 0.7, 0.8, 0.9};
    const std::vector<int> y{0, 0, 0, 1, 1, 1};
    CHECK(calibrate_threshold(p, y) == doctest::Approx(0.5));
    const std::vector<double> same{0.4, 0.4, 0.4, 0.4};
    CHECK(calibrate_threshold(same, std::vector<int>{0, 1, 0, 1}) == doctest::Approx(0.4));
    // Narrow localized class near 0.2, broad ergodic class near 0.6: the crossing sits closer to the narrow one.
    const std::vector<double> q{0.18, 0.2, 0.22, 0.4, 0.6, 0.8};
    const double t = calibrate_threshold(q, y);
    CHECK((t > 0.2 && t < 0.4));
    const auto a = fit_gaussian(std::vector<double>{0.18, 0.2, 0.22});
    const auto b = fit_gaussian(std::vector<double>{0.4, 0.6, 0.8});
    const auto pdf = [](const GaussianFit& f, double x) {
        return std::exp(-0.5 * std::pow((x - f.mean) / f.stddev, 2)) / f.stddev;
    };
    CHECK(pdf(a, t) == doctest::Approx(pdf(b, t)).epsilon(1e-9));
    CHECK_THROWS_AS(calibrate_threshold(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), std::invalid_argument);
}

TEST_CASE("model and training config serialise losslessly") {
    const auto l = build_lattice(2, 2, 2.185);
    const auto tr = small_dataset(l, 2, 1);
    TrainingConfig c;
    c.epochs = 2;
    c.seed = 0xfedcba9876543210ULL;
    c.gradient_mode = GradientMode::paper_shift;
    const auto m = train(l, tr, tr, c);
    const auto back = model_from_json(nlohmann::json::parse(to_json(m).dump()));
    CHECK((back.params.flat() - m.params.flat()).norm() == 0.0);
    CHECK(back.threshold == m.threshold);
    CHECK(back.history.size() == 2);
    CHECK(back.history[1].loss == m.history[1].loss);
    CHECK(back.config.seed == c.seed);
    CHECK(back.config.gradient_mode == GradientMode::paper_shift);
    CHECK(build_lattice(back.lattice).num_qubits() == 4);
    CHECK_THROWS(model_from_json(nlohmann::json{{"format", "other"}}));
    CHECK_THROWS_AS(parse_gradient_mode("exact"), std::invalid_argument);
}
