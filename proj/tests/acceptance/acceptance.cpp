// One line per acceptance criterion: "criterion N: PASS|FAIL  <measured values>".
// Usage: qns_acceptance [N ...]   (no arguments runs all criteria)

#include "../oracles.hpp"

#include "qns/cli.hpp"
#include "qns/experiments.hpp"
#include "qns/parallel.hpp"
#include "qns/propagator.hpp"
#include "qns/qnn.hpp"
#include "qns/random.hpp"
#include "qns/spectral.hpp"
#include "qns/statevec.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

using namespace qns;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double stddev(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return v.size() > 1 ? std::sqrt(s / double(v.size() - 1)) : 0.0;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

LatticeSpec grid3() { return build_lattice(3, 3, 2.185); }

// Level statistics in the Neel sector.
Outcome level_statistics() {
    const auto l = grid3();
    const auto grid = parse_range("0.5:18:20");
    const auto curve = mean_gap_ratio_sweep(l, std::popcount(neel_pattern(l)), grid, 200, 1);
    std::size_t peak = 0;
    for (std::size_t i = 1; i < curve.size(); ++i)
        if (curve[i].r_mean > curve[peak].r_mean) peak = i;
    std::vector<double> x, y;
    for (std::size_t i = peak; i < curve.size(); ++i) {
        x.push_back(curve[i].h_over_g);
        y.push_back(curve[i].r_mean);
    }
    const double rho = x.size() >= 2 ? spearman_correlation(x, y) : 0.0;
    std::vector<double> all_x, all_y;
    for (const auto& p : curve) {
        all_x.push_back(p.h_over_g);
        all_y.push_back(p.r_mean);
    }
    const double last = curve.back().r_mean;
    const bool low_window = curve[peak].h_over_g <= 6.0;
    return {last >= 0.37 && last <= 0.40 && curve[peak].r_mean >= 0.50 && low_window && rho <= -0.9,
            "r(18)=" + fmt("%.4f", last) + " r_max=" + fmt("%.4f", curve[peak].r_mean) + " at h/g=" +
                fmt("%.3g", curve[peak].h_over_g) + " spearman_from_peak=" + fmt("%.4f", rho) +
                " (whole grid " + fmt("%.4f", spearman_correlation(all_x, all_y)) + ")"};
}

Outcome poisson_oracle() {
    const auto levels = poisson_levels(100000, 1);
    const auto r = gap_ratios(levels);
    const double m = mean(r.ratios);
    return {std::abs(m - 0.386) <= 0.005, "r=" + fmt("%.5f", m)};
}

Outcome imbalance_dynamics() {
    const auto l = grid3();
    const auto times = parse_range("0:400:81");
    const auto clean = run_imbalance_dynamics(l, 0.0, times, 50, 1);
    std::vector<double> window;
    for (const auto& p : clean.curve)
        if (p.t_ns >= 150.0 && p.t_ns <= 250.0) window.push_back(p.mean);
    const double late = mean(window);
    const auto loc = run_imbalance_dynamics(l, 50.0, times, 50, 1);
    const bool exact = clean.curve.front().mean == 1.0 && loc.curve.front().mean == 1.0;
    return {exact && std::abs(late) < 0.15 && loc.i200_mean >= 0.5,
            std::string("I(0)=") + (exact ? "1" : "not 1") + " mean_I[150,250](h=0)=" + fmt("%.4f", late) +
                " I(200,h=50)=" + fmt("%.4f", loc.i200_mean)};
}

struct ClassificationRuns {
    std::vector<double> accuracy;
    int loss_decreased = 0;
};

ClassificationRuns classification_runs(const LatticeSpec& l, int seeds) {
    ClassificationRuns out;
    for (int s = 1; s <= seeds; ++s) {
        ClassificationConfig c;
        c.seed = static_cast<std::uint64_t>(s);
        const auto r = run_classification_experiment(l, c);
        out.accuracy.push_back(r.test_accuracy);
        out.loss_decreased += r.model.history.back().loss < r.model.history.front().loss;
    }
    return out;
}

Outcome classification() {
    const auto runs = classification_runs(grid3(), 10);
    const double m = mean(runs.accuracy);
    return {m >= 0.92 && runs.loss_decreased >= 9, "mean_accuracy=" + fmt("%.4f", m) + " std=" +
                                                       fmt("%.4f", stddev(runs.accuracy)) +
                                                       " loss_decreased=" + std::to_string(runs.loss_decreased) + "/10"};
}

Outcome readout_position() {
    const auto l = grid3();
    struct Band {
        const char* name;
        int site;
        double m = 0, s = 0;
    };
    std::vector<Band> bands{{"center", 4}, {"edge", 1}, {"corner", 0}};
    for (auto& b : bands) {
        const auto runs = classification_runs(l.with_readout(b.site), 10);
        b.m = mean(runs.accuracy);
        b.s = stddev(runs.accuracy);
    }
    bool overlap = true;
    std::string detail;
    for (std::size_t i = 0; i < bands.size(); ++i) {
        detail += std::string(i ? " " : "") + bands[i].name + "=" + fmt("%.4f", bands[i].m) + "+-" + fmt("%.4f", bands[i].s);
        for (std::size_t j = i + 1; j < bands.size(); ++j)
            overlap = overlap && bands[i].m - bands[i].s <= bands[j].m + bands[j].s &&
                      bands[j].m - bands[j].s <= bands[i].m + bands[i].s;
    }
    return {overlap, detail};
}

Outcome gradient_oracle() {
    const auto l = build_lattice(2, 2, 2.185);
    const Qnn qnn(l, 200.0);
    double worst_grad = 0.0, worst_fwd = 0.0;
    for (std::uint64_t inst = 0; inst < 100; ++inst) {
        Rng rng(derive_seed(2024, "instance", inst));
        Amplitudes a(16);
        for (auto& z : a) z = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
        const StateVector psi(4, a);
        const int layers = 1 + static_cast<int>(inst % 2);
        const int readout = static_cast<int>(rng() % 4);
        const int label = static_cast<int>(rng() % 2);
        const auto p = random_params(4, layers, readout, rng());

        const double prob = qnn.forward(psi, p);
        const auto dense = [&](const Eigen::VectorXd& phi) {
            return oracle::circuit_probability(psi.amplitudes(), 4, l.edges(), p.theta, phi, layers, readout, 200.0);
        };
        worst_fwd = std::max(worst_fwd, std::abs(prob - dense(p.phi)));

        const LabeledStates data{{psi}, {label}};
        const LossProblem problem(qnn, data, {});
        const auto g = gradient_shift(problem, p, GradientMode::chain_shift);
        const double dldp = bce_loss_derivative(prob, label, problem.weight(0), 1);
        const int d = p.rotations();
        for (int j = 0; j < d; ++j) {
            const double h = 1e-5;
            Eigen::VectorXd up = p.phi, dn = p.phi;
            up[j] += h;
            dn[j] -= h;
            const double fd = (dense(up) - dense(dn)) / (2 * h);
            worst_grad = std::max(worst_grad, std::abs(g[d + j] / dldp - fd));
        }
    }
    return {worst_grad <= 1e-6 && worst_fwd <= 1e-10,
            "max|dp/dphi - fd|=" + fmt("%.3g", worst_grad) + " max|p - dense|=" + fmt("%.3g", worst_fwd)};
}

Outcome evolution_oracle() {
    const auto l = grid3();
    double worst = 0.0, norm_drift = 0.0, exc_drift = 0.0;
    for (std::uint64_t r = 0; r < 5; ++r) {
        const auto dis = sample_disorder(l, 20.0, derive_seed(7, "evolution", r));
        Rng rng(derive_seed(7, "state", r));
        Amplitudes a(512);
        for (auto& z : a) z = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
        const StateVector psi(9, a);
        const auto out = evolve(HamiltonianOp(l, dis), psi, 200.0);
        const oracle::Vec ref =
            oracle::expm_hermitian(oracle::hamiltonian(9, l.edges(), dis.detunings_mhz), 200.0) * psi.amplitudes();
        worst = std::max(worst, (out.amplitudes() - ref).norm());
        norm_drift = std::max(norm_drift, std::abs(out.amplitudes().norm() - 1.0));
        exc_drift = std::max(exc_drift, std::abs(expected_excitations(out) - expected_excitations(psi)));
    }
    return {worst <= 1e-8 && norm_drift <= 1e-9 && exc_drift <= 1e-9,
            "max|krylov - dense|=" + fmt("%.3g", worst) + " norm_drift=" + fmt("%.3g", norm_drift) +
                " excitation_drift=" + fmt("%.3g", exc_drift)};
}

Outcome generalization_sweeps(const fs::path& work) {
    const auto run = [&](const std::string& kind) {
        return dispatch(parse_config(nlohmann::json::object(), {{"output_dir", (work / kind).string()}}, kind));
    };
    const auto dis = run("sweep-disorder");
    const double rho = dis.summary.value("spearman_p_vs_h", std::nan(""));
    const double corr = dis.summary.value("correlation_p_vs_r", std::nan(""));

    const auto time = run("sweep-time");
    const auto table = [&](const std::string& name) -> const Table& {
        for (const auto& t : time.tables)
            if (t.name == name) return t;
        throw std::runtime_error("missing table " + name);
    };
    double min_sep = 1.0;
    std::string failing;
    for (const auto& row : table("sweep_time").rows) {
        const double t = std::get<double>(row[0]);
        const double sep = std::get<double>(row[5]);
        if (t >= 40.0) {
            min_sep = std::min(min_sep, sep);
            if (sep < 0.3) failing += (failing.empty() ? "" : ",") + fmt("%.3g", t);
        }
    }
    std::string retrain;
    for (const auto& row : table("retrain").rows)
        retrain += " acc(t0=" + fmt("%.0f", std::get<double>(row[0])) + ")=" + fmt("%.3f", std::get<double>(row[1]));

    return {rho >= 0.9 && corr <= -0.8 && min_sep >= 0.3,
            "spearman(P_loc,h/g)=" + fmt("%.4f", rho) + " corr(P_loc,r)=" + fmt("%.4f", corr) +
                " min_separation(t>=40)=" + fmt("%.4f", min_sep) +
                (failing.empty() ? "" : " below_0.3_at_t=" + failing) + retrain};
}

Outcome probe_experiment() {
    std::vector<double> acc, thr;
    for (std::uint64_t s = 1; s <= 5; ++s) {
        ClassificationConfig c;
        c.seed = s;
        const auto r = run_probe_experiment(grid3(), c);
        acc.push_back(r.test_accuracy);
        thr.push_back(r.model.threshold);
    }
    const double max_thr = *std::max_element(thr.begin(), thr.end());
    return {mean(acc) >= 0.9 && max_thr < 0.5,
            "mean_accuracy=" + fmt("%.4f", mean(acc)) + " std=" + fmt("%.4f", stddev(acc)) +
                " mean_threshold=" + fmt("%.4f", mean(thr)) + " max_threshold=" + fmt("%.4f", max_thr)};
}

Outcome ramping() {
    const auto l = build_lattice(3, 3, 2.0);
    const auto grid = parse_range("0:100:26");
    const auto pts = run_ramping_study(l, grid, RampingConfig{});
    std::vector<double> t, f;
    double f4 = std::nan("");
    for (const auto& p : pts) {
        t.push_back(p.t_ramp_ns);
        f.push_back(p.f_mean);
        if (p.t_ramp_ns == 4.0) f4 = p.f_mean;
    }
    const double rho = spearman_correlation(t, f);
    return {std::abs(f.front() - 1.0) <= 1e-12 && f4 >= 0.99 && rho <= -0.8 && f.back() < f.front(),
            "F(0)=" + fmt("%.15g", f.front()) + " F(4)=" + fmt("%.5f", f4) + " F(100)=" + fmt("%.5f", f.back()) +
                " spearman(F,t)=" + fmt("%.4f", rho)};
}

Outcome determinism(const fs::path& work) {
    using nlohmann::json;
    const json small_training{{"n_train_per_class", 3}, {"n_test_per_class", 3}, {"init_candidates", 3},
                              {"init_per_class", 2},    {"epochs", 2}};
    const auto with = [&](json extra) {
        json j = small_training;
        j.update(extra);
        return j;
    };
    const std::string model = (work / "det-a" / "train" / "model.json").string();
    const std::vector<std::pair<std::string, json>> runs{
        {"train", small_training},
        {"probe", small_training},
        {"imbalance", {{"realizations", 3}, {"times_ns", "0:100:5"}}},
        {"level-stats", {{"realizations", 4}, {"h_over_g", "1:10:4"}}},
        {"classify", {{"model_path", model}, {"n_test_per_class", 3}}},
        {"sweep-disorder", {{"model_path", model}, {"h_over_g", "1:10:3"}, {"profiles_per_point", 3}, {"realizations", 3}}},
        {"sweep-time",
         with({{"model_path", model}, {"t_grid_ns", "log:6:200:3"}, {"time_sweep_per_class", 2},
               {"retrain_t0_ns", json::array({100.0})}})},
        {"ramping", {{"realizations", 2}, {"ramp_grid_ns", "0:10:3"}, {"hold_ns", 20.0}}},
        {"dataset", small_training},
    };
    int compared = 0;
    std::vector<std::string> mismatched;
    for (const auto& [kind, file] : runs) {
        const fs::path a = work / "det-a" / kind, b = work / "det-b" / kind;
        dispatch(parse_config(file, {{"output_dir", a.string()}, {"threads", "1"}}, kind));
        dispatch(parse_config_file((a / "config.json").string(), {{"output_dir", b.string()}, {"threads", "3"}}, kind));
        for (const auto& entry : fs::directory_iterator(a)) {
            if (entry.path().extension() != ".csv") continue;
            ++compared;
            const fs::path other = b / entry.path().filename();
            if (!fs::exists(other) || slurp(entry.path()) != slurp(other))
                mismatched.push_back(kind + "/" + entry.path().filename().string());
        }
    }
    std::string detail = std::to_string(compared) + " csv files compared across 9 experiments, threads 1 vs 3";
    for (const auto& m : mismatched) detail += " mismatch:" + m;
    return {mismatched.empty() && compared >= 9, detail};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    const fs::path work = fs::temp_directory_path() / "qns_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    struct Criterion {
        int id;
        double budget_s;  // 0: no stated limit
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, 300, level_statistics},
        {2, 0, poisson_oracle},
        {3, 600, imbalance_dynamics},
        {4, 3600, classification},
        {5, 0, readout_position},
        {6, 0, gradient_oracle},
        {7, 0, evolution_oracle},
        {8, 3600, [&] { return generalization_sweeps(work); }},
        {9, 0, probe_experiment},
        {10, 600, ramping},
        {11, 0, [&] { return determinism(work); }},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        set_thread_count(1);
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.budget_s > 0 && secs > c.budget_s) {
            o.pass = false;
            o.detail += " over time budget";
        }
        failed += !o.pass;
        std::printf("criterion %d: %s  %s  (%.1f s)\n", c.id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
