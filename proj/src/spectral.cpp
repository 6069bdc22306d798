#include "qns/spectral.hpp"

#include "qns/parallel.hpp"
#include "qns/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace qns {

SectorBasis::SectorBasis(int num_qubits, int excitations)
    : num_qubits_(num_qubits), excitations_(excitations) {
    if (num_qubits < 1 || num_qubits > kMaxQubits)
        throw std::invalid_argument("SectorBasis: bad qubit count");
    if (excitations < 0 || excitations > num_qubits)
        throw std::invalid_argument("SectorBasis: excitation count out of range");
    if (binomial(num_qubits, excitations) > 1e8)
        throw std::length_error("SectorBasis: sector too large to enumerate");
    if (excitations == 0) {
        states_.push_back(0);
        return;
    }
    // Gosper's hack walks the k-subsets in increasing order.
    Bitmask b = (Bitmask{1} << excitations) - 1;
    const Bitmask limit = Bitmask{1} << num_qubits;
    while (b < limit) {
        states_.push_back(b);
        const Bitmask c = b & (~b + 1);
        const Bitmask r = b + c;
        b = (((r ^ b) >> 2) / c) | r;
    }
}

Eigen::Index SectorBasis::index_of(Bitmask b) const {
    const auto it = std::lower_bound(states_.begin(), states_.end(), b);
    if (it == states_.end() || *it != b) return -1;
    return static_cast<Eigen::Index>(it - states_.begin());
}

double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    k = std::min(k, n - k);
    double c = 1.0;
    for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return std::round(c);
}

Eigen::MatrixXd sector_hamiltonian(const HamiltonianOp& h, const SectorBasis& basis, Eigen::Index max_dim) {
    if (basis.num_qubits() != h.num_qubits())
        throw std::invalid_argument("sector_hamiltonian: qubit count mismatch");
    const Eigen::Index n = basis.size();
    if (n > max_dim)
        throw std::length_error("sector_hamiltonian: sector dimension " + std::to_string(n) +
                                " exceeds the dense limit " + std::to_string(max_dim));
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index a = 0; a < n; ++a) m(a, a) = h.diagonal(basis.state(a));
    for (const Edge& e : h.edges()) {
        const Bitmask bi = Bitmask{1} << e.i;
        const Bitmask bj = Bitmask{1} << e.j;
        const double w = kMhzToRadPerNs * e.coupling_mhz;
        for (Eigen::Index a = 0; a < n; ++a) {
            const Bitmask s = basis.state(a);
            if (((s & bi) != 0) == ((s & bj) != 0)) continue;
            m(basis.index_of(s ^ (bi | bj)), a) += w;
        }
    }
    return m;
}

Eigen::MatrixXd sector_hamiltonian(const LatticeSpec& lattice, const DisorderProfile& disorder, int k,
                                   Eigen::Index max_dim) {
    if (binomial(lattice.num_qubits(), k) > static_cast<double>(max_dim))
        throw std::length_error("sector_hamiltonian: sector too large for dense storage");
    return sector_hamiltonian(HamiltonianOp(lattice, disorder), SectorBasis(lattice.num_qubits(), k), max_dim);
}

SpectrumResult sector_spectrum(const LatticeSpec& lattice, const DisorderProfile& disorder, int k) {
    const Eigen::MatrixXd m = sector_hamiltonian(lattice, disorder, k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw std::runtime_error("sector_spectrum: eigensolver failed");
    return {eig.eigenvalues(), disorder.seed, disorder.bound_mhz};
}

GapRatios gap_ratios(std::span<const double> energies) {
    if (energies.size() < 3) throw std::invalid_argument("gap_ratios: need at least three levels");
    if (!std::is_sorted(energies.begin(), energies.end()))
        throw std::invalid_argument("gap_ratios: energies must be sorted ascending");
    GapRatios out;
    out.ratios.reserve(energies.size() - 2);
    for (std::size_t n = 1; n + 1 < energies.size(); ++n) {
        const double prev = energies[n] - energies[n - 1];
        const double next = energies[n + 1] - energies[n];
        if (prev < kDegenerateGap && next < kDegenerateGap) {
            ++out.skipped_degenerate;
            continue;
        }
        out.ratios.push_back(std::min(prev, next) / std::max(prev, next));
    }
    return out;
}

std::span<const double> central_window(std::span<const double> energies, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("central_window: fraction must lie in (0, 1]");
    const auto n = energies.size();
    const auto keep = std::max<std::size_t>(3, static_cast<std::size_t>(std::llround(fraction * n)));
    if (keep >= n) return energies;
    return energies.subspan((n - keep) / 2, keep);
}

std::vector<double> poisson_levels(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> levels(count);
    for (double& e : levels) e = uniform01(rng);
    std::sort(levels.begin(), levels.end());
    return levels;
}

std::vector<GapRatioPoint> mean_gap_ratio_sweep(const LatticeSpec& lattice, int k,
                                                std::span<const double> h_over_g_grid, int realizations,
                                                std::uint64_t seed, const GapRatioSweepOptions& options) {
    if (realizations < 1) throw std::invalid_argument("mean_gap_ratio_sweep: realizations must be >= 1");
    const SectorBasis basis(lattice.num_qubits(), k);
    if (basis.size() < 3) throw std::invalid_argument("mean_gap_ratio_sweep: sector has fewer than 3 levels");
    if (basis.size() > kMaxDenseSector)
        throw std::length_error("mean_gap_ratio_sweep: sector too large for dense diagonalisation");

    struct Cell {
        double sum = 0.0;
        std::size_t count = 0;
        int skipped = 0;
    };
    const std::size_t points = h_over_g_grid.size();
    const auto reps = static_cast<std::size_t>(realizations);
    std::vector<Cell> cells(points * reps);

    parallel_for(points * reps, [&](std::size_t task) {
        const std::size_t p = task / reps;
        const std::size_t r = task % reps;
        const double h_mhz = h_over_g_grid[p] * lattice.coupling_mhz();
        const auto disorder = sample_disorder(lattice, h_mhz, derive_seed(seed, "level-stats", r));
        const Eigen::MatrixXd m = sector_hamiltonian(HamiltonianOp(lattice, disorder), basis);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
        const Eigen::VectorXd& e = eig.eigenvalues();
        const auto window = central_window(std::span<const double>(e.data(), static_cast<std::size_t>(e.size())),
                                           options.central_fraction);
        const GapRatios g = gap_ratios(window);
        Cell& c = cells[task];
        for (double x : g.ratios) c.sum += x;
        c.count = g.ratios.size();
        c.skipped = g.skipped_degenerate;
    });

    std::vector<GapRatioPoint> curve;
    curve.reserve(points);
    for (std::size_t p = 0; p < points; ++p) {
        double sum = 0.0;
        std::size_t count = 0;
        int skipped = 0;
        std::vector<double> means;
        for (std::size_t r = 0; r < reps; ++r) {
            const Cell& c = cells[p * reps + r];
            sum += c.sum;
            count += c.count;
            skipped += c.skipped;
            if (c.count > 0) means.push_back(c.sum / static_cast<double>(c.count));
        }
        GapRatioPoint pt;
        pt.h_over_g = h_over_g_grid[p];
        pt.realizations = realizations;
        pt.skipped_degenerate = skipped;
        pt.r_mean = count > 0 ? sum / static_cast<double>(count) : std::nan("");
        if (means.size() > 1) {
            const double mu = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
            double ss = 0.0;
            for (double x : means) ss += (x - mu) * (x - mu);
            pt.r_stderr = std::sqrt(ss / static_cast<double>(means.size() - 1)) /
                          std::sqrt(static_cast<double>(means.size()));
        }
        curve.push_back(pt);
    }
    return curve;
}

double correlation_coefficient(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("correlation_coefficient: length mismatch");
    if (a.size() < 2) throw std::invalid_argument("correlation_coefficient: need at least two points");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double c11 = 0.0, c22 = 0.0, c12 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        c11 += (a[i] - ma) * (a[i] - ma);
        c22 += (b[i] - mb) * (b[i] - mb);
        c12 += (a[i] - ma) * (b[i] - mb);
    }
    if (!(c11 > 0.0) || !(c22 > 0.0))
        throw std::invalid_argument("correlation_coefficient: zero variance");
    return std::clamp(c12 / std::sqrt(c11 * c22), -1.0, 1.0);
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return x[l] < x[r]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("spearman_correlation: length mismatch");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    return correlation_coefficient(ra, rb);
}

}  // namespace qns
