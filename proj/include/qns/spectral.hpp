#pragma once

#include "qns/lattice.hpp"
#include "qns/statevec.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace qns {

/// Basis states of N_q qubits with exactly k excitations, ascending.
class SectorBasis {
  public:
    SectorBasis(int num_qubits, int excitations);

    int num_qubits() const { return num_qubits_; }
    int excitations() const { return excitations_; }
    Eigen::Index size() const { return static_cast<Eigen::Index>(states_.size()); }
    const std::vector<Bitmask>& states() const { return states_; }
    Bitmask state(Eigen::Index idx) const { return states_[static_cast<std::size_t>(idx)]; }

    /// Position of a basis state, or -1 when it lies outside the sector.
    Eigen::Index index_of(Bitmask b) const;

  private:
    int num_qubits_;
    int excitations_;
    std::vector<Bitmask> states_;
};

/// Sector dimension above which dense diagonalisation is refused.
inline constexpr Eigen::Index kMaxDenseSector = 20000;

/// Binomial coefficient C(n, k) as a double.
double binomial(int n, int k);

/// Real symmetric restriction of H to one excitation sector (rad/ns).
/// Throws std::length_error when the sector exceeds max_dim.
Eigen::MatrixXd sector_hamiltonian(const HamiltonianOp& h, const SectorBasis& basis,
                                   Eigen::Index max_dim = kMaxDenseSector);
Eigen::MatrixXd sector_hamiltonian(const LatticeSpec& lattice, const DisorderProfile& disorder, int k,
                                   Eigen::Index max_dim = kMaxDenseSector);

struct SpectrumResult {
    Eigen::VectorXd energies;  // ascending, rad/ns
    std::uint64_t seed = 0;
    double h_mhz = 0.0;
};

SpectrumResult sector_spectrum(const LatticeSpec& lattice, const DisorderProfile& disorder, int k);

struct GapRatios {
    std::vector<double> ratios;
    int skipped_degenerate = 0;
};

/// Gap threshold (rad/ns) below which both neighbouring gaps count as degenerate.
inline constexpr double kDegenerateGap = 1e-12;

/// r_n = min(d_n, d_{n-1}) / max(d_n, d_{n-1}) over consecutive spacings.
/// Throws std::invalid_argument for fewer than three or unsorted energies.
GapRatios gap_ratios(std::span<const double> energies);

/// Optional restriction to the central fraction of the spectrum.
std::span<const double> central_window(std::span<const double> energies, double fraction);

/// Uniformly scattered levels (Poisson statistics), sorted.
std::vector<double> poisson_levels(std::size_t count, std::uint64_t seed);

struct GapRatioPoint {
    double h_over_g = 0.0;
    double r_mean = 0.0;
    double r_stderr = 0.0;
    int realizations = 0;
    int skipped_degenerate = 0;
};

struct GapRatioSweepOptions {
    double central_fraction = 1.0;  // 1 keeps the full sector spectrum
};

/// Mean gap ratio in sector k as a function of h/g. Realization r draws its
/// disorder from (seed, r), so every grid point sees the same normalised
/// disorder patterns scaled by h = (h/g) g. r_mean pools every ratio of every
/// realization; r_stderr is the standard error of the per-realization means.
std::vector<GapRatioPoint> mean_gap_ratio_sweep(const LatticeSpec& lattice, int k,
                                                std::span<const double> h_over_g_grid, int realizations,
                                                std::uint64_t seed,
                                                const GapRatioSweepOptions& options = {});

/// Pearson coefficient C12 / sqrt(C11 C22).
double correlation_coefficient(std::span<const double> a, std::span<const double> b);

/// Pearson coefficient of average ranks.
double spearman_correlation(std::span<const double> a, std::span<const double> b);

}  // namespace qns
