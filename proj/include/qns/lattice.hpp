#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace qns {

/// Computational-basis index; bit i is the state of active qubit i.
using Bitmask = std::uint64_t;

inline constexpr int kMaxQubits = 62;

struct Site {
    int row = 0;
    int col = 0;
    friend bool operator==(const Site&, const Site&) = default;
    friend auto operator<=>(const Site&, const Site&) = default;
};

struct Edge {
    int i = 0;  // active index, i < j
    int j = 0;
    double coupling_mhz = 0.0;
};

/// Inputs to build_lattice. Inactive sites are given by grid coordinates,
/// coupling overrides by (active i, active j) pairs.
struct LatticeOptions {
    int rows = 3;
    int cols = 3;
    std::vector<Site> inactive_sites;
    double coupling_mhz = 2.185;
    std::map<std::pair<int, int>, double> coupling_overrides;
    std::optional<int> readout_index;
};

/// Validated rectangular qubit grid with an active-site mask.
///
/// Active qubits are numbered 0..N_q-1 in row-major order over active sites;
/// couplings exist between 4-neighbour active sites only. Instances are
/// immutable once built (see build_lattice).
class LatticeSpec {
  public:
    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int num_qubits() const { return static_cast<int>(sites_.size()); }
    double coupling_mhz() const { return coupling_mhz_; }
    int readout_index() const { return readout_index_; }

    bool is_active(int row, int col) const;
    std::optional<int> index_of(int row, int col) const;
    Site site_of(int qubit) const { return sites_.at(static_cast<std::size_t>(qubit)); }

    const std::vector<Edge>& edges() const { return edges_; }
    const std::map<std::pair<int, int>, double>& coupling_overrides() const { return overrides_; }
    std::vector<Site> inactive_sites() const;

    /// Same geometry and couplings with a different readout qubit.
    LatticeSpec with_readout(int readout_index) const;

  private:
    friend LatticeSpec build_lattice(const LatticeOptions&);

    int rows_ = 0;
    int cols_ = 0;
    double coupling_mhz_ = 0.0;
    int readout_index_ = 0;
    std::vector<int> grid_to_active_;  // -1 for inactive sites
    std::vector<Site> sites_;
    std::vector<Edge> edges_;
    std::map<std::pair<int, int>, double> overrides_;
};

/// Throws std::invalid_argument on a disconnected or too-small active set,
/// a non-positive coupling or a readout index outside the active range.
LatticeSpec build_lattice(const LatticeOptions& options);

LatticeSpec build_lattice(int rows, int cols, double coupling_mhz,
                          std::optional<int> readout_index = std::nullopt);

/// Active site closest to the geometric centre of the grid, lowest index on ties.
int default_readout(const LatticeSpec& lattice);

/// Bit i set iff active qubit i sits on a (row + col) even site.
Bitmask neel_pattern(const LatticeSpec& lattice);

inline const std::vector<Edge>& edges(const LatticeSpec& lattice) { return lattice.edges(); }

/// Per-qubit detunings d_i/2pi in MHz drawn uniformly from [-bound, bound].
struct DisorderProfile {
    std::vector<double> detunings_mhz;
    double bound_mhz = 0.0;
    std::uint64_t seed = 0;
};

DisorderProfile sample_disorder(const LatticeSpec& lattice, double h_mhz, std::uint64_t seed);

/// Reads a JSON preset with keys rows, cols, inactive_sites ([[r, c], ...]),
/// coupling_mhz and readout_index. Unknown keys are rejected.
LatticeOptions load_lattice_preset(const std::string& path);
LatticeOptions parse_lattice_preset(const std::string& text);

LatticeOptions to_options(const LatticeSpec& lattice);

}  // namespace qns
