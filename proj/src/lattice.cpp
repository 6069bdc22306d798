#include "qns/lattice.hpp"

#include "qns/random.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace qns {

namespace {

int nearest_to_center(int rows, int cols, const std::vector<Site>& sites) {
    const double cr = 0.5 * (rows - 1);
    const double cc = 0.5 * (cols - 1);
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < sites.size(); ++q) {
        const double dr = sites[q].row - cr;
        const double dc = sites[q].col - cc;
        const double d2 = dr * dr + dc * dc;
        // Distances are multiples of 1/4, so exact comparison is safe.
        if (d2 < best_d2) {
            best_d2 = d2;
            best = static_cast<int>(q);
        }
    }
    return best;
}

}  // namespace

bool LatticeSpec::is_active(int row, int col) const { return index_of(row, col).has_value(); }

std::optional<int> LatticeSpec::index_of(int row, int col) const {
    if (row < 0 || row >= rows_ || col < 0 || col >= cols_) return std::nullopt;
    const int q = grid_to_active_[static_cast<std::size_t>(row * cols_ + col)];
    if (q < 0) return std::nullopt;
    return q;
}

std::vector<Site> LatticeSpec::inactive_sites() const {
    std::vector<Site> out;
    for (int r = 0; r < rows_; ++r)
        for (int c = 0; c < cols_; ++c)
            if (!is_active(r, c)) out.push_back({r, c});
    return out;
}

LatticeSpec LatticeSpec::with_readout(int readout_index) const {
    if (readout_index < 0 || readout_index >= num_qubits())
        throw std::invalid_argument("readout_index " + std::to_string(readout_index) +
                                    " is not an active qubit");
    LatticeSpec copy = *this;
    copy.readout_index_ = readout_index;
    return copy;
}

LatticeSpec build_lattice(const LatticeOptions& options) {
    const int rows = options.rows;
    const int cols = options.cols;
    if (rows < 1 || cols < 1) throw std::invalid_argument("rows and cols must be positive");
    if (rows * cols < 2) throw std::invalid_argument("lattice needs at least 2 sites");
    if (!(options.coupling_mhz > 0.0) || !std::isfinite(options.coupling_mhz))
        throw std::invalid_argument("coupling_mhz must be finite and positive");

    std::vector<char> active(static_cast<std::size_t>(rows * cols), 1);
    for (const Site& s : options.inactive_sites) {
        if (s.row < 0 || s.row >= rows || s.col < 0 || s.col >= cols)
            throw std::invalid_argument("inactive site (" + std::to_string(s.row) + "," +
                                        std::to_string(s.col) + ") is outside the grid");
        active[static_cast<std::size_t>(s.row * cols + s.col)] = 0;
    }

    LatticeSpec spec;
    spec.rows_ = rows;
    spec.cols_ = cols;
    spec.coupling_mhz_ = options.coupling_mhz;
    spec.grid_to_active_.assign(active.size(), -1);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (!active[static_cast<std::size_t>(r * cols + c)]) continue;
            spec.grid_to_active_[static_cast<std::size_t>(r * cols + c)] =
                static_cast<int>(spec.sites_.size());
            spec.sites_.push_back({r, c});
        }
    }
    const int nq = spec.num_qubits();
    if (nq < 2) throw std::invalid_argument("lattice needs at least 2 active qubits");
    if (nq > kMaxQubits)
        throw std::invalid_argument("lattice has more than " + std::to_string(kMaxQubits) +
                                    " active qubits");

    for (const auto& [pair, g] : options.coupling_overrides) {
        if (!(g > 0.0) || !std::isfinite(g))
            throw std::invalid_argument("coupling override must be finite and positive");
        spec.overrides_[{std::min(pair.first, pair.second), std::max(pair.first, pair.second)}] = g;
    }

    // Right and down neighbours give every pair once; row-major order keeps i < j.
    for (int q = 0; q < nq; ++q) {
        const Site s = spec.sites_[static_cast<std::size_t>(q)];
        for (const Site n : {Site{s.row, s.col + 1}, Site{s.row + 1, s.col}}) {
            const auto j = spec.index_of(n.row, n.col);
            if (!j) continue;
            double g = options.coupling_mhz;
            if (auto it = spec.overrides_.find({q, *j}); it != spec.overrides_.end()) g = it->second;
            spec.edges_.push_back({q, *j, g});
        }
    }
    for (const auto& [pair, g] : spec.overrides_) {
        bool found = false;
        for (const Edge& e : spec.edges_) found = found || (e.i == pair.first && e.j == pair.second);
        if (!found)
            throw std::invalid_argument("coupling override on non-adjacent pair (" +
                                        std::to_string(pair.first) + "," +
                                        std::to_string(pair.second) + ")");
    }

    // Connectivity of the active subgraph.
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(nq));
    for (const Edge& e : spec.edges_) {
        adj[static_cast<std::size_t>(e.i)].push_back(e.j);
        adj[static_cast<std::size_t>(e.j)].push_back(e.i);
    }
    std::vector<char> seen(static_cast<std::size_t>(nq), 0);
    std::queue<int> frontier;
    frontier.push(0);
    seen[0] = 1;
    int reached = 1;
    while (!frontier.empty()) {
        const int q = frontier.front();
        frontier.pop();
        for (int n : adj[static_cast<std::size_t>(q)]) {
            if (seen[static_cast<std::size_t>(n)]) continue;
            seen[static_cast<std::size_t>(n)] = 1;
            ++reached;
            frontier.push(n);
        }
    }
    if (reached != nq) throw std::invalid_argument("active subgraph is disconnected");

    if (options.readout_index) {
        if (*options.readout_index < 0 || *options.readout_index >= nq)
            throw std::invalid_argument("readout_index " + std::to_string(*options.readout_index) +
                                        " is not an active qubit");
        spec.readout_index_ = *options.readout_index;
    } else {
        spec.readout_index_ = nearest_to_center(rows, cols, spec.sites_);
    }
    return spec;
}

LatticeSpec build_lattice(int rows, int cols, double coupling_mhz, std::optional<int> readout_index) {
    LatticeOptions o;
    o.rows = rows;
    o.cols = cols;
    o.coupling_mhz = coupling_mhz;
    o.readout_index = readout_index;
    return build_lattice(o);
}

int default_readout(const LatticeSpec& lattice) {
    std::vector<Site> sites;
    sites.reserve(static_cast<std::size_t>(lattice.num_qubits()));
    for (int q = 0; q < lattice.num_qubits(); ++q) sites.push_back(lattice.site_of(q));
    return nearest_to_center(lattice.rows(), lattice.cols(), sites);
}

Bitmask neel_pattern(const LatticeSpec& lattice) {
    Bitmask mask = 0;
    for (int q = 0; q < lattice.num_qubits(); ++q) {
        const Site s = lattice.site_of(q);
        if ((s.row + s.col) % 2 == 0) mask |= Bitmask{1} << q;
    }
    return mask;
}

DisorderProfile sample_disorder(const LatticeSpec& lattice, double h_mhz, std::uint64_t seed) {
    if (!(h_mhz >= 0.0) || !std::isfinite(h_mhz))
        throw std::invalid_argument("disorder bound h must be finite and non-negative");
    DisorderProfile profile;
    profile.bound_mhz = h_mhz;
    profile.seed = seed;
    profile.detunings_mhz.resize(static_cast<std::size_t>(lattice.num_qubits()));
    Rng rng(seed);
    for (double& d : profile.detunings_mhz) d = h_mhz * (2.0 * uniform01(rng) - 1.0);
    return profile;
}

LatticeOptions parse_lattice_preset(const std::string& text) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("lattice preset: ") + e.what());
    }
    if (!doc.is_object()) throw std::invalid_argument("lattice preset must be a JSON object");
    LatticeOptions o;
    for (const auto& [key, value] : doc.items()) {
        try {
            if (key == "rows") {
                o.rows = value.get<int>();
            } else if (key == "cols") {
                o.cols = value.get<int>();
            } else if (key == "coupling_mhz") {
                o.coupling_mhz = value.get<double>();
            } else if (key == "readout_index") {
                if (!value.is_null()) o.readout_index = value.get<int>();
            } else if (key == "inactive_sites") {
                for (const auto& s : value) {
                    if (!s.is_array() || s.size() != 2)
                        throw std::invalid_argument("inactive_sites entries must be [row, col]");
                    o.inactive_sites.push_back({s[0].get<int>(), s[1].get<int>()});
                }
            } else {
                throw std::invalid_argument("lattice preset: unknown key '" + key + "'");
            }
        } catch (const json::exception& e) {
            throw std::invalid_argument("lattice preset: bad value for '" + key + "': " + e.what());
        }
    }
    return o;
}

LatticeOptions load_lattice_preset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read lattice preset '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_lattice_preset(buf.str());
}

LatticeOptions to_options(const LatticeSpec& lattice) {
    LatticeOptions o;
    o.rows = lattice.rows();
    o.cols = lattice.cols();
    o.inactive_sites = lattice.inactive_sites();
    o.coupling_mhz = lattice.coupling_mhz();
    o.coupling_overrides = lattice.coupling_overrides();
    o.readout_index = lattice.readout_index();
    return o;
}

}  // namespace qns
