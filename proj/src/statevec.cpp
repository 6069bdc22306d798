#include "qns/statevec.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace qns {

HamiltonianOp::HamiltonianOp(int num_qubits, std::vector<Edge> edges, std::vector<double> detunings_mhz)
    : num_qubits_(num_qubits), edges_(std::move(edges)), detunings_mhz_(std::move(detunings_mhz)) {
    if (num_qubits < 1 || num_qubits > kMaxQubits)
        throw std::invalid_argument("HamiltonianOp: bad qubit count");
    if (static_cast<int>(detunings_mhz_.size()) != num_qubits)
        throw std::invalid_argument("HamiltonianOp: detuning vector length must equal the qubit count");
    for (const Edge& e : edges_) {
        if (e.i < 0 || e.j < 0 || e.i >= num_qubits || e.j >= num_qubits || e.i == e.j)
            throw std::invalid_argument("HamiltonianOp: bad edge");
        if (!std::isfinite(e.coupling_mhz)) throw std::invalid_argument("HamiltonianOp: bad coupling");
        edge_rad_.push_back(kMhzToRadPerNs * e.coupling_mhz);
    }
    for (double d : detunings_mhz_) {
        if (!std::isfinite(d)) throw std::invalid_argument("HamiltonianOp: non-finite detuning");
        site_rad_.push_back(kMhzToRadPerNs * d);
    }
}

HamiltonianOp::HamiltonianOp(const LatticeSpec& lattice, std::span<const double> detunings_mhz)
    : HamiltonianOp(lattice.num_qubits(), lattice.edges(),
                    std::vector<double>(detunings_mhz.begin(), detunings_mhz.end())) {}

HamiltonianOp HamiltonianOp::zero_disorder(const LatticeSpec& lattice) {
    return HamiltonianOp(lattice.num_qubits(), lattice.edges(),
                         std::vector<double>(static_cast<std::size_t>(lattice.num_qubits()), 0.0));
}

double HamiltonianOp::diagonal(Bitmask b) const {
    double d = 0.0;
    for (int i = 0; i < num_qubits_; ++i) d += ((b >> i) & 1U) ? site_rad_[i] : -site_rad_[i];
    return d;
}

double HamiltonianOp::norm_bound() const {
    double s = 0.0;
    for (double w : edge_rad_) s += std::abs(w);
    for (double w : site_rad_) s += std::abs(w);
    return s;
}

namespace {

constexpr std::array<char, 8> kMagic = {'Q', 'N', 'S', 'S', 'T', 'A', 'T', 'E'};

template <typename T>
void put_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    std::array<char, sizeof(T)> bytes;
    if (!in.read(bytes.data(), sizeof(T))) throw std::runtime_error("read_amplitudes: truncated input");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

}  // namespace

void write_amplitudes(std::ostream& out, const StateVector& state) {
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(state.num_qubits()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(state.dim()));
    for (Eigen::Index b = 0; b < state.dim(); ++b) {
        put_le<double>(out, state[b].real());
        put_le<double>(out, state[b].imag());
    }
    if (!out) throw std::runtime_error("write_amplitudes: write failed");
}

StateVector read_amplitudes(std::istream& in) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic)
        throw std::runtime_error("read_amplitudes: bad magic");
    const auto nq = get_le<std::uint32_t>(in);
    const auto count = get_le<std::uint64_t>(in);
    if (nq < 1 || nq > static_cast<std::uint32_t>(kMaxQubits) || count != (std::uint64_t{1} << nq))
        throw std::runtime_error("read_amplitudes: inconsistent header");
    Amplitudes amps(static_cast<Eigen::Index>(count));
    for (Eigen::Index b = 0; b < amps.size(); ++b) {
        const double re = get_le<double>(in);
        const double im = get_le<double>(in);
        amps[b] = {re, im};
    }
    return StateVector::adopt(static_cast<int>(nq), std::move(amps));
}

void write_amplitudes(const std::string& path, const StateVector& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_amplitudes(out, state);
}

StateVector read_amplitudes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    return read_amplitudes(in);
}

}  // namespace qns
