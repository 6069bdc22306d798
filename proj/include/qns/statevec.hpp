#pragma once

#include "qns/lattice.hpp"

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <complex>
#include <iosfwd>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qns {

/// MHz (ordinary frequency) to rad/ns.
inline constexpr double kMhzToRadPerNs = 2.0 * std::numbers::pi * 1e-3;

template <typename Real>
using AmplitudeVector = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1>;

template <typename Real>
using RealVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

/// Normalised pure state of N_q qubits over the computational basis.
/// Basis index b stores qubit i in bit i of b.
template <typename Real = double>
class BasicStateVector {
  public:
    using Scalar = std::complex<Real>;
    using Vector = AmplitudeVector<Real>;

    BasicStateVector() = default;

    /// Takes ownership of the amplitudes and normalises them.
    BasicStateVector(int num_qubits, Vector amplitudes)
        : num_qubits_(num_qubits), amplitudes_(std::move(amplitudes)) {
        if (num_qubits < 1 || num_qubits > kMaxQubits)
            throw std::invalid_argument("state vector: bad qubit count");
        if (amplitudes_.size() != (Eigen::Index{1} << num_qubits))
            throw std::invalid_argument("state vector: amplitude length is not 2^num_qubits");
        normalize();
    }

    /// Wraps amplitudes that are already normalised (within 1e-10) without rescaling.
    static BasicStateVector adopt(int num_qubits, Vector amplitudes) {
        BasicStateVector s;
        s.num_qubits_ = num_qubits;
        s.amplitudes_ = std::move(amplitudes);
        if (num_qubits < 1 || num_qubits > kMaxQubits ||
            s.amplitudes_.size() != (Eigen::Index{1} << num_qubits))
            throw std::invalid_argument("state vector: amplitude length is not 2^num_qubits");
        if (std::abs(s.amplitudes_.norm() - Real(1)) > Real(1e-10))
            throw std::invalid_argument("state vector: amplitudes are not normalised");
        return s;
    }

    int num_qubits() const { return num_qubits_; }
    Eigen::Index dim() const { return amplitudes_.size(); }
    const Vector& amplitudes() const { return amplitudes_; }
    Scalar operator[](Eigen::Index b) const { return amplitudes_[b]; }

    /// Direct access for in-place kernels; callers must keep the norm at 1.
    Vector& mutable_amplitudes() { return amplitudes_; }

    Real norm() const { return amplitudes_.norm(); }

    void normalize() {
        const Real n = amplitudes_.norm();
        if (!(n > Real(0))) throw std::invalid_argument("state vector: zero norm");
        amplitudes_ /= n;
    }

  private:
    int num_qubits_ = 0;
    Vector amplitudes_;
};

using StateVector = BasicStateVector<double>;
using Amplitudes = AmplitudeVector<double>;

template <typename Real = double>
BasicStateVector<Real> basis_state(int num_qubits, Bitmask bitmask) {
    if (num_qubits < 1 || num_qubits > kMaxQubits)
        throw std::invalid_argument("basis_state: bad qubit count");
    if (bitmask >> num_qubits)
        throw std::invalid_argument("basis_state: bitmask out of range");
    AmplitudeVector<Real> amps = AmplitudeVector<Real>::Zero(Eigen::Index{1} << num_qubits);
    amps[static_cast<Eigen::Index>(bitmask)] = Real(1);
    return BasicStateVector<Real>(num_qubits, std::move(amps));
}

template <typename Real = double>
BasicStateVector<Real> basis_state(const LatticeSpec& lattice, Bitmask bitmask) {
    return basis_state<Real>(lattice.num_qubits(), bitmask);
}

/// Z(theta) X(phi) Z(-theta), i.e. a rotation by phi about (cos theta, sin theta, 0).
template <typename Real>
Eigen::Matrix<std::complex<Real>, 2, 2> rotation_matrix(Real theta, Real phi) {
    using C = std::complex<Real>;
    const Real c = std::cos(phi / 2);
    const Real s = std::sin(phi / 2);
    Eigen::Matrix<C, 2, 2> u;
    u(0, 0) = C(c, 0);
    u(1, 1) = C(c, 0);
    u(0, 1) = C(0, -s) * std::polar(Real(1), -theta);
    u(1, 0) = C(0, -s) * std::polar(Real(1), theta);
    return u;
}

/// In-place 2x2 gate on one qubit, stride addressed.
template <typename Derived>
void apply_single_qubit(Eigen::MatrixBase<Derived>& amps, int qubit,
                        const Eigen::Matrix<typename Derived::Scalar, 2, 2>& u) {
    using Index = Eigen::Index;
    const Index n = amps.size();
    const Index stride = Index{1} << qubit;
    if (stride >= n) throw std::invalid_argument("apply_single_qubit: qubit out of range");
    const auto u00 = u(0, 0), u01 = u(0, 1), u10 = u(1, 0), u11 = u(1, 1);
    for (Index base = 0; base < n; base += 2 * stride) {
        for (Index k = base; k < base + stride; ++k) {
            const auto a0 = amps[k];
            const auto a1 = amps[k + stride];
            amps[k] = u00 * a0 + u01 * a1;
            amps[k + stride] = u10 * a0 + u11 * a1;
        }
    }
}

template <typename Real>
void apply_rotation(BasicStateVector<Real>& state, int qubit, Real theta, Real phi) {
    if (qubit < 0 || qubit >= state.num_qubits())
        throw std::invalid_argument("apply_rotation: qubit out of range");
    apply_single_qubit(state.mutable_amplitudes(), qubit, rotation_matrix<Real>(theta, phi));
}

template <typename Real>
Real excitation_probability(const BasicStateVector<Real>& state, int qubit) {
    if (qubit < 0 || qubit >= state.num_qubits())
        throw std::invalid_argument("excitation_probability: qubit out of range");
    const auto& a = state.amplitudes();
    const Eigen::Index stride = Eigen::Index{1} << qubit;
    Real p = 0;
    for (Eigen::Index base = stride; base < a.size(); base += 2 * stride)
        p += a.segment(base, stride).squaredNorm();
    return p;
}

/// Expected total excitation number sum_i P_i(1).
template <typename Real>
Real expected_excitations(const BasicStateVector<Real>& state) {
    const auto& a = state.amplitudes();
    Real n = 0;
    for (Eigen::Index b = 0; b < a.size(); ++b)
        n += static_cast<Real>(std::popcount(static_cast<Bitmask>(b))) * std::norm(a[b]);
    return n;
}

/// (N_e - N_o) / (N_e + N_o) with N_e the population on the Neel sublattice.
template <typename Real>
Real imbalance(const BasicStateVector<Real>& state, const LatticeSpec& lattice) {
    if (state.num_qubits() != lattice.num_qubits())
        throw std::invalid_argument("imbalance: state and lattice sizes differ");
    const Bitmask even = neel_pattern(lattice);
    const auto& a = state.amplitudes();
    Real ne = 0, no = 0;
    for (Eigen::Index b = 0; b < a.size(); ++b) {
        const auto bits = static_cast<Bitmask>(b);
        const Real w = std::norm(a[b]);
        ne += w * static_cast<Real>(std::popcount(bits & even));
        no += w * static_cast<Real>(std::popcount(bits & ~even));
    }
    if (!(ne + no > Real(1e-14)))
        throw std::domain_error("imbalance: state carries no excitations");
    return (ne - no) / (ne + no);
}

template <typename Real>
RealVector<Real> basis_distribution(const BasicStateVector<Real>& state) {
    return state.amplitudes().cwiseAbs2();
}

/// Squared statistical overlap (sum sqrt(p q))^2 / (sum p sum q).
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar overlap_fidelity(const Eigen::MatrixBase<DerivedP>& p,
                                           const Eigen::MatrixBase<DerivedQ>& q) {
    using Real = typename DerivedP::Scalar;
    if (p.size() != q.size()) throw std::invalid_argument("overlap_fidelity: length mismatch");
    if ((p.array() < Real(0)).any() || (q.array() < Real(0)).any())
        throw std::invalid_argument("overlap_fidelity: negative entry");
    const Real sp = p.sum();
    const Real sq = q.sum();
    if (!(sp > Real(0)) || !(sq > Real(0)))
        throw std::invalid_argument("overlap_fidelity: distribution with zero mass");
    if (p == q) return Real(1);
    const Real bc = (p.array() * q.array()).sqrt().sum();
    return std::min(Real(1), bc * bc / (sp * sq));
}

/// Matrix-free H/hbar in rad/ns:
///   sum_<ij> g_ij (XX + YY)/2 + sum_i d_i Z_i,  Z|1> = +|1>.
/// Couplings and detunings are given in MHz and converted on construction.
class HamiltonianOp {
  public:
    HamiltonianOp(int num_qubits, std::vector<Edge> edges, std::vector<double> detunings_mhz);
    HamiltonianOp(const LatticeSpec& lattice, std::span<const double> detunings_mhz);
    HamiltonianOp(const LatticeSpec& lattice, const DisorderProfile& disorder)
        : HamiltonianOp(lattice, disorder.detunings_mhz) {}

    /// Zero-disorder H_0 on the lattice couplings.
    static HamiltonianOp zero_disorder(const LatticeSpec& lattice);

    int num_qubits() const { return num_qubits_; }
    Eigen::Index dim() const { return Eigen::Index{1} << num_qubits_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<double>& detunings_mhz() const { return detunings_mhz_; }

    /// Diagonal element <b|H|b> in rad/ns.
    double diagonal(Bitmask b) const;

    /// Upper bound on the spectral radius, rad/ns.
    double norm_bound() const;

    /// out = H in. O(E 2^N) work, no matrix storage.
    template <typename DerivedIn, typename DerivedOut>
    void apply(const Eigen::MatrixBase<DerivedIn>& in, Eigen::MatrixBase<DerivedOut>& out) const {
        using Index = Eigen::Index;
        using Scalar = typename DerivedOut::Scalar;
        using Real = typename Scalar::value_type;
        const Index n = in.size();
        if (n != dim() || out.size() != n)
            throw std::invalid_argument("HamiltonianOp::apply: dimension mismatch");
        for (Index b = 0; b < n; ++b) out[b] = Real(diagonal(static_cast<Bitmask>(b))) * in[b];
        for (std::size_t e = 0; e < edges_.size(); ++e) {
            const Bitmask bi = Bitmask{1} << edges_[e].i;
            const Bitmask bj = Bitmask{1} << edges_[e].j;
            const Bitmask flip = bi | bj;
            const Real w = static_cast<Real>(edge_rad_[e]);
            for (Index b = 0; b < n; ++b) {
                const auto bits = static_cast<Bitmask>(b);
                if (((bits & bi) != 0) != ((bits & bj) != 0))
                    out[static_cast<Index>(bits ^ flip)] += w * in[b];
            }
        }
    }

  private:
    int num_qubits_ = 0;
    std::vector<Edge> edges_;
    std::vector<double> edge_rad_;
    std::vector<double> detunings_mhz_;
    std::vector<double> site_rad_;
};

template <typename Real>
AmplitudeVector<Real> apply_hamiltonian(const HamiltonianOp& h, const BasicStateVector<Real>& state) {
    if (state.num_qubits() != h.num_qubits())
        throw std::invalid_argument("apply_hamiltonian: dimension mismatch");
    AmplitudeVector<Real> out(state.dim());
    h.apply(state.amplitudes(), out);
    return out;
}

/// Little-endian dump: 8-byte magic "QNSSTATE", uint32 num_qubits,
/// uint64 amplitude count, then interleaved float64 (re, im) pairs.
void write_amplitudes(std::ostream& out, const StateVector& state);
StateVector read_amplitudes(std::istream& in);
void write_amplitudes(const std::string& path, const StateVector& state);
StateVector read_amplitudes(const std::string& path);

}  // namespace qns
