#include "qns/lattice.hpp"
#include "qns/random.hpp"

#include <doctest.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>

using namespace qns;

TEST_CASE("full grids number sites row-major and couple nearest neighbours") {
    const auto l = build_lattice(3, 3, 2.185);
    CHECK(l.num_qubits() == 9);
    CHECK(l.edges().size() == 12);
    CHECK(l.index_of(1, 2).value() == 5);
    CHECK(l.site_of(7) == Site{2, 1});
    for (const Edge& e : l.edges()) {
        const Site a = l.site_of(e.i), b = l.site_of(e.j);
        CHECK(std::abs(a.row - b.row) + std::abs(a.col - b.col) == 1);
        CHECK(e.i < e.j);
        CHECK(e.coupling_mhz == doctest::Approx(2.185));
    }
    CHECK(build_lattice(4, 4, 2.185).edges().size() == 24);
}

TEST_CASE("default readout is the centre site, lowest index on ties") {
    CHECK(build_lattice(3, 3, 2.185).readout_index() == 4);
    CHECK(build_lattice(4, 4, 2.185).readout_index() == 5);
    CHECK(build_lattice(1, 2, 1.0).readout_index() == 0);
    CHECK(build_lattice(3, 3, 2.185, 0).readout_index() == 0);
}

TEST_CASE("inactive sites are skipped in the numbering") {
    LatticeOptions o;
    o.inactive_sites = {{0, 0}};
    const auto l = build_lattice(o);
    CHECK(l.num_qubits() == 8);
    CHECK_FALSE(l.is_active(0, 0));
    CHECK(l.index_of(0, 1).value() == 0);
    CHECK(l.edges().size() == 10);
}

TEST_CASE("invalid geometries are rejected") {
    LatticeOptions split;
    split.rows = 1;
    split.cols = 3;
    split.inactive_sites = {{0, 1}};
    CHECK_THROWS_AS(build_lattice(split), std::invalid_argument);
    CHECK_THROWS_AS(build_lattice(3, 3, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(build_lattice(3, 3, 2.185, 9), std::invalid_argument);
    CHECK_THROWS_AS(build_lattice(0, 3, 2.185), std::invalid_argument);
    CHECK_THROWS_AS(build_lattice(8, 8, 2.185), std::invalid_argument);  // 64 qubits exceed the bitmask
}

TEST_CASE("coupling overrides apply only to adjacent pairs") {
    LatticeOptions o;
    o.coupling_overrides[{0, 1}] = 3.0;
    const auto l = build_lattice(o);
    for (const Edge& e : l.edges())
        CHECK(e.coupling_mhz == doctest::Approx(e.i == 0 && e.j == 1 ? 3.0 : 2.185));
    LatticeOptions bad;
    bad.coupling_overrides[{0, 4}] = 3.0;
    CHECK_THROWS_AS(build_lattice(bad), std::invalid_argument);
}

TEST_CASE("Neel pattern marks the (row + col) even sublattice") {
    const auto l = build_lattice(3, 3, 2.185);
    CHECK(neel_pattern(l) == 0b101010101ULL);
    CHECK(std::popcount(neel_pattern(l)) == 5);
    CHECK(std::popcount(neel_pattern(build_lattice(4, 4, 2.185))) == 8);
}

TEST_CASE("disorder draws are bounded, seeded and have uniform moments") {
    const auto l = build_lattice(3, 3, 2.185);
    const auto a = sample_disorder(l, 50.0, 7);
    const auto b = sample_disorder(l, 50.0, 7);
    CHECK(a.detunings_mhz == b.detunings_mhz);
    CHECK(sample_disorder(l, 50.0, 8).detunings_mhz != a.detunings_mhz);
    for (double d : a.detunings_mhz) CHECK(std::abs(d) <= 50.0);
    for (double d : sample_disorder(l, 0.0, 3).detunings_mhz) CHECK(d == 0.0);
    CHECK_THROWS_AS(sample_disorder(l, -1.0, 1), std::invalid_argument);

    // Uniform on [-h, h]: mean 0, variance h^2 / 3.
    double s1 = 0.0, s2 = 0.0;
    int n = 0;
    for (std::uint64_t seed = 0; seed < 4000; ++seed)
        for (double d : sample_disorder(l, 1.0, seed).detunings_mhz) {
            s1 += d;
            s2 += d * d;
            ++n;
        }
    CHECK(std::abs(s1 / n) < 0.01);
    CHECK(s2 / n == doctest::Approx(1.0 / 3.0).epsilon(0.02));
}

TEST_CASE("derived seeds are stable and distinct") {
    CHECK(derive_seed(1, "sample", 0) == derive_seed(1, "sample", 0));
    CHECK(derive_seed(1, "sample", 0) != derive_seed(1, "sample", 1));
    CHECK(derive_seed(1, "sample", 0) != derive_seed(2, "sample", 0));
    CHECK(derive_seed(1, "sample", 0) != derive_seed(1, "other", 0));
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double u = uniform01(rng);
        CHECK((u >= 0.0 && u < 1.0));
    }
}

TEST_CASE("lattice presets parse and reject unknown keys") {
    const auto o = parse_lattice_preset(R"({"rows": 8, "cols": 8, "coupling_mhz": 2.185,
                                             "inactive_sites": [[0, 7], [7, 0], [7, 7]]})");
    const auto l = build_lattice(o);
    CHECK(l.num_qubits() == 61);
    CHECK_THROWS_AS(parse_lattice_preset(R"({"rows": 3, "colz": 3})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_lattice_preset("not json"), std::invalid_argument);

    const auto round = build_lattice(to_options(l));
    CHECK(round.num_qubits() == 61);
    CHECK(round.readout_index() == l.readout_index());
}
