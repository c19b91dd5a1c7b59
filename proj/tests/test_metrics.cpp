// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ether/adapters.hpp"
#include "ether/errors.hpp"
#include "ether/metrics.hpp"
#include "support/test_utils.hpp"

using namespace ether;
using testutil::random_tensor;

TEST_CASE("hyperspherical energy of two orthonormal columns") {
    // Single pair at distance sqrt(2): energy 1/sqrt(2).
    const Tensor w = Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0});
    const EnergyResult he = hyperspherical_energy(w);
    CHECK(he.value == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
    CHECK(he.clamped_pairs == 0);
}

TEST_CASE("hyperspherical energy is invariant under orthogonal left factors") {
    Rng rng(211);
    for (int i = 0; i < 20; ++i) {
        const Tensor w = random_tensor(rng, {16, 10});
        const double before = hyperspherical_energy(w).value;

        const Tensor h = householder(Tensor::from_data({16}, rng.normal_vector(16)));
        CHECK(std::abs(hyperspherical_energy(matmul(h, w)).value - before) <= 1e-8);

        const Tensor q = cayley(random_tensor(rng, {16, 16}));
        CHECK(std::abs(hyperspherical_energy(matmul(q, w)).value - before) <= 1e-8);
    }
}

TEST_CASE("hyperspherical energy moves under non-orthogonal factors") {
    Rng rng(223);
    int moved = 0;
    for (int i = 0; i < 20; ++i) {
        const Tensor w = random_tensor(rng, {16, 10});
        const Tensor u = Tensor::from_data({16}, rng.normal_vector(16));
        const Tensor v = Tensor::from_data({16}, rng.normal_vector(16));
        const Tensor f = ether_plus_factor(u, v);
        const double delta = std::abs(hyperspherical_energy(matmul(f, w)).value -
                                      hyperspherical_energy(w).value);
        if (delta > 1e-6) {
            ++moved;
        }
    }
    CHECK(moved >= 19); // generic non-orthogonal factors shift the energy
}

TEST_CASE("hyperspherical energy edge cases") {
    Tensor w = Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 0.0});
    CHECK_THROWS_AS(hyperspherical_energy(w), DegenerateVectorError);

    // Duplicate columns hit the clamp floor and are counted.
    const Tensor dup = Tensor::from_data({2, 2}, {1.0, 1.0, 2.0, 2.0});
    const EnergyResult he = hyperspherical_energy(dup);
    CHECK(he.clamped_pairs == 1);
    CHECK(he.value == doctest::Approx(1.0 / kEnergyDistanceFloor));

    // Exponent knob changes magnitudes only.
    const Tensor ortho = Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0});
    CHECK(hyperspherical_energy(ortho, 2.0).value == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("orthogonality residual") {
    CHECK(orthogonality_residual(Tensor::identity(5)) == 0.0);

    Rng rng(227);
    const Tensor h = householder(Tensor::from_data({8}, rng.normal_vector(8)));
    CHECK(orthogonality_residual(h) <= 1e-10);

    const Tensor u = Tensor::from_data({8}, rng.normal_vector(8));
    const Tensor v = Tensor::from_data({8}, rng.normal_vector(8));
    CHECK(orthogonality_residual(ether_plus_factor(u, v)) > 1e-3);

    CHECK_THROWS_AS(orthogonality_residual(Tensor::zeros({3, 4})), DimensionError);
}

TEST_CASE("parameter count formulas") {
    // d = f = 64, r = 1.
    CHECK(param_count(Method::Lora, 64, 64, 1, 1, true) == 128);
    CHECK(param_count(Method::Ether, 64, 64, 1, 1, true) == 64);
    CHECK(param_count(Method::EtherPlus, 64, 64, 1, 1, true) == 256);
    CHECK(param_count(Method::Oft, 64, 64, 4, 1, true) == 1024);

    // ETHER count is independent of the block count.
    for (const std::size_t n : {1ul, 2ul, 4ul, 8ul}) {
        CHECK(param_count(Method::Ether, 64, 64, n, 1, true) == 64);
    }

    // OFT count halves when the block count doubles.
    for (const std::size_t n : {1ul, 2ul, 4ul}) {
        CHECK(param_count(Method::Oft, 64, 64, n, 1, true) ==
              2 * param_count(Method::Oft, 64, 64, 2 * n, 1, true));
        CHECK(param_count(Method::Oft, 64, 64, n, 1, true) * n == 64 * 64);
    }

    CHECK(param_count(Method::EtherPlus, 64, 32, 1, 1, false) == 128);
    CHECK_THROWS_AS(param_count(Method::Ether, 64, 64, 3, 1, true), ConfigError);
    CHECK_THROWS_AS(param_count(Method::Lora, 64, 64, 1, 0, true), ConfigError);
}

TEST_CASE("operation count formulas") {
    const OpCount dense = op_count(4, 3, 1);
    CHECK(dense.multiplications == 48);
    CHECK(dense.additions == 36);

    const OpCount blocked = op_count(4, 3, 2);
    CHECK(blocked.multiplications == 24);
    CHECK(blocked.additions == 18);

    for (const std::size_t d : {8ul, 32ul, 64ul}) {
        for (const std::size_t n : {1ul, 2ul, 4ul, 8ul}) {
            const OpCount b = op_count(d, 48, n);
            const OpCount one = op_count(d, 48, 1);
            CHECK(b.multiplications * n == one.multiplications);
            CHECK(b.additions * n == one.additions);
        }
    }
    CHECK_THROWS_AS(op_count(4, 3, 3), ConfigError);
}

TEST_CASE("weights distance") {
    Rng rng(229);
    const Tensor w = random_tensor(rng, {8, 6});
    CHECK(weights_distance(w, w) == 0.0);
    CHECK(weights_distance(w, scale(w, 2.0)) ==
          doctest::Approx(frobenius_norm(w)).epsilon(1e-12));
    CHECK_THROWS_AS(weights_distance(w, Tensor::zeros({6, 8})), DimensionError);

    // Merged reflection layer: ||HW - W|| equals ||(H - I) W|| directly.
    const Tensor h = householder(Tensor::from_data({8}, rng.normal_vector(8)));
    const double merged_form = weights_distance(w, matmul(h, w));
    const double direct_form = frobenius_norm(matmul(sub(h, Tensor::identity(8)), w));
    CHECK(merged_form == doctest::Approx(direct_form).epsilon(1e-12));
}

TEST_CASE("transformation distance per adapter") {
    Rng rng(233);

    auto oft = make_adapter({Method::Oft, 2, 4, true}, 12, 8, rng);
    CHECK(transformation_distance(*oft) == 0.0);

    auto ether1 = make_adapter({Method::Ether, 1, 4, true}, 12, 8, rng);
    CHECK(transformation_distance(*ether1) == doctest::Approx(2.0).epsilon(1e-12));

    // Random relaxed factors stay within [0, 2] per factor.
    for (int i = 0; i < 200; ++i) {
        Rng arng(rng.next_u64());
        auto eplus = make_adapter({Method::EtherPlus, 1, 4, false}, 12, 8, arng);
        auto& ep = dynamic_cast<EtherPlusAdapter&>(*eplus);
        ep.left_v()[0].mutable_data() = arng.normal_vector(12);
        const double dist = transformation_distance(*eplus);
        CHECK(dist >= 0.0);
        CHECK(dist <= 2.0 + 1e-10);
    }

    // LoRA reports the additive delta norm.
    auto lora = make_adapter({Method::Lora, 1, 2, true}, 12, 8, rng);
    auto& l = dynamic_cast<LoraAdapter&>(*lora);
    for (auto& v : l.b().mutable_data()) {
        v = 1.0;
    }
    CHECK(transformation_distance(*lora) ==
          doctest::Approx(frobenius_norm(l.delta())).epsilon(1e-12));
    CHECK(lora->additive());
}

TEST_CASE("determinant") {
    CHECK(determinant(Tensor::identity(4)) == 1.0);
    const Tensor m = Tensor::from_data({2, 2}, {2.0, 1.0, 1.0, 2.0});
    CHECK(determinant(m) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(determinant(Tensor::zeros({3, 3})) == 0.0);
}
