// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "vtrim/heredity.hpp"

using namespace vtrim;

TEST_CASE("lazy membership and source lookup") {
    HereditySpec h;
    h.lazy_layers = {2, 5, 6};
    CHECK(h.is_lazy(2));
    CHECK_FALSE(h.is_lazy(3));
    CHECK(h.source_of(2) == 1);
    CHECK(h.source_of(5) == 4);
    CHECK(h.source_of(6) == 4);  // skips the lazy layer 5
    CHECK(h.source_of(3) == 1);  // layer 2 is lazy, so the walk lands on 1
}

TEST_CASE("chained lazy layers share the nearest non-lazy source") {
    HereditySpec h;
    h.lazy_layers = {1, 2, 3};
    CHECK(h.source_of(1) == 0);
    CHECK(h.source_of(2) == 0);
    CHECK(h.source_of(3) == 0);
    CHECK_NOTHROW(h.validate(PruneSchedule{}, 8));
}

TEST_CASE("validation rejects malformed lazy sets") {
    HereditySpec unsorted;
    unsorted.lazy_layers = {5, 2};
    CHECK_THROWS_AS(unsorted.validate(PruneSchedule{}, 8), config_error);

    HereditySpec dup;
    dup.lazy_layers = {2, 2};
    CHECK_THROWS_AS(dup.validate(PruneSchedule{}, 8), config_error);

    HereditySpec zero;
    zero.lazy_layers = {0};
    CHECK_THROWS_AS(zero.validate(PruneSchedule{}, 8), config_error);

    HereditySpec high;
    high.lazy_layers = {8};
    CHECK_THROWS_AS(high.validate(PruneSchedule{}, 8), config_error);
}

TEST_CASE("validation rejects pruning between a lazy layer and its source") {
    const PruneSchedule prune = PruneSchedule::pvtp(3, 7, 0.5, 0.1225);

    // The pruned layer itself cannot be lazy: its donor saw more tokens.
    HereditySpec at_prune;
    at_prune.lazy_layers = {3};
    CHECK_THROWS_AS(at_prune.validate(prune, 8), config_error);

    // Directly above the prune is fine; the donor is the pruned layer.
    HereditySpec above;
    above.lazy_layers = {4};
    CHECK_NOTHROW(above.validate(prune, 8));

    // A chain reaching back across the prune is not.
    HereditySpec chain;
    chain.lazy_layers = {3, 4};
    CHECK_THROWS_AS(chain.validate(prune, 8), config_error);
}

TEST_CASE("lazy attention is the inherited weights applied to fresh values") {
    Matrix a(2, 3);
    a.data = {1.0, 0.0, 0.0, 0.0, 0.5, 0.5};
    Matrix v(3, 2);
    v.data = {1, 2, 3, 4, 5, 6};
    const Matrix out = lazy_attention(a, v);
    CHECK(out.at(0, 0) == 1.0);
    CHECK(out.at(0, 1) == 2.0);
    CHECK(out.at(1, 0) == 4.0);
    CHECK(out.at(1, 1) == 5.0);

    Matrix bad(2, 4);
    CHECK_THROWS_AS(lazy_attention(bad, v), state_error);
}
