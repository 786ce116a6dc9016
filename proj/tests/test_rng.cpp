#include <doctest.h>

#include "resdiff/rng.hpp"

using namespace resdiff;

TEST_CASE("rng: identical seeds give identical streams") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.uniform() == b.uniform());
        CHECK(a.normal() == b.normal());
    }
}

TEST_CASE("rng: named substreams are independent of call order") {
    Rng a = Rng::stream(7, "alpha", 3);
    Rng unused = Rng::stream(7, "beta", 1);
    (void)unused.uniform();
    Rng b = Rng::stream(7, "alpha", 3);
    for (int i = 0; i < 10; ++i) CHECK(a.bits() == b.bits());
    CHECK(Rng::stream(7, "alpha", 3).bits() != Rng::stream(7, "alpha", 4).bits());
    CHECK(Rng::stream(7, "alpha", 3).bits() != Rng::stream(8, "alpha", 3).bits());
}

TEST_CASE("rng: uniform stays in [0, 1) and integer in range") {
    Rng rng(99);
    for (int i = 0; i < 1000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(rng.integer(17) < 17);
    }
}

TEST_CASE("rng: normal moments") {
    Rng rng(2024);
    const int n = 200000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(double(n)));
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}
