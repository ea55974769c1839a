#include <doctest.h>

#include <stdexcept>

#include "ecoc/codes.hpp"
#include "ecoc/util.hpp"

using namespace ecoc;

namespace {

// independent pairwise distance count used as the oracle for the module's own
int hamming(const std::vector<std::int8_t>& m, int n, int a, int b) {
    int d = 0;
    for (int c = 0; c < n; ++c) {
        if (m[static_cast<std::size_t>(a) * n + c] != m[static_cast<std::size_t>(b) * n + c]) ++d;
    }
    return d;
}

}  // namespace

TEST_CASE("sylvester base cases") {
    CHECK(sylvester_hadamard(0) == std::vector<std::int8_t>{1});
    CHECK(sylvester_hadamard(1) == std::vector<std::int8_t>{1, 1, 1, -1});
}

TEST_CASE("sylvester order 16: exact gram and all 120 pairwise distances") {
    const auto h = sylvester_hadamard(4);
    const int n = 16;
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            long dot = 0;
            for (int c = 0; c < n; ++c) {
                dot += static_cast<long>(h[static_cast<std::size_t>(a) * n + c]) *
                       h[static_cast<std::size_t>(b) * n + c];
            }
            CHECK(dot == (a == b ? 16 : 0));
        }
    }
    int pairs = 0;
    for (int a = 0; a < n; ++a) {
        for (int b = a + 1; b < n; ++b) {
            CHECK(hamming(h, n, a, b) == 8);
            ++pairs;
        }
    }
    CHECK(pairs == 120);
}

TEST_CASE("sylvester invariants across orders") {
    for (int p = 2; p <= 6; ++p) {
        const auto h = sylvester_hadamard(p);
        const int n = 1 << p;
        Rng rng(static_cast<std::uint64_t>(p));
        for (int trial = 0; trial < 30; ++trial) {
            const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
            const int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
            long dot = 0;
            for (int c = 0; c < n; ++c) {
                dot += static_cast<long>(h[static_cast<std::size_t>(a) * n + c]) *
                       h[static_cast<std::size_t>(b) * n + c];
            }
            CHECK(dot == (a == b ? n : 0));
            if (a != b) CHECK(hamming(h, n, a, b) == n / 2);
        }
    }
}

TEST_CASE("sylvester rejects out-of-range orders") {
    CHECK_THROWS_AS(sylvester_hadamard(-1), std::invalid_argument);
    CHECK_THROWS_AS(sylvester_hadamard(kMaxOrderExponent + 1), std::invalid_argument);
}

TEST_CASE("build_codeword_matrix paper configurations") {
    const CodewordMatrix mnist = build_codeword_matrix(10, 16);
    CHECK(mnist.class_count == 10);
    CHECK(mnist.code_length == 16);
    CHECK(min_hamming_distance(mnist) == 8);
    validate(mnist);

    // the all-ones constant row is dropped when M < N
    for (int r = 0; r < 10; ++r) {
        bool all_ones = true;
        for (int c = 0; c < 16; ++c) {
            if (mnist.at(r, c) != 1) all_ones = false;
        }
        CHECK_FALSE(all_ones);
    }

    const CodewordMatrix gtsrb = build_codeword_matrix(32, 32);
    CHECK(gtsrb.class_count == 32);
    const auto full = sylvester_hadamard(5);
    CHECK(gtsrb.entries == full);  // M == N keeps the whole matrix
    CHECK(min_hamming_distance(gtsrb) == 16);

    const CodewordMatrix two = build_codeword_matrix(2, 2);
    CHECK(two.entries == std::vector<std::int8_t>{1, 1, 1, -1});
}

TEST_CASE("build_codeword_matrix is deterministic") {
    const CodewordMatrix a = build_codeword_matrix(10, 16);
    const CodewordMatrix b = build_codeword_matrix(10, 16);
    CHECK(a.entries == b.entries);
}

TEST_CASE("build_codeword_matrix rejects bad shapes") {
    CHECK_THROWS_AS(build_codeword_matrix(17, 16), std::invalid_argument);
    CHECK_THROWS_AS(build_codeword_matrix(5, 12), std::invalid_argument);
    CHECK_THROWS_AS(build_codeword_matrix(0, 16), std::invalid_argument);
}

TEST_CASE("one_hot_matrix") {
    const CodewordMatrix i2 = one_hot_matrix(2);
    CHECK(i2.entries == std::vector<std::int8_t>{1, 0, 0, 1});
    CHECK(i2.one_hot);

    const CodewordMatrix i10 = one_hot_matrix(10);
    for (int r = 0; r < 10; ++r) {
        for (int c = 0; c < 10; ++c) CHECK(i10.at(r, c) == (r == c ? 1 : 0));
    }
    CHECK(min_hamming_distance(i10) == 2);
    CHECK(min_hamming_distance(one_hot_matrix(3)) == 2);
    CHECK_THROWS_AS(one_hot_matrix(1), std::invalid_argument);
}

TEST_CASE("min_hamming_distance flags duplicate rows") {
    CodewordMatrix broken;
    broken.class_count = 2;
    broken.code_length = 4;
    broken.entries = {1, -1, 1, -1, 1, -1, 1, -1};
    CHECK(min_hamming_distance(broken) == 0);
    CHECK_THROWS_AS(validate(broken), std::invalid_argument);
}
