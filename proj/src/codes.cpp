#include "ecoc/codes.hpp"

#include <stdexcept>
#include <string>

namespace ecoc {

std::vector<std::int8_t> sylvester_hadamard(int order_exponent) {
    if (order_exponent < 0) {
        throw std::invalid_argument("sylvester_hadamard: order exponent must be non-negative");
    }
    if (order_exponent > kMaxOrderExponent) {
        throw std::invalid_argument("sylvester_hadamard: order exponent " +
                                    std::to_string(order_exponent) + " exceeds limit " +
                                    std::to_string(kMaxOrderExponent));
    }
    const std::size_t n = std::size_t{1} << order_exponent;
    std::vector<std::int8_t> h(n * n);
    h[0] = 1;
    // grow [[H,H],[H,-H]] in place, doubling the active block each step
    for (std::size_t half = 1; half < n; half *= 2) {
        for (std::size_t r = 0; r < half; ++r) {
            for (std::size_t c = 0; c < half; ++c) {
                const std::int8_t v = h[r * n + c];
                h[r * n + (c + half)] = v;
                h[(r + half) * n + c] = v;
                h[(r + half) * n + (c + half)] = static_cast<std::int8_t>(-v);
            }
        }
    }
    return h;
}

CodewordMatrix build_codeword_matrix(int class_count, int code_length) {
    if (class_count < 1 || code_length < 1) {
        throw std::invalid_argument("build_codeword_matrix: M and N must be positive");
    }
    if ((code_length & (code_length - 1)) != 0) {
        throw std::invalid_argument("build_codeword_matrix: N = " + std::to_string(code_length) +
                                    " is not a power of two");
    }
    if (class_count > code_length) {
        throw std::invalid_argument("build_codeword_matrix: M = " + std::to_string(class_count) +
                                    " exceeds N = " + std::to_string(code_length));
    }
    int p = 0;
    while ((1 << p) < code_length) ++p;
    const std::vector<std::int8_t> h = sylvester_hadamard(p);

    CodewordMatrix codes;
    codes.class_count = class_count;
    codes.code_length = code_length;
    codes.entries.resize(static_cast<std::size_t>(class_count) * code_length);
    // The all-ones first row carries no sign pattern; skip it unless the full
    // matrix is requested.
    const int first_row = class_count < code_length ? 1 : 0;
    for (int r = 0; r < class_count; ++r) {
        const std::size_t src = static_cast<std::size_t>(first_row + r) * code_length;
        for (int c = 0; c < code_length; ++c) {
            codes.entries[static_cast<std::size_t>(r) * code_length + c] = h[src + c];
        }
    }
    return codes;
}

CodewordMatrix one_hot_matrix(int class_count) {
    if (class_count < 2) {
        throw std::invalid_argument("one_hot_matrix: M must be at least 2");
    }
    CodewordMatrix codes;
    codes.class_count = class_count;
    codes.code_length = class_count;
    codes.one_hot = true;
    codes.entries.assign(static_cast<std::size_t>(class_count) * class_count, 0);
    for (int k = 0; k < class_count; ++k) {
        codes.entries[static_cast<std::size_t>(k) * class_count + k] = 1;
    }
    return codes;
}

int min_hamming_distance(const CodewordMatrix& codes) {
    if (codes.class_count < 2) {
        throw std::invalid_argument("min_hamming_distance: need at least 2 rows");
    }
    int best = codes.code_length + 1;
    for (int a = 0; a < codes.class_count; ++a) {
        for (int b = a + 1; b < codes.class_count; ++b) {
            int d = 0;
            const std::int8_t* ra = codes.row(a);
            const std::int8_t* rb = codes.row(b);
            for (int c = 0; c < codes.code_length; ++c) {
                if (ra[c] != rb[c]) ++d;
            }
            if (d < best) best = d;
        }
    }
    return best;
}

void validate(const CodewordMatrix& codes) {
    if (codes.code_length < codes.class_count) {
        throw std::invalid_argument("CodewordMatrix: N < M");
    }
    if (codes.entries.size() != static_cast<std::size_t>(codes.class_count) * codes.code_length) {
        throw std::invalid_argument("CodewordMatrix: entry count mismatch");
    }
    if (!codes.one_hot) {
        for (std::int8_t v : codes.entries) {
            if (v != 1 && v != -1) {
                throw std::invalid_argument("CodewordMatrix: entry outside {-1,+1}");
            }
        }
    }
    if (codes.class_count >= 2 && min_hamming_distance(codes) == 0) {
        throw std::invalid_argument("CodewordMatrix: duplicate rows");
    }
}

}  // namespace ecoc
