#pragma once

#include <cstdint>
#include <vector>

namespace ecoc {

// M x N matrix of class codewords. Hadamard-derived matrices have entries in
// {-1,+1}; the one-hot variant is the M x M identity with entries {0,1} and
// is flagged so the +-1 invariant is not applied to it.
struct CodewordMatrix {
    int class_count = 0;     // M
    int code_length = 0;     // N
    bool one_hot = false;
    std::vector<std::int8_t> entries;  // row-major, class_count x code_length

    std::int8_t at(int row, int col) const { return entries[static_cast<std::size_t>(row) * code_length + col]; }
    const std::int8_t* row(int r) const { return entries.data() + static_cast<std::size_t>(r) * code_length; }
};

// Largest supported Sylvester order exponent; 2^12 = 4096 codeword bits.
inline constexpr int kMaxOrderExponent = 12;

// Sylvester recursion H(p) = [[H, H], [H, -H]]; returns the 2^p x 2^p matrix
// as row-major +-1 entries. H * H^T = 2^p * I holds exactly in integers.
std::vector<std::int8_t> sylvester_hadamard(int order_exponent);

// Selects M rows of the N x N Sylvester matrix. N must be a power of two with
// M <= N. When M < N the constant all-ones first row is dropped and the next
// M rows are taken in Sylvester order; when M == N the whole matrix is used.
CodewordMatrix build_codeword_matrix(int class_count, int code_length);

// The M x M identity, flagged one-hot.
CodewordMatrix one_hot_matrix(int class_count);

// Minimum pairwise Hamming distance over all row pairs. Requires M >= 2.
int min_hamming_distance(const CodewordMatrix& codes);

// Throws std::invalid_argument when an invariant is broken: entries outside
// {-1,+1} (non-one-hot), duplicate rows, or N < M.
void validate(const CodewordMatrix& codes);

}  // namespace ecoc
