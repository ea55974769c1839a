#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecoc/tensor.hpp"

namespace ecoc {

// Labeled image collection. Pixels are stored flat in row-major image order
// and always live in [0,1]; labels index classes [0, class_count).
struct Dataset {
    std::vector<std::size_t> image_shape;  // {C,H,W} for images, {dims} for vectors
    std::vector<double> pixels;
    std::vector<int> labels;
    int class_count = 0;

    std::size_t image_size() const {
        std::size_t n = image_shape.empty() ? 0 : 1;
        for (std::size_t e : image_shape) n *= e;
        return n;
    }
    std::size_t count() const { return labels.size(); }

    Tensor image(std::size_t i) const {
        const std::size_t sz = image_size();
        return Tensor(image_shape,
                      std::vector<double>(pixels.begin() + static_cast<std::ptrdiff_t>(i * sz),
                                          pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * sz)));
    }

    void append(const Dataset& src, std::size_t i) {
        const std::size_t sz = src.image_size();
        pixels.insert(pixels.end(), src.pixels.begin() + static_cast<std::ptrdiff_t>(i * sz),
                      src.pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * sz));
        labels.push_back(src.labels[i]);
    }
};

// MNIST-style IDX ingestion. Expects big-endian magic 0x00000803 for images
// and 0x00000801 for labels; pixel bytes are scaled to [0,1]. Throws
// std::runtime_error on a bad magic, a count mismatch, or a truncated file.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Gaussian class blobs on a deterministic lattice with unit-variance noise,
// mapped into [0,1] via x -> clip((x+4)/(separation+8)). The lattice places
// class means on scaled Hadamard sign patterns when the dimension is a power
// of two with class_count <= dimensions (uniform pairwise distances, every
// coordinate informative); otherwise coordinate j of class k's mean is
// `separation` when bit j of k is set (class_count <= 2^dimensions required).
Dataset synthesize_gaussian_blobs(int class_count, int dimensions, int per_class_count,
                                  double separation, std::uint64_t seed);

// Deterministic disjoint covering splits; fractions must sum to 1 (1e-9).
std::vector<Dataset> split(const Dataset& dataset, const std::vector<double>& fractions,
                           std::uint64_t seed);

// Deterministic sample of k items without replacement (k capped at count).
Dataset sample_n(const Dataset& dataset, std::size_t k, std::uint64_t seed);

}  // namespace ecoc
