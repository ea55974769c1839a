#include "ecoc/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ecoc/codes.hpp"
#include "ecoc/util.hpp"

namespace ecoc {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
}

std::uint32_t be32(const std::vector<std::uint8_t>& buf, std::size_t pos) {
    if (pos + 4 > buf.size()) throw std::runtime_error("truncated IDX file");
    return (static_cast<std::uint32_t>(buf[pos]) << 24) |
           (static_cast<std::uint32_t>(buf[pos + 1]) << 16) |
           (static_cast<std::uint32_t>(buf[pos + 2]) << 8) | static_cast<std::uint32_t>(buf[pos + 3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const std::vector<std::uint8_t> img = read_file(images_path);
    const std::vector<std::uint8_t> lab = read_file(labels_path);

    if (be32(img, 0) != 0x00000803u) {
        throw std::runtime_error("bad IDX magic in " + images_path + " (want 0x00000803)");
    }
    if (be32(lab, 0) != 0x00000801u) {
        throw std::runtime_error("bad IDX magic in " + labels_path + " (want 0x00000801)");
    }
    const std::size_t n_img = be32(img, 4);
    const std::size_t rows = be32(img, 8);
    const std::size_t cols = be32(img, 12);
    const std::size_t n_lab = be32(lab, 4);
    if (n_img != n_lab) {
        throw std::runtime_error("IDX image/label count mismatch: " + std::to_string(n_img) +
                                 " vs " + std::to_string(n_lab));
    }
    if (img.size() != 16 + n_img * rows * cols) throw std::runtime_error("truncated IDX image file");
    if (lab.size() != 8 + n_lab) throw std::runtime_error("truncated IDX label file");

    Dataset ds;
    ds.image_shape = {1, rows, cols};
    ds.pixels.resize(n_img * rows * cols);
    for (std::size_t i = 0; i < ds.pixels.size(); ++i) {
        ds.pixels[i] = static_cast<double>(img[16 + i]) / 255.0;
    }
    ds.labels.resize(n_lab);
    int max_label = 0;
    for (std::size_t i = 0; i < n_lab; ++i) {
        ds.labels[i] = lab[8 + i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.class_count = max_label + 1;
    return ds;
}

Dataset synthesize_gaussian_blobs(int class_count, int dimensions, int per_class_count,
                                  double separation, std::uint64_t seed) {
    if (class_count < 2) throw std::invalid_argument("blobs: class_count must be >= 2");
    if (per_class_count < 1) throw std::invalid_argument("blobs: per_class_count must be >= 1");
    if (separation <= 0.0) throw std::invalid_argument("blobs: separation must be positive");
    if (dimensions < 1 || (dimensions < 63 && (std::uint64_t{1} << dimensions) < static_cast<std::uint64_t>(class_count))) {
        throw std::invalid_argument("blobs: need class_count <= 2^dimensions distinct lattice means");
    }

    // Lattice: when the dimension is a power of two with room for every class,
    // means sit on scaled Hadamard sign patterns, which spreads the class
    // structure over every coordinate at uniform pairwise distance. Otherwise
    // coordinate j of class k's mean is `separation` when bit j of k is set.
    std::vector<double> means(static_cast<std::size_t>(class_count) * dimensions, 0.0);
    const bool pow2_dims = (dimensions & (dimensions - 1)) == 0;
    if (pow2_dims && class_count <= dimensions) {
        const CodewordMatrix lattice = build_codeword_matrix(class_count, dimensions);
        for (int k = 0; k < class_count; ++k) {
            for (int j = 0; j < dimensions; ++j) {
                means[static_cast<std::size_t>(k) * dimensions + j] =
                    lattice.at(k, j) > 0 ? separation : 0.0;
            }
        }
    } else {
        for (int k = 0; k < class_count; ++k) {
            for (int j = 0; j < dimensions && j < 63; ++j) {
                if ((static_cast<std::uint64_t>(k) >> j) & 1u) {
                    means[static_cast<std::size_t>(k) * dimensions + j] = separation;
                }
            }
        }
    }

    Rng rng(seed);
    Dataset ds;
    ds.class_count = class_count;
    ds.image_shape = {static_cast<std::size_t>(dimensions)};
    const double lo = -4.0;
    const double range = separation + 8.0;
    for (int k = 0; k < class_count; ++k) {
        for (int s = 0; s < per_class_count; ++s) {
            for (int j = 0; j < dimensions; ++j) {
                const double raw = means[static_cast<std::size_t>(k) * dimensions + j] + rng.normal();
                ds.pixels.push_back(std::clamp((raw - lo) / range, 0.0, 1.0));
            }
            ds.labels.push_back(k);
        }
    }
    return ds;
}

std::vector<Dataset> split(const Dataset& dataset, const std::vector<double>& fractions,
                           std::uint64_t seed) {
    double sum = 0.0;
    for (double f : fractions) {
        if (f < 0.0) throw std::invalid_argument("split: negative fraction");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("split: fractions sum to " + std::to_string(sum) + ", want 1");
    }

    std::vector<std::size_t> order(dataset.count());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<Dataset> parts(fractions.size());
    const std::size_t n = order.size();
    double cum = 0.0;
    std::size_t begin = 0;
    for (std::size_t p = 0; p < fractions.size(); ++p) {
        cum += fractions[p];
        // cumulative rounding keeps the parts disjoint and covering
        const std::size_t end =
            (p + 1 == fractions.size()) ? n : static_cast<std::size_t>(std::llround(cum * static_cast<double>(n)));
        parts[p].image_shape = dataset.image_shape;
        parts[p].class_count = dataset.class_count;
        for (std::size_t i = begin; i < end; ++i) parts[p].append(dataset, order[i]);
        begin = end;
    }
    return parts;
}

Dataset sample_n(const Dataset& dataset, std::size_t k, std::uint64_t seed) {
    std::vector<std::size_t> order(dataset.count());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    Dataset out;
    out.image_shape = dataset.image_shape;
    out.class_count = dataset.class_count;
    const std::size_t take = std::min(k, order.size());
    for (std::size_t i = 0; i < take; ++i) out.append(dataset, order[i]);
    return out;
}

}  // namespace ecoc
