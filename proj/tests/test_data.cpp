#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include "ecoc/data.hpp"
#include "ecoc/util.hpp"

using namespace ecoc;

namespace {

void put_be32(std::ofstream& out, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

// hand-built 2-image 2x3 IDX fixture
void write_fixture(const std::string& img_path, const std::string& lab_path,
                   std::uint32_t img_magic = 0x00000803u, std::uint32_t lab_magic = 0x00000801u,
                   bool truncate_images = false) {
    std::ofstream img(img_path, std::ios::binary);
    put_be32(img, img_magic);
    put_be32(img, 2);
    put_be32(img, 2);
    put_be32(img, 3);
    const unsigned char pixels[12] = {0, 51, 102, 153, 204, 255, 255, 0, 128, 10, 20, 30};
    img.write(reinterpret_cast<const char*>(pixels), truncate_images ? 7 : 12);
    img.close();

    std::ofstream lab(lab_path, std::ios::binary);
    put_be32(lab, lab_magic);
    put_be32(lab, 2);
    lab.put(1);
    lab.put(0);
}

struct Fixture {
    std::string img = "idx_fixture_images.bin";
    std::string lab = "idx_fixture_labels.bin";
    ~Fixture() {
        std::remove(img.c_str());
        std::remove(lab.c_str());
    }
};

}  // namespace

TEST_CASE("load_idx round-trips a hand-built fixture exactly") {
    Fixture f;
    write_fixture(f.img, f.lab);
    const Dataset ds = load_idx(f.img, f.lab);
    REQUIRE(ds.count() == 2);
    CHECK(ds.image_shape == std::vector<std::size_t>{1, 2, 3});
    CHECK(ds.labels[0] == 1);
    CHECK(ds.labels[1] == 0);
    const double expect[6] = {0.0, 51.0 / 255, 102.0 / 255, 153.0 / 255, 204.0 / 255, 1.0};
    const Tensor first = ds.image(0);
    for (std::size_t i = 0; i < 6; ++i) CHECK(first[i] == doctest::Approx(expect[i]).epsilon(1e-15));
    for (double v : ds.pixels) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("load_idx rejects bad magic, truncation and count mismatch") {
    Fixture f;
    write_fixture(f.img, f.lab, 0x00000801u);  // image file carrying the label magic
    CHECK_THROWS_AS(load_idx(f.img, f.lab), std::runtime_error);

    write_fixture(f.img, f.lab, 0x00000803u, 0x00000803u);  // label file with image magic
    CHECK_THROWS_AS(load_idx(f.img, f.lab), std::runtime_error);

    write_fixture(f.img, f.lab, 0x00000803u, 0x00000801u, true);  // short pixel payload
    CHECK_THROWS_AS(load_idx(f.img, f.lab), std::runtime_error);

    write_fixture(f.img, f.lab);
    {
        std::ofstream lab(f.lab, std::ios::binary);
        put_be32(lab, 0x00000801u);
        put_be32(lab, 3);  // claims 3 labels vs 2 images
        lab.put(0);
        lab.put(1);
        lab.put(2);
    }
    CHECK_THROWS_AS(load_idx(f.img, f.lab), std::runtime_error);
    CHECK_THROWS_AS(load_idx("no_such_file_a", "no_such_file_b"), std::runtime_error);
}

TEST_CASE("synthetic blobs are deterministic and in range") {
    const Dataset a = synthesize_gaussian_blobs(4, 6, 25, 8.0, 77);
    const Dataset b = synthesize_gaussian_blobs(4, 6, 25, 8.0, 77);
    CHECK(a.pixels == b.pixels);
    CHECK(a.labels == b.labels);
    CHECK(a.count() == 100);
    for (double v : a.pixels) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    const Dataset c = synthesize_gaussian_blobs(4, 6, 25, 8.0, 78);
    CHECK(a.pixels != c.pixels);
}

TEST_CASE("synthetic blobs with high separation are linearly classifiable") {
    // nearest-class-mean stands in for the linear classifier
    const int m = 4, dims = 6;
    const double sep = 8.0;
    const Dataset ds = synthesize_gaussian_blobs(m, dims, 200, sep, 5);
    const double lo = -4.0, range = sep + 8.0;
    std::size_t wrong = 0;
    for (std::size_t s = 0; s < ds.count(); ++s) {
        const Tensor x = ds.image(s);
        int best = -1;
        double best_d = 1e300;
        for (int k = 0; k < m; ++k) {
            double d = 0.0;
            for (int j = 0; j < dims; ++j) {
                const double mean = ((k >> j) & 1) ? sep : 0.0;
                const double mean01 = (mean - lo) / range;
                const double diff = x[static_cast<std::size_t>(j)] - mean01;
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        if (best != ds.labels[s]) ++wrong;
    }
    CHECK(static_cast<double>(wrong) / static_cast<double>(ds.count()) < 0.01);
}

TEST_CASE("synthetic blob preconditions") {
    CHECK_THROWS_AS(synthesize_gaussian_blobs(4, 6, 0, 8.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(synthesize_gaussian_blobs(1, 6, 10, 8.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(synthesize_gaussian_blobs(4, 6, 10, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(synthesize_gaussian_blobs(9, 3, 10, 8.0, 1), std::invalid_argument);  // 9 > 2^3
}

TEST_CASE("split produces exact sizes, disjoint coverage and is seed-stable") {
    const Dataset ds = synthesize_gaussian_blobs(4, 5, 25, 6.0, 3);
    REQUIRE(ds.count() == 100);
    const std::vector<Dataset> parts = split(ds, {0.8, 0.1, 0.1}, 11);
    REQUIRE(parts.size() == 3);
    CHECK(parts[0].count() == 80);
    CHECK(parts[1].count() == 10);
    CHECK(parts[2].count() == 10);

    // union of splits = original multiset (per-sample fingerprints)
    auto fingerprint = [](const Dataset& d, std::size_t i) {
        const Tensor x = d.image(i);
        return fnv1a64(x.data(), x.size() * sizeof(double)) ^ static_cast<std::uint64_t>(d.labels[i]);
    };
    std::map<std::uint64_t, int> want, got;
    for (std::size_t i = 0; i < ds.count(); ++i) ++want[fingerprint(ds, i)];
    for (const Dataset& part : parts) {
        for (std::size_t i = 0; i < part.count(); ++i) ++got[fingerprint(part, i)];
    }
    CHECK(want == got);

    const std::vector<Dataset> again = split(ds, {0.8, 0.1, 0.1}, 11);
    CHECK(again[1].pixels == parts[1].pixels);
    CHECK(again[1].labels == parts[1].labels);

    CHECK_THROWS_AS(split(ds, {0.5, 0.4}, 1), std::invalid_argument);
}

TEST_CASE("sample_n is deterministic and caps at the dataset size") {
    const Dataset ds = synthesize_gaussian_blobs(3, 4, 10, 6.0, 9);
    const Dataset a = sample_n(ds, 7, 42);
    const Dataset b = sample_n(ds, 7, 42);
    CHECK(a.pixels == b.pixels);
    CHECK(a.count() == 7);
    CHECK(sample_n(ds, 1000, 42).count() == ds.count());
}
