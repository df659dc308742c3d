#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "sor/csvfmt.hpp"
#include "sor/errors.hpp"
#include "sor/noisebox.hpp"
#include "sor/rng.hpp"

using namespace sor;
using namespace sor::data;

namespace {

struct TempFile {
    std::filesystem::path path;
    explicit TempFile(const std::string& name) {
        path = std::filesystem::temp_directory_path() / name;
    }
    ~TempFile() {
        std::error_code ec;
        std::filesystem::remove(path, ec);
    }
};

int count_exact_ones(const Dataset& ds, int i) {
    const nn::Tensor img = ds.image(i);
    int ones = 0;
    for (std::size_t p = 0; p < img.size(); ++p)
        if (img[p] == 1.0) ++ones;
    return ones;
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
    std::ofstream os(p, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("generated images have the documented shape and label coding") {
    const Dataset ds = generate(50, 0.1, 7);
    CHECK(ds.images.shape() == std::vector<int>{50, 32, 32, 1});
    CHECK(ds.size() == 50);
    CHECK(ds.noise_ub == 0.1);
    CHECK(ds.seed == 7);
    CHECK_FALSE(ds.standardized);
    for (double l : ds.labels) CHECK((l == 0.0 || l == 1.0));
}

TEST_CASE("positives carry one contiguous 8x8 block of exact ones, negatives none") {
    const Dataset ds = generate(80, 0.1, 19);
    int positives = 0;
    for (int i = 0; i < ds.size(); ++i) {
        const nn::Tensor img = ds.image(i);
        if (ds.labels[static_cast<std::size_t>(i)] == 0.0) {
            // Noise lives in [0, 0.1); an exact 1.0 cannot occur.
            CHECK(count_exact_ones(ds, i) == 0);
            for (std::size_t p = 0; p < img.size(); ++p) {
                CHECK(img[p] >= 0.0);
                CHECK(img[p] < 0.1);
            }
            continue;
        }
        ++positives;
        CHECK(count_exact_ones(ds, i) == 64);
        int rmin = 32, rmax = -1, cmin = 32, cmax = -1;
        for (int r = 0; r < 32; ++r)
            for (int c = 0; c < 32; ++c)
                if (img.at3(r, c, 0) == 1.0) {
                    rmin = std::min(rmin, r);
                    rmax = std::max(rmax, r);
                    cmin = std::min(cmin, c);
                    cmax = std::max(cmax, c);
                }
        CHECK(rmax - rmin == 7);
        CHECK(cmax - cmin == 7);
        // Box fits fully inside the image.
        CHECK(rmin >= 0);
        CHECK(rmax <= 31);
        for (int r = rmin; r <= rmax; ++r)
            for (int c = cmin; c <= cmax; ++c) CHECK(img.at3(r, c, 0) == 1.0);
    }
    CHECK(positives > 0);
    CHECK(positives < ds.size());
}

TEST_CASE("generation follows the documented draw order exactly") {
    const std::uint64_t seed = 555;
    const double ub = 0.73;
    const Dataset ds = generate(12, ub, seed);

    // Independent replay: pixels first, then the label draw, then the two
    // corner draws for positives only.
    Xoshiro256 rng(seed);
    for (int i = 0; i < 12; ++i) {
        std::vector<double> px(1024);
        for (int p = 0; p < 1024; ++p) px[p] = rng.uniform(0.0, ub);
        const bool positive = rng.uniform() < 0.5;
        double label = 0.0;
        if (positive) {
            label = 1.0;
            const int r0 = static_cast<int>(rng.below(25));
            const int c0 = static_cast<int>(rng.below(25));
            for (int r = r0; r < r0 + 8; ++r)
                for (int c = c0; c < c0 + 8; ++c) px[static_cast<std::size_t>(r) * 32 + c] = 1.0;
        }
        CHECK(ds.labels[static_cast<std::size_t>(i)] == label);
        const nn::Tensor img = ds.image(i);
        for (int p = 0; p < 1024; ++p) CHECK(img[static_cast<std::size_t>(p)] == px[static_cast<std::size_t>(p)]);
    }
}

TEST_CASE("positive rate over ten thousand draws is near one half") {
    const Dataset ds = generate(10000, 1.0, 2024);
    double sum = 0.0;
    for (double l : ds.labels) sum += l;
    const double rate = sum / 10000.0;
    CHECK(rate >= 0.48);
    CHECK(rate <= 0.52);
}

TEST_CASE("generation is deterministic in the seed") {
    const Dataset a = generate(20, 0.1, 31);
    const Dataset b = generate(20, 0.1, 31);
    CHECK(a.images == b.images);
    CHECK(a.labels == b.labels);

    const Dataset c = generate(20, 0.1, 32);
    CHECK_FALSE(a.images == c.images);
}

TEST_CASE("generate validates its arguments") {
    CHECK_THROWS_AS(generate(0, 0.1, 1), ValidationError);
    CHECK_THROWS_AS(generate(-3, 0.1, 1), ValidationError);
    CHECK_THROWS_AS(generate(5, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(generate(5, -1.0, 1), ValidationError);
    CHECK_THROWS_AS(generate(5, std::nan(""), 1), ValidationError);
}

TEST_CASE("image accessor copies one image and checks bounds") {
    const Dataset ds = generate(3, 0.5, 77);
    const nn::Tensor img = ds.image(2);
    CHECK(img.shape() == std::vector<int>{32, 32, 1});
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c) CHECK(img.at3(r, c, 0) == ds.images[2 * 1024 + r * 32 + c]);
    CHECK_THROWS_AS(ds.image(3), ValidationError);
    CHECK_THROWS_AS(ds.image(-1), ValidationError);
}

TEST_CASE("standardizer matches a two-pass reference with n-1 variance") {
    const Dataset ds = generate(30, 0.1, 40);
    const Standardizer s = fit_standardizer(ds);

    const std::size_t count = ds.images.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < count; ++i) sum += ds.images[i];
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double d = ds.images[i] - mean;
        sq += d * d;
    }
    const double stddev = std::sqrt(sq / static_cast<double>(count - 1));

    CHECK(s.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(s.stddev == doctest::Approx(stddev).epsilon(1e-12));
    CHECK(s.mean > 0.0);
    CHECK(s.stddev > 0.0);
}

TEST_CASE("applying a standardizer rescales pixels and flags the copy") {
    const Dataset ds = generate(25, 1.0, 41);
    const Standardizer s = fit_standardizer(ds);
    const Dataset out = apply_standardizer(s, ds);

    CHECK(out.standardized);
    CHECK_FALSE(ds.standardized);  // original untouched
    for (std::size_t i = 0; i < ds.images.size(); ++i)
        CHECK(out.images[i] == (ds.images[i] - s.mean) / s.stddev);

    // Transformed training pixels have mean ~0 and sample stddev ~1.
    double sum = 0.0;
    for (std::size_t i = 0; i < out.images.size(); ++i) sum += out.images[i];
    const double mean = sum / static_cast<double>(out.images.size());
    CHECK(std::abs(mean) < 1e-9);
    double sq = 0.0;
    for (std::size_t i = 0; i < out.images.size(); ++i) sq += (out.images[i] - mean) * (out.images[i] - mean);
    const double stddev = std::sqrt(sq / static_cast<double>(out.images.size() - 1));
    CHECK(stddev == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("test split is transformed with training statistics, not its own") {
    const Dataset train = generate(30, 0.1, 50);
    const Dataset test = generate(100, 0.1, 51);
    const Standardizer s = fit_standardizer(train);
    const Dataset out = apply_standardizer(s, test);
    for (std::size_t i = 0; i < test.images.size(); ++i)
        CHECK(out.images[i] == (test.images[i] - s.mean) / s.stddev);
    CHECK(out.labels == test.labels);
}

TEST_CASE("standardizer rejects constant pixels") {
    Dataset flat;
    flat.images = nn::Tensor({2, 32, 32, 1});
    flat.images.fill(0.5);
    flat.labels = {0.0, 1.0};
    CHECK_THROWS_AS(fit_standardizer(flat), ValidationError);

    Standardizer bad;
    bad.stddev = 0.0;
    CHECK_THROWS_AS(apply_standardizer(bad, flat), ValidationError);
}

TEST_CASE("dataset files round trip bit for bit") {
    TempFile tmp("nb_roundtrip.bin");
    const Dataset ds = generate(17, 0.1, 99);
    save_dataset(ds, tmp.path);
    const Dataset back = load_dataset(tmp.path);

    CHECK(back.images == ds.images);
    CHECK(back.labels == ds.labels);
    CHECK(back.noise_ub == ds.noise_ub);
    CHECK(back.seed == ds.seed);
    CHECK(back.standardized == ds.standardized);
}

TEST_CASE("standardized datasets round trip including negative pixels") {
    TempFile tmp("nb_roundtrip_std.bin");
    const Dataset raw = generate(9, 1.0, 123);
    const Dataset ds = apply_standardizer(fit_standardizer(raw), raw);
    bool has_negative = false;
    for (std::size_t i = 0; i < ds.images.size(); ++i) has_negative |= ds.images[i] < 0.0;
    CHECK(has_negative);

    save_dataset(ds, tmp.path);
    const Dataset back = load_dataset(tmp.path);
    CHECK(back.images == ds.images);
    CHECK(back.standardized);
}

TEST_CASE("loader rejects corrupted containers") {
    TempFile tmp("nb_corrupt.bin");
    const Dataset ds = generate(4, 0.1, 5);
    save_dataset(ds, tmp.path);
    const std::vector<char> good = read_bytes(tmp.path);

    SUBCASE("bad magic") {
        std::vector<char> bytes = good;
        bytes[0] = 'X';
        write_bytes(tmp.path, bytes);
        CHECK_THROWS_AS(load_dataset(tmp.path), ParseError);
    }
    SUBCASE("future version") {
        std::vector<char> bytes = good;
        bytes[8] = 9;  // version field follows the 8-byte magic, little endian
        write_bytes(tmp.path, bytes);
        CHECK_THROWS_AS(load_dataset(tmp.path), VersionError);
    }
    SUBCASE("truncated payload") {
        std::vector<char> bytes(good.begin(), good.begin() + 60);
        write_bytes(tmp.path, bytes);
        CHECK_THROWS_AS(load_dataset(tmp.path), ParseError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_dataset("/nonexistent/nb.bin"), ValidationError);
    }
}

TEST_CASE("csv export writes one label and 1024 lossless pixels per image") {
    TempFile tmp("nb_export.csv");
    const Dataset ds = generate(3, 0.1, 64);
    export_csv(ds, tmp.path);

    std::ifstream is(tmp.path);
    std::string header;
    std::getline(is, header);
    CHECK(header.rfind("label,p0,p1,", 0) == 0);
    CHECK(header.substr(header.size() - 6) == ",p1023");

    int rows = 0;
    std::string line;
    while (std::getline(is, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        REQUIRE(cells.size() == 1025);
        CHECK(parse_double(cells[0]) == ds.labels[static_cast<std::size_t>(rows)]);
        const nn::Tensor img = ds.image(rows);
        for (int p = 0; p < 1024; ++p)
            CHECK(parse_double(cells[static_cast<std::size_t>(p) + 1]) ==
                  img[static_cast<std::size_t>(p)]);
        ++rows;
    }
    CHECK(rows == 3);
}
