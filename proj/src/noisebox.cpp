#include "sor/noisebox.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "sor/csvfmt.hpp"
#include "sor/errors.hpp"

namespace sor::data {

namespace {

constexpr char kMagic[8] = {'N', 'B', 'D', 'A', 'T', 'A', '0', '\n'};
constexpr int kCornerRange = kImageSide - kBoxSide + 1;  // 25

void write_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

void write_f64(std::ostream& os, double v) {
    write_u64(os, std::bit_cast<std::uint64_t>(v));
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw ParseError("dataset file truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw ParseError("dataset file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& is) {
    return std::bit_cast<double>(read_u64(is));
}

}  // namespace

nn::Tensor Dataset::image(int index) const {
    if (index < 0 || index >= size())
        throw ValidationError("image index " + std::to_string(index) +
                              " out of range for dataset of size " + std::to_string(size()));
    nn::Tensor out({kImageSide, kImageSide, 1});
    const double* src = images.data() + static_cast<std::size_t>(index) * kPixelsPerImage;
    std::memcpy(out.data(), src, sizeof(double) * kPixelsPerImage);
    return out;
}

Dataset generate(int n, double noise_ub, std::uint64_t seed) {
    if (n < 1) throw ValidationError("dataset size must be >= 1, got " + std::to_string(n));
    if (!(noise_ub > 0.0) || !std::isfinite(noise_ub))
        throw ValidationError("noise upper bound must be a positive finite value");

    Dataset ds;
    ds.noise_ub = noise_ub;
    ds.seed = seed;
    ds.images = nn::Tensor({n, kImageSide, kImageSide, 1});
    ds.labels.assign(static_cast<std::size_t>(n), 0.0);

    Xoshiro256 rng(seed);
    for (int i = 0; i < n; ++i) {
        double* img = ds.images.data() + static_cast<std::size_t>(i) * kPixelsPerImage;
        for (int p = 0; p < kPixelsPerImage; ++p)
            img[p] = rng.uniform(0.0, noise_ub);
        const bool positive = rng.uniform() < 0.5;
        if (positive) {
            ds.labels[static_cast<std::size_t>(i)] = 1.0;
            const int r0 = static_cast<int>(rng.below(kCornerRange));
            const int c0 = static_cast<int>(rng.below(kCornerRange));
            for (int r = r0; r < r0 + kBoxSide; ++r)
                for (int c = c0; c < c0 + kBoxSide; ++c)
                    img[r * kImageSide + c] = 1.0;
        }
    }
    return ds;
}

Standardizer fit_standardizer(const Dataset& train) {
    if (train.size() < 1) throw ValidationError("cannot fit standardizer on an empty dataset");
    const std::size_t count = train.images.size();
    if (count < 2) throw ValidationError("standardizer needs at least two pixel values");

    const double* px = train.images.data();
    double sum = 0.0;
    for (std::size_t i = 0; i < count; ++i) sum += px[i];
    const double mean = sum / static_cast<double>(count);

    double sq = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double d = px[i] - mean;
        sq += d * d;
    }
    const double var = sq / static_cast<double>(count - 1);
    const double stddev = std::sqrt(var);
    if (!(stddev > 0.0))
        throw ValidationError("pixel values are constant; standard deviation is zero");
    return Standardizer{mean, stddev};
}

Dataset apply_standardizer(const Standardizer& s, const Dataset& ds) {
    if (!(s.stddev > 0.0)) throw ValidationError("standardizer stddev must be positive");
    Dataset out = ds;
    double* px = out.images.data();
    const std::size_t count = out.images.size();
    for (std::size_t i = 0; i < count; ++i) px[i] = (px[i] - s.mean) / s.stddev;
    out.standardized = true;
    return out;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot open for writing: " + path.string());

    os.write(kMagic, sizeof(kMagic));
    write_u32(os, kDatasetFormatVersion);
    const std::string rng_name = Xoshiro256::kAlgorithmName;
    write_u32(os, static_cast<std::uint32_t>(rng_name.size()));
    os.write(rng_name.data(), static_cast<std::streamsize>(rng_name.size()));
    write_u64(os, ds.seed);
    write_u32(os, static_cast<std::uint32_t>(ds.size()));
    write_f64(os, ds.noise_ub);
    write_u32(os, ds.standardized ? 1u : 0u);

    for (double label : ds.labels) os.put(label == 1.0 ? '\1' : '\0');
    const double* px = ds.images.data();
    for (std::size_t i = 0; i < ds.images.size(); ++i) write_f64(os, px[i]);
    if (!os) throw ValidationError("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open dataset file: " + path.string());

    char magic[sizeof(kMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ParseError("not a dataset file: " + path.string());

    const std::uint32_t version = read_u32(is);
    if (version != kDatasetFormatVersion)
        throw VersionError("unsupported dataset format version " + std::to_string(version));

    const std::uint32_t rng_len = read_u32(is);
    if (rng_len > 64) throw ParseError("implausible RNG name length");
    std::string rng_name(rng_len, '\0');
    is.read(rng_name.data(), rng_len);
    if (!is) throw ParseError("dataset file truncated");
    if (rng_name != Xoshiro256::kAlgorithmName)
        throw ValidationError("dataset was generated with unknown RNG '" + rng_name + "'");

    Dataset ds;
    ds.seed = read_u64(is);
    const std::uint32_t n = read_u32(is);
    if (n < 1 || n > (1u << 24)) throw ParseError("implausible dataset size");
    ds.noise_ub = read_f64(is);
    ds.standardized = read_u32(is) != 0;

    ds.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const int ch = is.get();
        if (ch == std::char_traits<char>::eof()) throw ParseError("dataset file truncated");
        if (ch != 0 && ch != 1) throw ParseError("label byte must be 0 or 1");
        ds.labels[i] = static_cast<double>(ch);
    }
    ds.images = nn::Tensor({static_cast<int>(n), kImageSide, kImageSide, 1});
    double* px = ds.images.data();
    for (std::size_t i = 0; i < ds.images.size(); ++i) px[i] = read_f64(is);
    return ds;
}

void export_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open for writing: " + path.string());

    os << "label";
    for (int p = 0; p < kPixelsPerImage; ++p) os << ",p" << p;
    os << "\n";
    for (int i = 0; i < ds.size(); ++i) {
        os << fmt_double(ds.labels[static_cast<std::size_t>(i)]);
        const double* img = ds.images.data() + static_cast<std::size_t>(i) * kPixelsPerImage;
        for (int p = 0; p < kPixelsPerImage; ++p) os << ',' << fmt_double(img[p]);
        os << "\n";
    }
    if (!os) throw ValidationError("write failed: " + path.string());
}

}  // namespace sor::data
