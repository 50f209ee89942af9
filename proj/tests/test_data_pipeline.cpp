#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "steerbo/data_pipeline.hpp"
#include "steerbo/errors.hpp"
#include "steerbo/tensor.hpp"

using namespace steerbo;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test run, cleaned up on destruction.
struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("steerbo_dp_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static inline int counter = 0;
};

RawFrame gray_frame(size_t width, size_t height) {
    RawFrame f;
    f.width = width;
    f.height = height;
    f.channels = 1;
    f.pixels.assign(width * height, 0);
    return f;
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Minimal binary PGM writer for fixtures.
void write_pgm(const std::string& path, size_t width, size_t height,
               const std::vector<uint8_t>& pixels, const std::string& header_extra = "") {
    std::string bytes = "P5\n" + header_extra + std::to_string(width) + " " +
                        std::to_string(height) + "\n255\n";
    bytes.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
    write_bytes(path, bytes);
}

void write_ppm(const std::string& path, size_t width, size_t height,
               const std::vector<uint8_t>& pixels) {
    std::string bytes =
        "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    bytes.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
    write_bytes(path, bytes);
}

double scaled(double pixel) { return pixel / 127.5 - 1.0; }

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const size_t n = a.size();
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0, saa = 0, sbb = 0;
    for (size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

} // namespace

TEST_CASE("preprocess: 2x downscale of a row gradient hits the bilinear closed form") {
    // 132x400 frame whose value equals its row index downsamples exactly
    // 2x in both axes; center-aligned bilinear then lands halfway between
    // source rows 2y and 2y+1, i.e. value 2y + 0.5.
    RawFrame f = gray_frame(400, 132);
    for (size_t r = 0; r < f.height; ++r)
        for (size_t c = 0; c < f.width; ++c)
            f.pixels[r * f.width + c] = static_cast<uint8_t>(r);

    Tensor out = preprocess(f, 0, 0);
    REQUIRE((out.shape == std::vector<size_t>{1, 66, 200}));
    for (size_t y = 0; y < 66; ++y)
        for (size_t x = 0; x < 200; ++x) {
            double want = scaled(2.0 * static_cast<double>(y) + 0.5);
            CHECK(std::abs(out.data[y * 200 + x] - want) < 1e-12);
        }
}

TEST_CASE("preprocess: 2x downscale of a column staircase averages pairwise") {
    // Value floor(c/2) is constant on each source column pair, so the 2x
    // bilinear sample between columns 2x and 2x+1 returns exactly x.
    RawFrame f = gray_frame(400, 132);
    for (size_t r = 0; r < f.height; ++r)
        for (size_t c = 0; c < f.width; ++c)
            f.pixels[r * f.width + c] = static_cast<uint8_t>(c / 2);

    Tensor out = preprocess(f, 0, 0);
    for (size_t y = 0; y < 66; ++y)
        for (size_t x = 0; x < 200; ++x) {
            double want = scaled(static_cast<double>(x));
            CHECK(std::abs(out.data[y * 200 + x] - want) < 1e-12);
        }
}

TEST_CASE("preprocess: source-sized constant frame stays constant at 66x200") {
    RawFrame f = gray_frame(455, 256);
    std::fill(f.pixels.begin(), f.pixels.end(), uint8_t{37});

    Tensor out = preprocess(f); // default crop 80 + 26 leaves 150 rows
    REQUIRE((out.shape == std::vector<size_t>{1, 66, 200}));
    const double want = scaled(37.0);
    for (double v : out.data) CHECK(std::abs(v - want) < 1e-12);
}

TEST_CASE("preprocess: crop selects the requested band") {
    // Rows 0..9 hold 10, rows 10..19 hold 200; cropping the first band away
    // leaves a constant-200 image.
    RawFrame f = gray_frame(30, 20);
    for (size_t r = 0; r < f.height; ++r)
        for (size_t c = 0; c < f.width; ++c)
            f.pixels[r * f.width + c] = r < 10 ? 10 : 200;

    Tensor out = preprocess(f, 10, 0);
    for (double v : out.data) CHECK(std::abs(v - scaled(200.0)) < 1e-12);
}

TEST_CASE("preprocess: three-channel frames keep their channels separate") {
    RawFrame f;
    f.width = 40;
    f.height = 30;
    f.channels = 3;
    f.pixels.resize(40 * 30 * 3);
    const uint8_t values[3] = {15, 120, 240};
    for (size_t i = 0; i < 40 * 30; ++i)
        for (size_t ch = 0; ch < 3; ++ch) f.pixels[i * 3 + ch] = values[ch];

    Tensor out = preprocess(f, 2, 3);
    REQUIRE((out.shape == std::vector<size_t>{3, 66, 200}));
    for (size_t ch = 0; ch < 3; ++ch) {
        const double want = scaled(static_cast<double>(values[ch]));
        for (size_t i = 0; i < 66 * 200; ++i)
            CHECK(std::abs(out.data[ch * 66 * 200 + i] - want) < 1e-12);
    }
}

TEST_CASE("preprocess: output range stays within [-1, 1]") {
    RawFrame f = gray_frame(10, 10);
    std::fill(f.pixels.begin(), f.pixels.end(), uint8_t{255});
    Tensor hi = preprocess(f, 0, 0);
    for (double v : hi.data) CHECK(std::abs(v - 1.0) < 1e-12);

    std::fill(f.pixels.begin(), f.pixels.end(), uint8_t{0});
    Tensor lo = preprocess(f, 0, 0);
    for (double v : lo.data) CHECK(std::abs(v + 1.0) < 1e-12);
}

TEST_CASE("preprocess: rejections") {
    RawFrame f = gray_frame(30, 20);
    CHECK_THROWS_AS(preprocess(f, 10, 10), ConfigError); // nothing left
    CHECK_THROWS_AS(preprocess(f, 25, 0), ConfigError);
    f.pixels.pop_back();
    CHECK_THROWS_AS(preprocess(f, 0, 0), DataError);
}

TEST_CASE("read_pnm: PGM round trip with header comments") {
    TempDir dir;
    std::vector<uint8_t> pixels(6 * 4);
    for (size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<uint8_t>(7 * i);
    write_pgm(dir.file("a.pgm"), 6, 4, pixels, "# fixture comment\n");

    RawFrame f = read_pnm(dir.file("a.pgm"));
    CHECK(f.width == 6);
    CHECK(f.height == 4);
    CHECK(f.channels == 1);
    CHECK(f.pixels == pixels);
}

TEST_CASE("read_pnm: PPM carries three interleaved channels") {
    TempDir dir;
    std::vector<uint8_t> pixels(5 * 3 * 3);
    for (size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<uint8_t>(i + 1);
    write_ppm(dir.file("b.ppm"), 5, 3, pixels);

    RawFrame f = read_pnm(dir.file("b.ppm"));
    CHECK(f.width == 5);
    CHECK(f.height == 3);
    CHECK(f.channels == 3);
    CHECK(f.pixels == pixels);
}

TEST_CASE("read_pnm: rejects what it cannot decode") {
    TempDir dir;
    CHECK_THROWS_AS(read_pnm(dir.file("missing.pgm")), DataError);

    write_bytes(dir.file("ascii.pgm"), "P2\n2 2\n255\n0 1 2 3\n");
    CHECK_THROWS_WITH_AS(read_pnm(dir.file("ascii.pgm")), doctest::Contains("P2"),
                         DataError);

    write_bytes(dir.file("deep.pgm"), "P5\n2 2\n65535\n" + std::string(8, '\0'));
    CHECK_THROWS_WITH_AS(read_pnm(dir.file("deep.pgm")), doctest::Contains("65535"),
                         DataError);

    write_bytes(dir.file("short.pgm"), "P5\n4 4\n255\nabc");
    CHECK_THROWS_WITH_AS(read_pnm(dir.file("short.pgm")), doctest::Contains("truncated"),
                         DataError);

    write_bytes(dir.file("badw.pgm"), "P5\nx 4\n255\n");
    CHECK_THROWS_AS(read_pnm(dir.file("badw.pgm")), DataError);
}

TEST_CASE("load_frames: labels-file order, parsed angles, shared dimensions") {
    TempDir dir;
    const double angles[4] = {-3.25, 0.0, 12.5, -0.125};
    for (size_t i = 0; i < 4; ++i) {
        std::vector<uint8_t> pixels(8 * 6, static_cast<uint8_t>(10 * i));
        write_pgm(dir.file("f" + std::to_string(i) + ".pgm"), 8, 6, pixels);
    }
    // out-of-name order on purpose: file order must follow the labels file
    write_bytes(dir.file("labels.txt"),
                "f2.pgm 12.5\n"
                "\n"
                "f0.pgm -3.25\n"
                "f3.pgm -0.125\n"
                "f1.pgm 0\n");

    std::vector<RawFrame> frames = load_frames(dir.path.string(), dir.file("labels.txt"));
    REQUIRE(frames.size() == 4);
    CHECK(frames[0].angle == angles[2]);
    CHECK(frames[1].angle == angles[0]);
    CHECK(frames[2].angle == angles[3]);
    CHECK(frames[3].angle == angles[1]);
    for (size_t i = 0; i < 4; ++i) {
        CHECK(frames[i].index == i);
        CHECK(frames[i].width == 8);
        CHECK(frames[i].height == 6);
    }
    CHECK(frames[0].pixels[0] == 20); // f2 really was loaded first
}

TEST_CASE("load_frames: malformed records name their line") {
    TempDir dir;
    write_pgm(dir.file("ok.pgm"), 4, 4, std::vector<uint8_t>(16, 1));

    write_bytes(dir.file("bad_angle.txt"), "ok.pgm 1.0\nok.pgm 2.0\nok.pgm fast\n");
    CHECK_THROWS_WITH_AS(load_frames(dir.path.string(), dir.file("bad_angle.txt")),
                         doctest::Contains("line 3"), DataError);

    write_bytes(dir.file("extra.txt"), "ok.pgm 1.0 stray\n");
    CHECK_THROWS_WITH_AS(load_frames(dir.path.string(), dir.file("extra.txt")),
                         doctest::Contains("line 1"), DataError);

    write_bytes(dir.file("no_angle.txt"), "ok.pgm\n");
    CHECK_THROWS_AS(load_frames(dir.path.string(), dir.file("no_angle.txt")), DataError);

    write_bytes(dir.file("missing.txt"), "nope.pgm 1.0\n");
    CHECK_THROWS_AS(load_frames(dir.path.string(), dir.file("missing.txt")), DataError);

    CHECK_THROWS_AS(load_frames(dir.path.string(), dir.file("absent_labels.txt")),
                    DataError);
}

TEST_CASE("load_frames: dimension drift across frames is an error") {
    TempDir dir;
    write_pgm(dir.file("a.pgm"), 4, 4, std::vector<uint8_t>(16, 1));
    write_pgm(dir.file("b.pgm"), 5, 4, std::vector<uint8_t>(20, 1));
    write_bytes(dir.file("labels.txt"), "a.pgm 1.0\nb.pgm 2.0\n");
    CHECK_THROWS_WITH_AS(load_frames(dir.path.string(), dir.file("labels.txt")),
                         doctest::Contains("line 2"), DataError);
}

namespace {

// Tiny distinct (1,2,2) image whose every value is `tag`.
Tensor tagged_image(double tag) {
    Tensor t({1, 2, 2});
    std::fill(t.data.begin(), t.data.end(), tag);
    return t;
}

} // namespace

TEST_CASE("stack_frames: 5 frames give 3 samples labeled by the last frame") {
    std::vector<Tensor> images;
    std::vector<double> angles;
    for (size_t i = 0; i < 5; ++i) {
        images.push_back(tagged_image(static_cast<double>(i)));
        angles.push_back(100.0 + static_cast<double>(i));
    }

    std::vector<Sample> samples = stack_frames(images, angles);
    REQUIRE(samples.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        REQUIRE((samples[i].x.shape == std::vector<size_t>{3, 1, 2, 2}));
        CHECK(samples[i].label == angles[i + 2]);
        for (size_t t = 0; t < 3; ++t)
            for (size_t k = 0; k < 4; ++k)
                CHECK(samples[i].x.data[t * 4 + k] == static_cast<double>(i + t));
    }
    // labels are a suffix of the angle sequence
    CHECK(samples[0].label == 102.0);
    CHECK(samples[2].label == 104.0);
}

TEST_CASE("stack_frames: window edge cases and rejections") {
    std::vector<Tensor> three = {tagged_image(1), tagged_image(2), tagged_image(3)};
    std::vector<double> angles3 = {7, 8, 9};
    std::vector<Sample> one = stack_frames(three, angles3);
    REQUIRE(one.size() == 1);
    CHECK(one[0].label == 9.0);

    std::vector<Tensor> two = {tagged_image(1), tagged_image(2)};
    CHECK_THROWS_AS(stack_frames(two, {1.0, 2.0}), ConfigError);
    CHECK_THROWS_AS(stack_frames(three, {1.0, 2.0}), ConfigError); // count mismatch

    std::vector<Tensor> mixed = three;
    mixed[1] = Tensor({1, 3, 2});
    CHECK_THROWS_AS(stack_frames(mixed, angles3), ConfigError);

    std::vector<Tensor> flat = three;
    flat[0] = Tensor({4});
    CHECK_THROWS_AS(stack_frames(flat, angles3), ConfigError);
}

namespace {

std::vector<Sample> numbered_samples(size_t n) {
    std::vector<Sample> samples(n);
    for (size_t i = 0; i < n; ++i) {
        samples[i].x = Tensor({3, 1, 1, 1});
        samples[i].label = static_cast<double>(i);
    }
    return samples;
}

} // namespace

TEST_CASE("split_dataset: paper-scale and round-number sizes") {
    {
        DatasetSplit s = split_dataset(numbered_samples(39000));
        CHECK(s.train.size() == 24960);
        CHECK(s.validation.size() == 6240);
        CHECK(s.test.size() == 7800);
    }
    {
        DatasetSplit s = split_dataset(numbered_samples(100));
        CHECK(s.train.size() == 64);
        CHECK(s.validation.size() == 16);
        CHECK(s.test.size() == 20);
    }
}

TEST_CASE("split_dataset: contiguous, order preserving, lossless") {
    const size_t n = 103; // deliberately not a multiple of 25
    DatasetSplit s = split_dataset(numbered_samples(n));
    CHECK(s.train.size() == 65);     // floor(0.64 * 103)
    CHECK(s.validation.size() == 16); // floor(0.16 * 103)
    CHECK(s.test.size() == n - 65 - 16);

    std::vector<double> rejoined;
    for (const Sample& x : s.train) rejoined.push_back(x.label);
    for (const Sample& x : s.validation) rejoined.push_back(x.label);
    for (const Sample& x : s.test) rejoined.push_back(x.label);
    REQUIRE(rejoined.size() == n);
    for (size_t i = 0; i < n; ++i) CHECK(rejoined[i] == static_cast<double>(i));
}

TEST_CASE("split_dataset: fraction and emptiness validation") {
    std::vector<Sample> samples = numbered_samples(10);
    CHECK_THROWS_AS(split_dataset(samples, 0.5, 0.3, 0.3), ConfigError);
    CHECK_THROWS_AS(split_dataset(samples, -0.1, 0.6, 0.5), ConfigError);
    CHECK_THROWS_AS(split_dataset({}), DataError);

    // alternative fractions are allowed as long as they sum to 1
    DatasetSplit s = split_dataset(samples, 0.5, 0.2, 0.3);
    CHECK(s.train.size() == 5);
    CHECK(s.validation.size() == 2);
    CHECK(s.test.size() == 3);
}

TEST_CASE("synth_dataset: deterministic, well shaped, angle tracks the bar") {
    const size_t n_frames = 60, height = 8, width = 32;
    std::vector<Sample> a = synth_dataset(n_frames, height, width, 42);
    std::vector<Sample> b = synth_dataset(n_frames, height, width, 42);

    REQUIRE(a.size() == n_frames - 2);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE((a[i].x.shape == std::vector<size_t>{3, 1, height, width}));
        CHECK(a[i].x.data == b[i].x.data);
        CHECK(a[i].label == b[i].label);
        for (double v : a[i].x.data) CHECK(std::abs(v) <= 1.0);
    }

    // Different seed, different sweep.
    std::vector<Sample> c = synth_dataset(n_frames, height, width, 43);
    bool any_differs = false;
    for (size_t i = 0; i < a.size() && !any_differs; ++i)
        any_differs = a[i].label != c[i].label;
    CHECK(any_differs);

    // Locate the bright bar in each sample's last frame by intensity
    // centroid and correlate with the label; the generator draws the angle
    // from the bar position, so this must be strong.
    std::vector<double> positions, labels;
    for (const Sample& s : a) {
        const double* last = s.x.ptr() + 2 * height * width;
        double mass = 0.0, centroid = 0.0;
        for (size_t col = 0; col < width; ++col) {
            double colsum = 0.0;
            for (size_t row = 0; row < height; ++row)
                colsum += last[row * width + col] + 1.0; // shift to >= 0
            mass += colsum;
            centroid += colsum * static_cast<double>(col);
        }
        positions.push_back(centroid / mass);
        labels.push_back(s.label);
    }
    CHECK(std::abs(pearson(positions, labels)) > 0.9);
}

TEST_CASE("synth_dataset: rejections") {
    CHECK_THROWS_AS(synth_dataset(2, 8, 8, 1), ConfigError);
    CHECK_THROWS_AS(synth_dataset(10, 0, 8, 1), ConfigError);
    CHECK_THROWS_AS(synth_dataset(10, 8, 0, 1), ConfigError);
}

TEST_CASE("dataset cache: round trip preserves every bit") {
    TempDir dir;
    std::vector<Sample> samples = synth_dataset(12, 6, 10, 7);
    const std::string path = dir.file("cache.bin");
    save_dataset(path, samples);

    std::vector<Sample> loaded = load_dataset(path);
    REQUIRE(loaded.size() == samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        CHECK((loaded[i].x.shape == samples[i].x.shape));
        CHECK(loaded[i].x.data == samples[i].x.data);
        CHECK(loaded[i].label == samples[i].label);
    }
}

TEST_CASE("dataset cache: rejections") {
    TempDir dir;
    CHECK_THROWS_AS(save_dataset(dir.file("empty.bin"), {}), ConfigError);
    CHECK_THROWS_AS(load_dataset(dir.file("missing.bin")), DataError);

    std::vector<Sample> mixed = synth_dataset(5, 4, 8, 1);
    mixed[1].x = Tensor({3, 1, 4, 9});
    CHECK_THROWS_AS(save_dataset(dir.file("mixed.bin"), mixed), ConfigError);
}
