#include "steerbo/data_pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "steerbo/container.hpp"
#include "steerbo/errors.hpp"
#include "steerbo/rng.hpp"

namespace steerbo {

namespace {

constexpr size_t kTargetHeight = 66;
constexpr size_t kTargetWidth = 200;

// Reads the next header token of a PNM file, skipping whitespace and
// '#' comment lines.
std::string pnm_token(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF) throw DataError(path + ": truncated PNM header");
    std::string tok;
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    return tok;
}

size_t pnm_number(std::istream& in, const std::string& path, const char* what) {
    std::string tok = pnm_token(in, path);
    size_t pos = 0;
    unsigned long v = 0;
    try {
        v = std::stoul(tok, &pos);
    } catch (const std::exception&) {
        throw DataError(path + ": bad " + what + " '" + tok + "'");
    }
    if (pos != tok.size()) throw DataError(path + ": bad " + what + " '" + tok + "'");
    return static_cast<size_t>(v);
}

// One channel plane of the cropped frame as reals in [0, 255].
std::vector<double> crop_channel(const RawFrame& f, size_t channel, size_t crop_top,
                                 size_t rows) {
    std::vector<double> plane(rows * f.width);
    for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < f.width; ++c)
            plane[r * f.width + c] = static_cast<double>(
                f.pixels[((crop_top + r) * f.width + c) * f.channels + channel]);
    return plane;
}

// Center-aligned bilinear resampling of one plane.
void bilinear_plane(const double* src, size_t hs, size_t ws, double* dst, size_t hd,
                    size_t wd) {
    const double sy = static_cast<double>(hs) / static_cast<double>(hd);
    const double sx = static_cast<double>(ws) / static_cast<double>(wd);
    for (size_t y = 0; y < hd; ++y) {
        double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(hs - 1));
        size_t y0 = static_cast<size_t>(fy);
        size_t y1 = std::min(y0 + 1, hs - 1);
        double wy = fy - static_cast<double>(y0);
        for (size_t x = 0; x < wd; ++x) {
            double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(ws - 1));
            size_t x0 = static_cast<size_t>(fx);
            size_t x1 = std::min(x0 + 1, ws - 1);
            double wx = fx - static_cast<double>(x0);
            double top = src[y0 * ws + x0] * (1.0 - wx) + src[y0 * ws + x1] * wx;
            double bot = src[y1 * ws + x0] * (1.0 - wx) + src[y1 * ws + x1] * wx;
            dst[y * wd + x] = top * (1.0 - wy) + bot * wy;
        }
    }
}

} // namespace

RawFrame read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open image");
    std::string magic = pnm_token(in, path);
    size_t channels;
    if (magic == "P5")
        channels = 1;
    else if (magic == "P6")
        channels = 3;
    else
        throw DataError(path + ": unsupported PNM magic '" + magic +
                        "' (binary P5/P6 only)");
    RawFrame f;
    f.channels = channels;
    f.width = pnm_number(in, path, "width");
    f.height = pnm_number(in, path, "height");
    size_t maxval = pnm_number(in, path, "maxval");
    if (f.width == 0 || f.height == 0) throw DataError(path + ": zero image dimension");
    if (maxval == 0 || maxval > 255)
        throw DataError(path + ": only 8-bit samples supported (maxval " +
                        std::to_string(maxval) + ")");
    // exactly one whitespace byte separates the header from the payload
    f.pixels.resize(f.width * f.height * channels);
    in.read(reinterpret_cast<char*>(f.pixels.data()),
            static_cast<std::streamsize>(f.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(f.pixels.size()))
        throw DataError(path + ": truncated pixel data");
    return f;
}

std::vector<RawFrame> load_frames(const std::string& image_dir,
                                  const std::string& labels_file) {
    std::ifstream in(labels_file);
    if (!in) throw DataError(labels_file + ": cannot open labels file");

    std::vector<RawFrame> frames;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // tolerate blank lines and trailing whitespace
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ls(line);
        std::string filename, angle_text, extra;
        ls >> filename >> angle_text;
        if (angle_text.empty())
            throw DataError(labels_file + " line " + std::to_string(line_no) +
                            ": expected '<filename> <angle>'");
        if (ls >> extra)
            throw DataError(labels_file + " line " + std::to_string(line_no) +
                            ": trailing field '" + extra + "'");
        double angle = 0.0;
        size_t pos = 0;
        try {
            angle = std::stod(angle_text, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != angle_text.size())
            throw DataError(labels_file + " line " + std::to_string(line_no) +
                            ": bad angle '" + angle_text + "'");

        RawFrame f = read_pnm(image_dir + "/" + filename);
        f.index = frames.size();
        f.angle = angle;
        if (!frames.empty() &&
            (f.width != frames[0].width || f.height != frames[0].height ||
             f.channels != frames[0].channels))
            throw DataError(labels_file + " line " + std::to_string(line_no) + ": " +
                            filename + " has different dimensions than the first frame");
        frames.push_back(std::move(f));
    }
    return frames;
}

Tensor preprocess(const RawFrame& frame, size_t crop_top, size_t crop_bottom) {
    if (frame.pixels.size() != frame.width * frame.height * frame.channels)
        throw DataError("frame pixel buffer does not match its dimensions");
    if (crop_top + crop_bottom >= frame.height)
        throw ConfigError("crop of " + std::to_string(crop_top) + "+" +
                          std::to_string(crop_bottom) + " rows exceeds frame height " +
                          std::to_string(frame.height));
    const size_t rows = frame.height - crop_top - crop_bottom;

    Tensor out({frame.channels, kTargetHeight, kTargetWidth});
    std::vector<double> resized(kTargetHeight * kTargetWidth);
    for (size_t ch = 0; ch < frame.channels; ++ch) {
        std::vector<double> plane = crop_channel(frame, ch, crop_top, rows);
        bilinear_plane(plane.data(), rows, frame.width, resized.data(), kTargetHeight,
                       kTargetWidth);
        double* dst = out.ptr() + ch * kTargetHeight * kTargetWidth;
        for (size_t i = 0; i < resized.size(); ++i) dst[i] = resized[i] / 127.5 - 1.0;
    }
    return out;
}

std::vector<Sample> stack_frames(const std::vector<Tensor>& images,
                                 const std::vector<double>& angles) {
    if (images.size() != angles.size())
        throw ConfigError("stack_frames needs one angle per image");
    if (images.size() < 3)
        throw ConfigError("stack_frames needs at least 3 frames, got " +
                          std::to_string(images.size()));
    for (const Tensor& t : images) {
        if (t.rank() != 3)
            throw ConfigError("stack_frames expects (C,H,W) images, got " +
                              shape_str(t.shape));
        if (!t.same_shape(images[0]))
            throw ConfigError("stack_frames images differ in shape");
    }
    const size_t per = images[0].size();
    std::vector<Sample> samples(images.size() - 2);
    for (size_t i = 0; i + 2 < images.size(); ++i) {
        Sample& s = samples[i];
        s.x = Tensor({3, images[0].dim(0), images[0].dim(1), images[0].dim(2)});
        for (size_t t = 0; t < 3; ++t)
            std::copy(images[i + t].ptr(), images[i + t].ptr() + per,
                      s.x.ptr() + t * per);
        s.label = angles[i + 2];
    }
    return samples;
}

DatasetSplit split_dataset(const std::vector<Sample>& samples, double train_frac,
                           double val_frac, double test_frac) {
    if (samples.empty()) throw DataError("split_dataset on an empty sample list");
    if (train_frac < 0 || val_frac < 0 || test_frac < 0 ||
        std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw ConfigError("split fractions must be non-negative and sum to 1");

    const size_t n = samples.size();
    const size_t n_train = static_cast<size_t>(std::floor(train_frac * static_cast<double>(n)));
    const size_t n_val = static_cast<size_t>(std::floor(val_frac * static_cast<double>(n)));

    DatasetSplit split;
    split.train.assign(samples.begin(), samples.begin() + n_train);
    split.validation.assign(samples.begin() + n_train, samples.begin() + n_train + n_val);
    split.test.assign(samples.begin() + n_train + n_val, samples.end());
    return split;
}

std::vector<Sample> synth_dataset(size_t n_frames, size_t height, size_t width,
                                  uint64_t seed) {
    if (n_frames < 3)
        throw ConfigError("synth_dataset needs at least 3 frames, got " +
                          std::to_string(n_frames));
    if (height == 0 || width == 0) throw ConfigError("synth_dataset frame size is zero");

    Rng rng(seed);
    const double phase = rng.uniform(0.0, 6.283185307179586);
    const size_t bar_w = std::max<size_t>(1, width / 8);
    const size_t travel = width - bar_w;

    std::vector<Tensor> images(n_frames);
    std::vector<double> angles(n_frames);
    for (size_t t = 0; t < n_frames; ++t) {
        // smooth sweep of the bar's left edge across the frame
        double u = 0.5 + 0.45 * std::sin(2.0 * 3.141592653589793 *
                                             static_cast<double>(t) / 23.0 +
                                         phase);
        size_t left = static_cast<size_t>(u * static_cast<double>(travel));

        Tensor img({1, height, width});
        for (size_t r = 0; r < height; ++r)
            for (size_t c = 0; c < width; ++c) {
                bool in_bar = c >= left && c < left + bar_w;
                double base = in_bar ? 0.9 : -0.85;
                img.data[r * width + c] = base + 0.05 * rng.uniform(-1.0, 1.0);
            }
        images[t] = std::move(img);
        angles[t] = 30.0 * (2.0 * u - 1.0) + 0.3 * rng.normal();
    }
    return stack_frames(images, angles);
}

void save_dataset(const std::string& path, const std::vector<Sample>& samples) {
    if (samples.empty()) throw ConfigError("refusing to cache an empty dataset");
    const Tensor& first = samples[0].x;
    for (const Sample& s : samples)
        if (!s.x.same_shape(first))
            throw ConfigError("dataset samples differ in shape, cannot cache");

    Container c;
    c.kind = "dataset";
    c.meta = {{"count", samples.size()}, {"sample_shape", first.shape}};

    NamedArray images;
    images.name = "images";
    images.shape = {samples.size()};
    images.shape.insert(images.shape.end(), first.shape.begin(), first.shape.end());
    images.data.reserve(samples.size() * first.size());
    NamedArray labels;
    labels.name = "labels";
    labels.shape = {samples.size()};
    for (const Sample& s : samples) {
        images.data.insert(images.data.end(), s.x.data.begin(), s.x.data.end());
        labels.data.push_back(s.label);
    }
    c.arrays.push_back(std::move(images));
    c.arrays.push_back(std::move(labels));
    save_container(path, c);
}

std::vector<Sample> load_dataset(const std::string& path) {
    Container c = load_container(path);
    if (c.kind != "dataset")
        throw DataError(path + ": container kind '" + c.kind + "' is not a dataset");
    const NamedArray* images = c.find("images");
    const NamedArray* labels = c.find("labels");
    if (!images || !labels) throw DataError(path + ": dataset arrays missing");
    if (images->shape.size() < 2 || images->shape[0] != labels->shape[0] ||
        labels->shape.size() != 1)
        throw DataError(path + ": dataset arrays have inconsistent shapes");

    const size_t n = images->shape[0];
    std::vector<size_t> sample_shape(images->shape.begin() + 1, images->shape.end());
    const size_t per = Tensor::count(sample_shape);
    if (images->data.size() != n * per) throw DataError(path + ": dataset payload truncated");

    std::vector<Sample> samples(n);
    for (size_t i = 0; i < n; ++i) {
        samples[i].x = Tensor(sample_shape);
        std::copy(images->data.begin() + static_cast<std::ptrdiff_t>(i * per),
                  images->data.begin() + static_cast<std::ptrdiff_t>((i + 1) * per),
                  samples[i].x.ptr());
        samples[i].label = labels->data[i];
    }
    return samples;
}

} // namespace steerbo
