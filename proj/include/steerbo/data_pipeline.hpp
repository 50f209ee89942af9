#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "steerbo/tensor.hpp"

namespace steerbo {

// One camera frame as stored on disk, together with its steering angle.
struct RawFrame {
    size_t width = 0, height = 0;
    size_t channels = 1; // 1 (PGM) or 3 (PPM)
    std::vector<uint8_t> pixels; // row-major, channels interleaved
    size_t index = 0;    // position in the labels file
    double angle = 0.0;  // steering angle in degrees
};

// One training sample: three consecutive preprocessed frames stacked on a
// leading time axis, labeled with the angle of the last frame.
struct Sample {
    Tensor x;           // (3, channels, height, width), values in [-1, 1]
    double label = 0.0; // angle of the temporally last frame
};

struct DatasetSplit {
    std::vector<Sample> train, validation, test;
};

// Reads `<filename> <angle>` records from labels_file and loads each image
// from image_dir. Frames come back in labels-file order; every frame must
// share the dimensions of the first. Parse errors name the offending line.
std::vector<RawFrame> load_frames(const std::string& image_dir,
                                  const std::string& labels_file);

// Binary PPM (P6) / PGM (P5) decoder, 8-bit samples only.
RawFrame read_pnm(const std::string& path);

// Crops crop_top rows from the top and crop_bottom from the bottom, resizes
// the remainder to 66x200 with bilinear interpolation, and scales pixel
// values to [-1, 1]. Output is (channels, 66, 200).
Tensor preprocess(const RawFrame& frame, size_t crop_top = 80,
                  size_t crop_bottom = 26);

// Sliding window of width 3 and stride 1 over preprocessed images; sample i
// stacks images (i, i+1, i+2) and takes angles[i+2] as its label. Yields
// n-2 samples for n >= 3 inputs.
std::vector<Sample> stack_frames(const std::vector<Tensor>& images,
                                 const std::vector<double>& angles);

// Contiguous chronological split: the first floor(train_frac*n) samples
// train, the next floor(val_frac*n) validate, the remainder tests. The
// three fractions (the third being implied) must sum to 1.
DatasetSplit split_dataset(const std::vector<Sample>& samples,
                           double train_frac = 0.64, double val_frac = 0.16,
                           double test_frac = 0.20);

// Synthetic desk-scale dataset: a bright vertical bar sweeps smoothly over
// a noisy dark background and the steering angle follows the bar position
// (plus seeded noise), so a small network can learn the mapping. Generates
// n_frames frames of the given size and stacks them into n_frames-2
// samples. Deterministic in the seed.
std::vector<Sample> synth_dataset(size_t n_frames, size_t height, size_t width,
                                  uint64_t seed);

// Dataset caching in the flat binary container format.
void save_dataset(const std::string& path, const std::vector<Sample>& samples);
std::vector<Sample> load_dataset(const std::string& path);

} // namespace steerbo
