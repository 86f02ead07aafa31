#pragma once

// Loader for the MNIST handwritten-digit files in IDX format.  Pixels are
// binarized as x = z >> 7 (grey values 128..255 become 1) and flattened
// row-major, so each image is one 784-unit configuration.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rbmlab/common.hpp"
#include "rbmlab/sampleset.hpp"

namespace rbmlab::targets {

enum class MnistSplit { train, test };

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, const std::string& what) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (!in)
        throw std::runtime_error("mnist: truncated file while reading " + what);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
           (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

inline std::filesystem::path find_mnist_file(
    const std::filesystem::path& dir, const std::vector<std::string>& names) {
    for (const std::string& n : names) {
        std::filesystem::path p = dir / n;
        if (std::filesystem::exists(p)) return p;
    }
    std::string tried;
    for (const std::string& n : names) tried += " " + n;
    throw config_error("mnist: no data file found under " + dir.string() +
                       " (tried:" + tried + ")");
}

}  // namespace detail

// Parses an IDX image file (magic 0x00000803) and binarizes the pixels.
inline WideSampleSet mnist_load_images(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw config_error("mnist: cannot open " + file.string());
    std::uint32_t magic = detail::read_u32_be(in, "magic");
    if (magic != 0x00000803u)
        throw std::runtime_error("mnist: bad magic in " + file.string() +
                                 " (expected image file 0x00000803, got " +
                                 std::to_string(magic) + ")");
    std::uint32_t count = detail::read_u32_be(in, "image count");
    std::uint32_t rows = detail::read_u32_be(in, "row count");
    std::uint32_t cols = detail::read_u32_be(in, "column count");
    std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    WideSampleSet out = WideSampleSet::create(static_cast<int>(pixels), count);
    std::vector<unsigned char> buf(pixels);
    for (std::uint32_t k = 0; k < count; ++k) {
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(pixels));
        if (!in)
            throw std::runtime_error("mnist: truncated file " + file.string() +
                                     " at image " + std::to_string(k) + " of " +
                                     std::to_string(count));
        for (std::size_t i = 0; i < pixels; ++i)
            if (buf[i] >> 7) out.set(k, static_cast<int>(i), true);
    }
    return out;
}

// Parses an IDX label file (magic 0x00000801).
inline std::vector<std::uint8_t> mnist_load_labels(
    const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw config_error("mnist: cannot open " + file.string());
    std::uint32_t magic = detail::read_u32_be(in, "magic");
    if (magic != 0x00000801u)
        throw std::runtime_error("mnist: bad magic in " + file.string() +
                                 " (expected label file 0x00000801, got " +
                                 std::to_string(magic) + ")");
    std::uint32_t count = detail::read_u32_be(in, "label count");
    std::vector<std::uint8_t> labels(count);
    in.read(reinterpret_cast<char*>(labels.data()), count);
    if (!in)
        throw std::runtime_error("mnist: truncated label file " +
                                 file.string());
    return labels;
}

// Loads one split from a directory holding the standard IDX files (both the
// dash and dot spellings of the file names are accepted).
inline WideSampleSet mnist_load(const std::filesystem::path& dir,
                                MnistSplit split) {
    const std::vector<std::string> names =
        split == MnistSplit::train
            ? std::vector<std::string>{"train-images-idx3-ubyte",
                                       "train-images.idx3-ubyte"}
            : std::vector<std::string>{"t10k-images-idx3-ubyte",
                                       "t10k-images.idx3-ubyte"};
    return mnist_load_images(detail::find_mnist_file(dir, names));
}

// Loads images and labels together, enforcing equal record counts.
inline std::pair<WideSampleSet, std::vector<std::uint8_t>>
mnist_load_with_labels(const std::filesystem::path& dir, MnistSplit split) {
    const bool train = split == MnistSplit::train;
    WideSampleSet images = mnist_load(dir, split);
    std::vector<std::string> names =
        train ? std::vector<std::string>{"train-labels-idx1-ubyte",
                                         "train-labels.idx1-ubyte"}
              : std::vector<std::string>{"t10k-labels-idx1-ubyte",
                                         "t10k-labels.idx1-ubyte"};
    std::vector<std::uint8_t> labels =
        mnist_load_labels(detail::find_mnist_file(dir, names));
    if (labels.size() != images.count)
        throw std::runtime_error(
            "mnist: count mismatch between images (" +
            std::to_string(images.count) + ") and labels (" +
            std::to_string(labels.size()) + ")");
    return {std::move(images), std::move(labels)};
}

}  // namespace rbmlab::targets
