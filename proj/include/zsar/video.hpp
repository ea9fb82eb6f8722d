#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace zsar {

/// Square RGB8 image, row-major, ready for the image encoder.
struct Frame {
    int size = 0;
    std::vector<std::uint8_t> rgb;  ///< size * size * 3

    /// "frame:" + 16 hex digits of fnv1a64(rgb); the file backend's key.
    std::string key() const;
};

/// Resizes the shorter side to `size` (bicubic; skipped when already equal)
/// and center-crops to size x size.
Frame preprocess_rgb(std::span<const std::uint8_t> rgb, int width, int height, int size = 224);

/// Loads one image file through the same preprocessing.
Frame load_image(const std::filesystem::path& path, int size = 224);

enum class SamplingAnchor {
    Start,   ///< floor(i * T / N)
    Center,  ///< floor((i + 0.5) * T / N)
};

std::string_view to_string(SamplingAnchor anchor);
SamplingAnchor parse_sampling_anchor(std::string_view name);

/// N frame indices spread uniformly over T frames. Repeats indices when
/// T < N. Throws DomainError for T == 0 or N == 0.
std::vector<std::size_t> uniform_indices(std::size_t total_frames, std::size_t count,
                                         SamplingAnchor anchor = SamplingAnchor::Start);

struct VideoSample {
    std::string path;
    std::size_t total_frames = 0;
    std::vector<std::size_t> sampled_indices;
    std::vector<Frame> frames;
};

/// Decodes `path` and returns its N uniformly sampled, preprocessed frames.
/// `path` is either a container video or a directory of numbered image
/// files (lexicographic order is temporal order). Throws DecodeError for
/// unreadable input and EmptyVideoError when there are no frames.
VideoSample load_sample(const std::filesystem::path& path, std::size_t count,
                        SamplingAnchor anchor = SamplingAnchor::Start, int size = 224);

/// Sorted image files of a frame directory.
std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir);

}  // namespace zsar
