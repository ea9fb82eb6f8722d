#include "zsar/video.hpp"

#include "zsar/embedding.hpp"
#include "zsar/errors.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>

namespace zsar {

namespace {

Frame frame_from_bgr(const cv::Mat& bgr, int size) {
    cv::Mat rgb;
    if (bgr.channels() == 1) {
        cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
    } else if (bgr.channels() == 4) {
        cv::cvtColor(bgr, rgb, cv::COLOR_BGRA2RGB);
    } else {
        cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    }
    if (rgb.depth() != CV_8U) rgb.convertTo(rgb, CV_8UC3);
    if (!rgb.isContinuous()) rgb = rgb.clone();
    return preprocess_rgb(std::span(rgb.data, rgb.total() * 3), rgb.cols, rgb.rows, size);
}

bool is_image_file(const std::filesystem::path& p) {
    static const std::set<std::string> exts{".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".pgm", ".webp", ".tif", ".tiff"};
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return exts.count(e) > 0;
}

VideoSample sample_directory(const std::filesystem::path& dir, std::size_t count, SamplingAnchor anchor,
                             int size) {
    const auto files = list_frame_files(dir);
    if (files.empty()) throw EmptyVideoError(dir.string() + ": frame directory has no image files");
    VideoSample out;
    out.path = dir.string();
    out.total_frames = files.size();
    out.sampled_indices = uniform_indices(files.size(), count, anchor);
    out.frames.reserve(count);
    for (std::size_t idx : out.sampled_indices) {
        if (!out.frames.empty() && idx == out.sampled_indices[out.frames.size() - 1]) {
            out.frames.push_back(out.frames.back());
            continue;
        }
        out.frames.push_back(load_image(files[idx], size));
    }
    return out;
}

VideoSample sample_container(const std::filesystem::path& file, std::size_t count, SamplingAnchor anchor,
                             int size) {
    std::size_t total = 0;
    {
        cv::VideoCapture cap(file.string());
        if (!cap.isOpened()) throw DecodeError(file.string() + ": cannot open or decode video");
        while (cap.grab()) ++total;
    }
    if (total == 0) throw EmptyVideoError(file.string() + ": video has no decodable frames");

    VideoSample out;
    out.path = file.string();
    out.total_frames = total;
    out.sampled_indices = uniform_indices(total, count, anchor);
    out.frames.reserve(count);

    cv::VideoCapture cap(file.string());
    if (!cap.isOpened()) throw DecodeError(file.string() + ": cannot reopen video");
    std::size_t position = 0;  // index of the next frame grab() will return
    cv::Mat bgr;
    for (std::size_t idx : out.sampled_indices) {
        if (!out.frames.empty() && position == idx + 1) {
            out.frames.push_back(out.frames.back());
            continue;
        }
        while (position <= idx) {
            if (!cap.grab()) {
                throw DecodeError(file.string() + ": decoding stopped at frame " + std::to_string(position) +
                                  " of " + std::to_string(total));
            }
            ++position;
        }
        if (!cap.retrieve(bgr) || bgr.empty()) {
            throw DecodeError(file.string() + ": cannot retrieve frame " + std::to_string(idx));
        }
        out.frames.push_back(frame_from_bgr(bgr, size));
    }
    return out;
}

}  // namespace

std::string Frame::key() const {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(rgb)));
    return std::string("frame:") + buf;
}

Frame preprocess_rgb(std::span<const std::uint8_t> rgb, int width, int height, int size) {
    if (width <= 0 || height <= 0 || size <= 0) throw ShapeError("image dimensions must be positive");
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
        throw ShapeError("RGB buffer size does not match " + std::to_string(width) + "x" + std::to_string(height));
    }
    cv::Mat src(height, width, CV_8UC3, const_cast<std::uint8_t*>(rgb.data()));
    cv::Mat resized;
    if (std::min(width, height) == size) {
        resized = src;
    } else {
        const bool wide = width >= height;
        const int short_side = wide ? height : width;
        const int long_side = wide ? width : height;
        const int scaled_long = static_cast<int>(static_cast<long long>(size) * long_side / short_side);
        const cv::Size target = wide ? cv::Size(scaled_long, size) : cv::Size(size, scaled_long);
        cv::resize(src, resized, target, 0, 0, cv::INTER_CUBIC);
    }
    const int x0 = static_cast<int>(std::lround((resized.cols - size) / 2.0));
    const int y0 = static_cast<int>(std::lround((resized.rows - size) / 2.0));
    cv::Mat crop = resized(cv::Rect(x0, y0, size, size)).clone();

    Frame f;
    f.size = size;
    f.rgb.assign(crop.data, crop.data + crop.total() * 3);
    return f;
}

Frame load_image(const std::filesystem::path& path, int size) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw DecodeError(path.string() + ": cannot decode image");
    return frame_from_bgr(bgr, size);
}

std::string_view to_string(SamplingAnchor anchor) {
    return anchor == SamplingAnchor::Start ? "start" : "center";
}

SamplingAnchor parse_sampling_anchor(std::string_view name) {
    if (name == "start") return SamplingAnchor::Start;
    if (name == "center") return SamplingAnchor::Center;
    throw ConfigError("unknown sampling anchor '" + std::string(name) + "' (expected start|center)");
}

std::vector<std::size_t> uniform_indices(std::size_t total_frames, std::size_t count, SamplingAnchor anchor) {
    if (total_frames == 0) throw DomainError("uniform_indices: video has zero frames");
    if (count == 0) throw DomainError("uniform_indices: frame count N must be >= 1");
    std::vector<std::size_t> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = anchor == SamplingAnchor::Start ? (i * total_frames) / count
                                                  : ((2 * i + 1) * total_frames) / (2 * count);
    }
    return out;
}

std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
    return files;
}

VideoSample load_sample(const std::filesystem::path& path, std::size_t count, SamplingAnchor anchor, int size) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) throw DecodeError(path.string() + ": no such file or directory");
    if (std::filesystem::is_directory(path, ec)) return sample_directory(path, count, anchor, size);
    return sample_container(path, count, anchor, size);
}

}  // namespace zsar
