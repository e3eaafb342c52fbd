#pragma once

// Dataset ingestion: IDX (MNIST's native container) and directory-of-PNGs
// layouts, plus the explicit resize and stratified-split steps. Images are
// kept as float tensors in the raw 0..255 range; the network's rescale
// layer owns the mapping to [0, 1].

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <png.h>

#include "occamnas/errors.hpp"
#include "occamnas/rng.hpp"
#include "occamnas/tensor.hpp"

namespace occamnas {

struct Dataset {
    std::vector<Tensor<float>> images; // each (h, w, ch), values in [0, 255]
    std::vector<int> labels;
    std::vector<std::string> class_names;

    std::size_t size() const { return images.size(); }

    bool uniform_shape() const {
        for (const auto& t : images)
            if (t.shape != images.front().shape)
                return false;
        return true;
    }

    // (h, w, ch) of the common image shape; errors if shapes are mixed.
    std::array<int, 3> shape() const {
        if (images.empty())
            throw EmptyDataset("dataset has no images");
        if (!uniform_shape())
            throw ShapeMismatch("dataset images have mixed shapes; resize first");
        return {images.front().shape[0], images.front().shape[1], images.front().shape[2]};
    }
};

// ---- IDX ----

namespace detail {

inline std::uint32_t read_be32(std::istream& f, const char* what) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f)
        throw TruncatedFile(std::string("unexpected end of file reading ") + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& f, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803; // u8, 3 dims
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801; // u8, 1 dim

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream fi(images_path, std::ios::binary);
    if (!fi)
        throw Error("cannot open " + images_path);
    if (detail::read_be32(fi, "images magic") != kIdxImagesMagic)
        throw BadMagic("bad IDX magic in " + images_path);
    const std::uint32_t count = detail::read_be32(fi, "image count");
    const std::uint32_t rows = detail::read_be32(fi, "rows");
    const std::uint32_t cols = detail::read_be32(fi, "cols");

    std::ifstream fl(labels_path, std::ios::binary);
    if (!fl)
        throw Error("cannot open " + labels_path);
    if (detail::read_be32(fl, "labels magic") != kIdxLabelsMagic)
        throw BadMagic("bad IDX magic in " + labels_path);
    const std::uint32_t label_count = detail::read_be32(fl, "label count");
    if (label_count != count)
        throw CountMismatch("IDX image/label counts differ: " + std::to_string(count) + " vs " +
                            std::to_string(label_count));

    Dataset ds;
    ds.images.reserve(count);
    ds.labels.reserve(count);
    std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
    int max_label = -1;
    for (std::uint32_t i = 0; i < count; ++i) {
        fi.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!fi)
            throw TruncatedFile("truncated image data in " + images_path);
        unsigned char y;
        fl.read(reinterpret_cast<char*>(&y), 1);
        if (!fl)
            throw TruncatedFile("truncated label data in " + labels_path);
        Tensor<float> img{static_cast<int>(rows), static_cast<int>(cols), 1};
        for (std::size_t p = 0; p < buf.size(); ++p)
            img.data[p] = static_cast<float>(buf[p]);
        ds.images.push_back(std::move(img));
        ds.labels.push_back(static_cast<int>(y));
        max_label = std::max(max_label, static_cast<int>(y));
    }
    for (int v = 0; v <= max_label; ++v)
        ds.class_names.push_back(std::to_string(v));
    return ds;
}

inline void write_idx(const std::string& images_path, const std::string& labels_path,
                      const Dataset& ds) {
    if (!ds.images.empty() && !ds.uniform_shape())
        throw ShapeMismatch("write_idx requires uniform image shapes");
    if (!ds.images.empty() && ds.images.front().shape[2] != 1)
        throw ShapeMismatch("IDX stores single-channel images");
    std::ofstream fi(images_path, std::ios::binary);
    std::ofstream fl(labels_path, std::ios::binary);
    if (!fi || !fl)
        throw Error("cannot write IDX files");
    const std::uint32_t count = static_cast<std::uint32_t>(ds.size());
    const std::uint32_t rows = ds.images.empty() ? 0 : static_cast<std::uint32_t>(ds.images[0].shape[0]);
    const std::uint32_t cols = ds.images.empty() ? 0 : static_cast<std::uint32_t>(ds.images[0].shape[1]);
    detail::write_be32(fi, kIdxImagesMagic);
    detail::write_be32(fi, count);
    detail::write_be32(fi, rows);
    detail::write_be32(fi, cols);
    detail::write_be32(fl, kIdxLabelsMagic);
    detail::write_be32(fl, count);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (float v : ds.images[i].data) {
            const auto b = static_cast<unsigned char>(std::clamp(v, 0.0f, 255.0f));
            fi.write(reinterpret_cast<const char*>(&b), 1);
        }
        const auto y = static_cast<unsigned char>(ds.labels[i]);
        fl.write(reinterpret_cast<const char*>(&y), 1);
    }
}

// ---- PNG directory ----

namespace detail {

inline Tensor<float> decode_png(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw UndecodableImage("cannot decode " + path + ": " + image.message);
    // Collapse to 8-bit gray or RGB; alpha is dropped.
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const int ch = color ? 3 : 1;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw UndecodableImage("cannot decode " + path + ": " + image.message);
    }
    Tensor<float> img{static_cast<int>(image.height), static_cast<int>(image.width), ch};
    for (std::size_t i = 0; i < buf.size(); ++i)
        img.data[i] = static_cast<float>(buf[i]);
    return img;
}

} // namespace detail

struct LoadStats {
    int skipped = 0; // undecodable files
};

// One subdirectory per class; class index = lexicographic rank of the
// subdirectory name. Undecodable files are skipped with a warning. Images
// keep their native sizes; resize is a separate explicit step.
inline Dataset load_image_dir(const std::string& root, LoadStats* stats = nullptr) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root))
        throw Error("not a directory: " + root);
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory())
            class_dirs.push_back(e.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty())
        throw EmptyClassDir("no class subdirectories in " + root);

    Dataset ds;
    LoadStats local;
    LoadStats& st = stats ? *stats : local;
    for (std::size_t cls = 0; cls < class_dirs.size(); ++cls) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(class_dirs[cls])) {
            if (!e.is_regular_file())
                continue;
            auto ext = e.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            if (ext == ".png")
                files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        std::size_t loaded = 0;
        for (const auto& f : files) {
            try {
                ds.images.push_back(detail::decode_png(f.string()));
                ds.labels.push_back(static_cast<int>(cls));
                ++loaded;
            } catch (const UndecodableImage& e) {
                std::cerr << "warning: skipping " << f.string() << " (" << e.what() << ")\n";
                ++st.skipped;
            }
        }
        if (loaded == 0)
            throw EmptyClassDir("class directory has no decodable PNG files: " +
                                class_dirs[cls].string());
        ds.class_names.push_back(class_dirs[cls].filename().string());
    }
    return ds;
}

// ---- resize ----

namespace detail {

// Bilinear with corner-aligned sampling: destination index i maps to source
// coordinate i * (S-1) / (D-1), so corners map to corners exactly.
inline Tensor<float> resize_image(const Tensor<float>& img, int side) {
    const int h = img.shape[0], w = img.shape[1], ch = img.shape[2];
    if (h == side && w == side)
        return img; // bit-identical passthrough
    Tensor<float> out{side, side, ch};
    const double sy = side > 1 ? static_cast<double>(h - 1) / (side - 1) : 0.0;
    const double sx = side > 1 ? static_cast<double>(w - 1) / (side - 1) : 0.0;
    for (int y = 0; y < side; ++y) {
        const double fy = side > 1 ? y * sy : (h - 1) / 2.0;
        const int y0 = std::min(static_cast<int>(fy), h - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < side; ++x) {
            const double fx = side > 1 ? x * sx : (w - 1) / 2.0;
            const int x0 = std::min(static_cast<int>(fx), w - 1);
            const int x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - x0;
            for (int c = 0; c < ch; ++c) {
                const double v = (1 - wy) * ((1 - wx) * img(y0, x0, c) + wx * img(y0, x1, c)) +
                                 wy * ((1 - wx) * img(y1, x0, c) + wx * img(y1, x1, c));
                out(y, x, c) = static_cast<float>(v);
            }
        }
    }
    return out;
}

inline Tensor<float> replicate_channels(const Tensor<float>& img) {
    const int h = img.shape[0], w = img.shape[1];
    Tensor<float> out{h, w, 3};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                out(y, x, c) = img(y, x, 0);
    return out;
}

} // namespace detail

inline Dataset resize(const Dataset& ds, int side, bool replicate_gray_to_rgb = false) {
    if (side < 1)
        throw Error("resize: side must be >= 1");
    Dataset out;
    out.labels = ds.labels;
    out.class_names = ds.class_names;
    out.images.reserve(ds.size());
    for (const auto& img : ds.images) {
        Tensor<float> r = detail::resize_image(img, side);
        if (replicate_gray_to_rgb && r.shape[2] == 1)
            r = detail::replicate_channels(r);
        out.images.push_back(std::move(r));
    }
    return out;
}

// ---- stratified split ----

// Returns (train, holdout); `ratio` is the holdout fraction. Per class the
// holdout size is round(n * ratio) clamped so both sides stay non-empty.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw Error("split: ratio must be in (0, 1)");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < ds.size(); ++i)
        by_class[ds.labels[i]].push_back(i);
    for (const auto& [cls, idx] : by_class)
        if (idx.size() < 2)
            throw ClassTooSmall("class " + std::to_string(cls) + " has fewer than 2 samples");

    std::vector<std::size_t> train_idx, holdout_idx;
    Rng rng(mix_seed(seed, 0x5717));
    for (auto& [cls, idx] : by_class) {
        rng.shuffle(idx);
        const auto n = static_cast<long long>(idx.size());
        const long long take =
            std::clamp(std::llround(static_cast<double>(n) * ratio), 1LL, n - 1);
        holdout_idx.insert(holdout_idx.end(), idx.begin(), idx.begin() + take);
        train_idx.insert(train_idx.end(), idx.begin() + take, idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(holdout_idx.begin(), holdout_idx.end());

    auto take = [&](const std::vector<std::size_t>& idx) {
        Dataset d;
        d.class_names = ds.class_names;
        d.images.reserve(idx.size());
        for (std::size_t i : idx) {
            d.images.push_back(ds.images[i]);
            d.labels.push_back(ds.labels[i]);
        }
        return d;
    };
    return {take(train_idx), take(holdout_idx)};
}

} // namespace occamnas
