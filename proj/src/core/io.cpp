#include "mpijpeg/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include <json.hpp>

namespace mpijpeg::io {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
    auto* err = static_cast<std::string*>(png_get_error_ptr(png));
    *err = msg;
    png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct PngPixels {
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    int channels = 0;
    std::size_t stride = 0;
    std::vector<std::uint8_t> buffer;
};

void read_png_pixels(png_structp png, png_infop info, PngPixels& px) {
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    px.width = png_get_image_width(png, info);
    px.height = png_get_image_height(png, info);
    px.channels = png_get_channels(png, info);
    px.stride = png_get_rowbytes(png, info);
    px.buffer.resize(px.stride * px.height);
    std::vector<png_bytep> rows(px.height);
    for (png_uint_32 y = 0; y < px.height; ++y) rows[y] = px.buffer.data() + y * px.stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
}

}  // namespace

Image read_png(const fs::path& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open " + path.string());
    std::string error;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_error_fn, png_warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng initialisation failed");
    }
    PngPixels px;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("bad PNG " + path.string() + ": " + error);
    }
    png_init_io(png, f.get());
    read_png_pixels(png, info, px);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(static_cast<int>(px.height), static_cast<int>(px.width), px.channels);
    auto dst = img.data();
    const std::size_t row = static_cast<std::size_t>(px.width) * px.channels;
    for (png_uint_32 y = 0; y < px.height; ++y)
        for (std::size_t i = 0; i < row; ++i) dst[y * row + i] = static_cast<float>(px.buffer[y * px.stride + i] / 255.0);
    return img;
}

namespace {

int png_color_type(const Image& image) {
    switch (image.channels()) {
        case 1: return PNG_COLOR_TYPE_GRAY;
        case 3: return PNG_COLOR_TYPE_RGB;
        case 4: return PNG_COLOR_TYPE_RGB_ALPHA;
        default: throw ShapeError("write_png: unsupported channel count");
    }
}

}  // namespace

void write_png(const fs::path& path, const Image& image) {
    const int color = png_color_type(image);
    std::vector<std::uint8_t> buffer(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) {
        buffer[i] = static_cast<std::uint8_t>(std::nearbyint(std::clamp(image.data()[i], 0.0f, 1.0f) * 255.0f));
    }
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot write " + path.string());
    std::string error;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_error_fn, png_warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng initialisation failed");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(image.height()));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed for " + path.string() + ": " + error);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()), 8,
                 color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(image.width()) * image.channels();
    for (int y = 0; y < image.height(); ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + y * stride;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

MpiManifest parse_manifest(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ManifestError(std::string("manifest is not valid JSON: ") + e.what());
    }
    MpiManifest m;
    try {
        m.width = j.at("width").get<int>();
        m.height = j.at("height").get<int>();
        m.num_planes = j.at("num_planes").get<int>();
        m.depths = j.at("depths").get<std::vector<double>>();
        const auto& k = j.at("intrinsics");
        m.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                        k.at("cy").get<double>()};
        m.layers = j.at("layers").get<std::vector<std::string>>();
        m.translation_units = j.value("translation_units", std::string("scene"));
    } catch (const json::exception& e) {
        throw ManifestError(std::string("manifest field error: ") + e.what());
    }
    if (m.width <= 0 || m.height <= 0) throw ManifestError("manifest dimensions must be positive");
    if (m.num_planes != kNumPlanes && m.num_planes != kPreMergePlanes) {
        throw ManifestError("manifest num_planes must be 32 or 128");
    }
    if (static_cast<int>(m.depths.size()) != m.num_planes) throw ManifestError("depths length != num_planes");
    if (static_cast<int>(m.layers.size()) != m.num_planes) throw ManifestError("layers length != num_planes");
    try {
        m.intrinsics.validate(m.width, m.height);
    } catch (const ShapeError& e) {
        throw ManifestError(e.what());
    }
    return m;
}

std::string manifest_to_json(const MpiManifest& m) {
    json j;
    j["width"] = m.width;
    j["height"] = m.height;
    j["num_planes"] = m.num_planes;
    j["depths"] = m.depths;
    j["intrinsics"] = {{"fx", m.intrinsics.fx}, {"fy", m.intrinsics.fy}, {"cx", m.intrinsics.cx}, {"cy", m.intrinsics.cy}};
    j["layers"] = m.layers;
    j["translation_units"] = m.translation_units;
    return j.dump(2) + "\n";
}

MpiManifest read_manifest(const fs::path& path) {
    const auto bytes = read_bytes(path);
    return parse_manifest(std::string(bytes.begin(), bytes.end()));
}

void write_manifest(const fs::path& path, const MpiManifest& manifest) {
    const std::string text = manifest_to_json(manifest);
    write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

LoadedMpi load_mpi(const fs::path& manifest_path) {
    MpiManifest m = read_manifest(manifest_path);
    const fs::path base = manifest_path.parent_path();
    std::vector<Image> planes;
    for (const auto& name : m.layers) {
        const fs::path p = base / name;
        if (!fs::exists(p)) throw ManifestError("missing layer " + p.string());
        Image layer;
        try {
            layer = read_png(p);
        } catch (const IoError& e) {
            throw ManifestError(e.what());
        }
        if (layer.width() != m.width || layer.height() != m.height) {
            throw ManifestError("layer " + name + " dimensions do not match manifest");
        }
        if (layer.channels() == 3) {
            Image rgba(layer.height(), layer.width(), 4, 1.0f);
            for (int y = 0; y < layer.height(); ++y)
                for (int x = 0; x < layer.width(); ++x)
                    for (int c = 0; c < 3; ++c) rgba.at(y, x, c) = layer.at(y, x, c);
            layer = std::move(rgba);
        }
        planes.push_back(std::move(layer));
    }
    try {
        MpiStack stack(std::move(planes), m.depths, /*allow_premerge=*/true);
        return {std::move(m), std::move(stack)};
    } catch (const ShapeError& e) {
        throw ManifestError(e.what());
    }
}

MpiManifest save_mpi(const fs::path& dir, const MpiStack& mpi, const CameraModel& cam) {
    fs::create_directories(dir);
    MpiManifest m;
    m.width = mpi.width();
    m.height = mpi.height();
    m.num_planes = mpi.num_planes();
    m.depths = mpi.depths();
    m.intrinsics = cam;
    const int digits = mpi.num_planes() > 100 ? 3 : 2;
    for (int i = 0; i < mpi.num_planes(); ++i) {
        std::ostringstream name;
        name << "layer_" << std::setw(digits) << std::setfill('0') << i << ".png";
        write_png(dir / name.str(), mpi.plane(i));
        m.layers.push_back(name.str());
    }
    write_manifest(dir / "manifest.json", m);
    return m;
}

}  // namespace mpijpeg::io
