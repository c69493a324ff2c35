#include "ekila/image.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <png.h>

#include "ekila/binio.hpp"

namespace ekila {

FloatImage toFloat(const Image& img) {
    FloatImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.rgb.size(); ++i) out.data[i] = img.rgb[i] / 255.0f;
    return out;
}

Image toBytes(const FloatImage& img) {
    Image out(img.width, img.height);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        float v = std::clamp(img.data[i], 0.0f, 1.0f);
        out.rgb[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    return out;
}

Image crop(const Image& img, const Rect& r) {
    Image out(r.w, r.h);
    for (int y = 0; y < r.h; ++y)
        std::copy_n(&img.rgb[((static_cast<std::size_t>(r.y + y) * img.width) + r.x) * 3], r.w * 3,
                    &out.rgb[static_cast<std::size_t>(y) * r.w * 3]);
    return out;
}

FloatImage crop(const FloatImage& img, const Rect& r) {
    FloatImage out(r.w, r.h);
    for (int y = 0; y < r.h; ++y)
        std::copy_n(&img.data[((static_cast<std::size_t>(r.y + y) * img.width) + r.x) * 3], r.w * 3,
                    &out.data[static_cast<std::size_t>(y) * r.w * 3]);
    return out;
}

void paste(Image& dst, const Image& src, int x, int y) {
    for (int row = 0; row < src.height; ++row)
        std::copy_n(&src.rgb[static_cast<std::size_t>(row) * src.width * 3], src.width * 3,
                    &dst.rgb[((static_cast<std::size_t>(y + row) * dst.width) + x) * 3]);
}

FloatImage resizeBilinear(const FloatImage& img, int width, int height) {
    if (img.width == width && img.height == height) return img;
    FloatImage out(width, height);
    const float sx = static_cast<float>(img.width) / width;
    const float sy = static_cast<float>(img.height) / height;
    for (int y = 0; y < height; ++y) {
        float fy = std::clamp((y + 0.5f) * sy - 0.5f, 0.0f, static_cast<float>(img.height - 1));
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, img.height - 1);
        float wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            float fx = std::clamp((x + 0.5f) * sx - 0.5f, 0.0f, static_cast<float>(img.width - 1));
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, img.width - 1);
            float wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                float top = img.at(x0, y0, c) * (1 - wx) + img.at(x1, y0, c) * wx;
                float bot = img.at(x0, y1, c) * (1 - wx) + img.at(x1, y1, c) * wx;
                out.at(x, y, c) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

double psnr(const FloatImage& a, const FloatImage& b) {
    if (a.width != b.width || a.height != b.height) fail(ErrorCode::ShapeMismatch, "psnr: image sizes differ");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

Bytes encodePng(const Image& img) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.rgb.data(), 0, nullptr))
        fail(ErrorCode::Io, std::string("png encode: ") + image.message);
    Bytes out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.rgb.data(), 0, nullptr))
        fail(ErrorCode::Io, std::string("png encode: ") + image.message);
    out.resize(size);
    return out;
}

Image decodePng(ByteView png) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, png.data(), png.size()))
        fail(ErrorCode::Format, std::string("png decode: ") + image.message);
    image.format = PNG_FORMAT_RGB;
    Image out(static_cast<int>(image.width), static_cast<int>(image.height));
    if (!png_image_finish_read(&image, nullptr, out.rgb.data(), 0, nullptr)) {
        png_image_free(&image);
        fail(ErrorCode::Format, std::string("png decode: ") + image.message);
    }
    return out;
}

namespace {

Image decodePpm(ByteView data) {
    std::string header(data.begin(), data.begin() + std::min<std::size_t>(data.size(), 64));
    std::istringstream in(header);
    std::string magic;
    int w = 0, h = 0, maxv = 0;
    in >> magic >> w >> h >> maxv;
    if (magic != "P6" || w <= 0 || h <= 0 || maxv != 255) fail(ErrorCode::Format, "unsupported PPM header");
    auto offset = static_cast<std::size_t>(in.tellg()) + 1;
    Image img(w, h);
    if (data.size() < offset + img.rgb.size()) fail(ErrorCode::Format, "truncated PPM");
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(offset), img.rgb.size(), img.rgb.begin());
    return img;
}

}  // namespace

Image loadImage(const std::filesystem::path& path) {
    Bytes data = binio::readFile(path);
    if (path.extension() == ".ppm") return decodePpm(data);
    return decodePng(data);
}

void saveImage(const std::filesystem::path& path, const Image& img) {
    if (path.extension() == ".ppm") {
        std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
        Bytes out(header.begin(), header.end());
        out.insert(out.end(), img.rgb.begin(), img.rgb.end());
        binio::writeFile(path, out);
        return;
    }
    binio::writeFile(path, encodePng(img));
}

}  // namespace ekila
