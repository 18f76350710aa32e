#include "nst/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace nst {

namespace {

std::string magic_name(const unsigned char* head, std::size_t len) {
    if (len >= 2 && head[0] == 0xff && head[1] == 0xd8) return "JPEG";
    if (len >= 4 && head[0] == 'G' && head[1] == 'I' && head[2] == 'F') return "GIF";
    if (len >= 2 && head[0] == 'B' && head[1] == 'M') return "BMP";
    char buf[16];
    std::size_t n = std::min<std::size_t>(len, 4);
    std::size_t o = 0;
    for (std::size_t i = 0; i < n; ++i) {
        unsigned char c = head[i];
        if (c >= 0x20 && c < 0x7f) {
            buf[o++] = static_cast<char>(c);
        } else {
            std::snprintf(buf + o, 5, "\\x%02x", c);
            o += 4;
        }
    }
    buf[o] = 0;
    return std::string("bytes '") + buf + "'";
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

ImageBuffer decode_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open '" + path + "'");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialization failed");
    }

    std::vector<std::uint8_t> pixels;
    std::vector<png_bytep> rows;
    int width = 0, height = 0;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("'" + path + "': PNG decode failed");
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);
    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    png_byte color = png_get_color_type(png, info);
    png_byte depth = png_get_bit_depth(png, info);

    // normalize everything to 8-bit RGB
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    pixels.resize(static_cast<std::size_t>(width) * height * 3);
    rows.resize(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y)
        rows[static_cast<std::size_t>(y)] = pixels.data() + static_cast<std::size_t>(y) * width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    return ImageBuffer{width, height, std::move(pixels)};
}

void encode_png(const ImageBuffer& buf, const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open '" + path + "' for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("'" + path + "': PNG write failed");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(buf.width),
                 static_cast<png_uint_32>(buf.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < buf.height; ++y)
        png_write_row(png, const_cast<png_bytep>(buf.rgb.data() +
                                                 static_cast<std::size_t>(y) * buf.width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

ImageBuffer decode_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string magic;
    in >> magic;
    if (magic != "P6") throw FormatError("'" + path + "': not a binary PPM (magic " + magic + ")");

    auto next_token = [&]() -> long {
        // PPM headers allow '#' comments between tokens
        for (;;) {
            int c = in.peek();
            if (c == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
        }
        long v = -1;
        in >> v;
        return v;
    };

    long w = next_token(), h = next_token(), maxval = next_token();
    if (!in || w <= 0 || h <= 0) throw FormatError("'" + path + "': bad PPM dimensions");
    if (maxval != 255) throw FormatError("'" + path + "': PPM maxval must be 255");
    in.get();  // single whitespace after maxval

    ImageBuffer buf;
    buf.width = static_cast<int>(w);
    buf.height = static_cast<int>(h);
    buf.rgb.resize(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(buf.rgb.data()),
            static_cast<std::streamsize>(buf.rgb.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.rgb.size())
        throw FormatError("'" + path + "': truncated PPM pixel data");
    return buf;
}

void encode_ppm(const ImageBuffer& buf, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "P6\n" << buf.width << " " << buf.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(buf.rgb.data()),
              static_cast<std::streamsize>(buf.rgb.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

Tensor center_crop_square(const Tensor& t) {
    std::int64_t side = std::min(t.h(), t.w());
    if (t.h() == side && t.w() == side) return t;
    std::int64_t oy = (t.h() - side) / 2, ox = (t.w() - side) / 2;
    Tensor out(1, t.c(), side, side);
    for (std::int64_t c = 0; c < t.c(); ++c)
        for (std::int64_t y = 0; y < side; ++y)
            for (std::int64_t x = 0; x < side; ++x)
                out.at(0, c, y, x) = t.at(0, c, y + oy, x + ox);
    return out;
}

}  // namespace

ImageBuffer decode_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open '" + path + "'");
    unsigned char head[8] = {};
    probe.read(reinterpret_cast<char*>(head), sizeof head);
    std::size_t got = static_cast<std::size_t>(probe.gcount());
    probe.close();

    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (got >= 8 && std::memcmp(head, png_sig, 8) == 0) return decode_png(path);
    if (got >= 2 && head[0] == 'P' && head[1] == '6') return decode_ppm(path);
    throw FormatError("'" + path + "': unsupported image format, detected " +
                      magic_name(head, got));
}

Tensor buffer_to_tensor(const ImageBuffer& buf) {
    Tensor t(1, 3, buf.height, buf.width);
    const float inv = 1.0f / 255.0f;
    for (std::int64_t y = 0; y < buf.height; ++y)
        for (std::int64_t x = 0; x < buf.width; ++x) {
            const std::uint8_t* px = buf.rgb.data() + (y * buf.width + x) * 3;
            for (std::int64_t c = 0; c < 3; ++c)
                t.at(0, c, y, x) = static_cast<float>(px[c]) * inv;
        }
    return t;
}

ImageBuffer tensor_to_buffer(const Tensor& t) {
    if (t.n() != 1 || t.c() != 3)
        throw ContractError("image tensor must be (1,3,h,w), got " + t.shape_str());
    ImageBuffer buf;
    buf.height = static_cast<int>(t.h());
    buf.width = static_cast<int>(t.w());
    buf.rgb.resize(static_cast<std::size_t>(buf.width) * buf.height * 3);
    for (std::int64_t y = 0; y < t.h(); ++y)
        for (std::int64_t x = 0; x < t.w(); ++x) {
            std::uint8_t* px = buf.rgb.data() + (y * buf.width + x) * 3;
            for (std::int64_t c = 0; c < 3; ++c) {
                float v = std::min(1.0f, std::max(0.0f, t.at(0, c, y, x)));
                px[c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
        }
    return buf;
}

Tensor resize_bilinear(const Tensor& t, std::int64_t out_h, std::int64_t out_w) {
    if (out_h < 1 || out_w < 1) throw ContractError("resize target dims must be >= 1");
    if (out_h == t.h() && out_w == t.w()) return t;
    Tensor out(1, t.c(), out_h, out_w);
    const double sy = static_cast<double>(t.h()) / static_cast<double>(out_h);
    const double sx = static_cast<double>(t.w()) / static_cast<double>(out_w);
    for (std::int64_t y = 0; y < out_h; ++y) {
        double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
        double wy = fy - static_cast<double>(y0);
        std::int64_t y0c = std::clamp<std::int64_t>(y0, 0, t.h() - 1);
        std::int64_t y1c = std::clamp<std::int64_t>(y0 + 1, 0, t.h() - 1);
        for (std::int64_t x = 0; x < out_w; ++x) {
            double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
            double wx = fx - static_cast<double>(x0);
            std::int64_t x0c = std::clamp<std::int64_t>(x0, 0, t.w() - 1);
            std::int64_t x1c = std::clamp<std::int64_t>(x0 + 1, 0, t.w() - 1);
            for (std::int64_t c = 0; c < t.c(); ++c) {
                double top = (1.0 - wx) * t.at(0, c, y0c, x0c) + wx * t.at(0, c, y0c, x1c);
                double bot = (1.0 - wx) * t.at(0, c, y1c, x0c) + wx * t.at(0, c, y1c, x1c);
                out.at(0, c, y, x) = static_cast<float>((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

Tensor load_image(const std::string& path, std::optional<int> target_size) {
    Tensor t = buffer_to_tensor(decode_image(path));
    if (target_size) {
        if (*target_size < 1) throw ContractError("target size must be >= 1");
        t = center_crop_square(t);
        t = resize_bilinear(t, *target_size, *target_size);
    }
    return t;
}

void save_image(const Tensor& t, const std::string& path) {
    auto dot = path.rfind('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    ImageBuffer buf = tensor_to_buffer(t);
    if (ext == "png") {
        encode_png(buf, path);
    } else if (ext == "ppm") {
        encode_ppm(buf, path);
    } else {
        throw FormatError("'" + path + "': unsupported output extension (use .png or .ppm)");
    }
}

}  // namespace nst
