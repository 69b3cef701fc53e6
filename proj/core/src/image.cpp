#include "lw/image.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>

namespace lw {

void check_pixel_image(const Tensor& x, const char* who) {
    check_arg(x.ndim() == 3 && x.dim(0) == 3 && x.dim(1) >= 1 && x.dim(2) >= 1,
              std::string(who) + ": expected a {3,H,W} pixel image, got " + x.shape_str());
}

void check_latent(const Tensor& x, const char* who) {
    check_arg(x.ndim() == 3 && x.dim(0) == 4,
              std::string(who) + ": expected a {4,h,w} latent, got " + x.shape_str());
    check_arg(x.all_finite(), std::string(who) + ": latent has non-finite values");
}

void clamp01(Tensor& x) {
    for (Real& v : x.data) v = std::clamp(v, 0.0, 1.0);
}

Real gray_mean(const Tensor& x) {
    check_pixel_image(x, "gray_mean");
    const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
    Real acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
        acc += 0.299 * x.data[i] + 0.587 * x.data[plane + i] + 0.114 * x.data[2 * plane + i];
    }
    return acc / static_cast<Real>(plane);
}

Tensor center_crop(const Tensor& x, int out_h, int out_w) {
    check_pixel_image(x, "center_crop");
    const int H = x.dim(1), W = x.dim(2);
    check_arg(out_h >= 1 && out_h <= H && out_w >= 1 && out_w <= W, "center_crop: bad size");
    const int oi = (H - out_h) / 2, oj = (W - out_w) / 2;
    Tensor out({3, out_h, out_w});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < out_h; ++i)
            for (int j = 0; j < out_w; ++j)
                out.data[(static_cast<std::size_t>(c) * out_h + i) * out_w + j] =
                    x.data[(static_cast<std::size_t>(c) * H + oi + i) * W + oj + j];
    return out;
}

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
    check_pixel_image(x, "bilinear_resize");
    check_arg(out_h >= 1 && out_w >= 1, "bilinear_resize: bad size");
    const int H = x.dim(1), W = x.dim(2);
    if (out_h == H && out_w == W) return x;
    Tensor out({3, out_h, out_w});
    const Real sh = static_cast<Real>(H) / out_h;
    const Real sw = static_cast<Real>(W) / out_w;
    for (int i = 0; i < out_h; ++i) {
        const Real fi = std::clamp((i + 0.5) * sh - 0.5, 0.0, static_cast<Real>(H - 1));
        const int i0 = static_cast<int>(fi);
        const int i1 = std::min(i0 + 1, H - 1);
        const Real wi = fi - i0;
        for (int j = 0; j < out_w; ++j) {
            const Real fj = std::clamp((j + 0.5) * sw - 0.5, 0.0, static_cast<Real>(W - 1));
            const int j0 = static_cast<int>(fj);
            const int j1 = std::min(j0 + 1, W - 1);
            const Real wj = fj - j0;
            for (int c = 0; c < 3; ++c) {
                const Real* p = x.data.data() + static_cast<std::size_t>(c) * H * W;
                const Real top = p[static_cast<std::size_t>(i0) * W + j0] * (1 - wj) +
                                 p[static_cast<std::size_t>(i0) * W + j1] * wj;
                const Real bot = p[static_cast<std::size_t>(i1) * W + j0] * (1 - wj) +
                                 p[static_cast<std::size_t>(i1) * W + j1] * wj;
                out.data[(static_cast<std::size_t>(c) * out_h + i) * out_w + j] =
                    top * (1 - wi) + bot * wi;
            }
        }
    }
    return out;
}

namespace {

unsigned char to_byte(Real v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Tensor from_rgb8(const std::vector<unsigned char>& rgb, int H, int W) {
    Tensor out({3, H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (std::size_t i = 0; i < plane; ++i) {
        out.data[i] = rgb[3 * i] / 255.0;
        out.data[plane + i] = rgb[3 * i + 1] / 255.0;
        out.data[2 * plane + i] = rgb[3 * i + 2] / 255.0;
    }
    return out;
}

std::vector<unsigned char> to_rgb8(const Tensor& x) {
    const int H = x.dim(1), W = x.dim(2);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<unsigned char> rgb(3 * plane);
    for (std::size_t i = 0; i < plane; ++i) {
        rgb[3 * i] = to_byte(x.data[i]);
        rgb[3 * i + 1] = to_byte(x.data[plane + i]);
        rgb[3 * i + 2] = to_byte(x.data[2 * plane + i]);
    }
    return rgb;
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

}  // namespace

Tensor load_image(const std::string& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&png, path.c_str())) {
        png.format = PNG_FORMAT_RGB;
        std::vector<unsigned char> rgb(PNG_IMAGE_SIZE(png));
        if (!png_image_finish_read(&png, nullptr, rgb.data(), 0, nullptr)) {
            png_image_free(&png);
            throw ArchiveError("load_image: PNG decode failed for " + path);
        }
        return from_rgb8(rgb, static_cast<int>(png.height), static_cast<int>(png.width));
    }
    png_image_free(&png);

    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw ArchiveError("load_image: cannot open " + path);
    std::vector<unsigned char> bytes;
    unsigned char buf[65536];
    std::size_t got = 0;
    while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) bytes.insert(bytes.end(), buf, buf + got);
    std::fclose(f);
    try {
        return decode_jpeg(bytes);
    } catch (const std::exception&) {
        throw ArchiveError("load_image: " + path + " is neither readable PNG nor JPEG");
    }
}

void save_png(const Tensor& x, const std::string& path) {
    check_pixel_image(x, "save_png");
    const auto rgb = to_rgb8(x);
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(x.dim(2));
    png.height = static_cast<png_uint_32>(x.dim(1));
    png.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png, path.c_str(), 0, rgb.data(), 0, nullptr)) {
        throw ArchiveError("save_png: write failed for " + path);
    }
}

std::vector<unsigned char> encode_jpeg(const Tensor& x, int quality) {
    check_pixel_image(x, "encode_jpeg");
    check_arg(quality >= 1 && quality <= 100, "encode_jpeg: quality must be in [1,100]");
    const int H = x.dim(1), W = x.dim(2);
    auto rgb = to_rgb8(x);

    jpeg_compress_struct cinfo{};
    JpegErrorMgr err{};
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    unsigned char* out_buf = nullptr;
    unsigned long out_size = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        if (out_buf) free(out_buf);
        throw ArchiveError("encode_jpeg: libjpeg failure");
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &out_buf, &out_size);
    cinfo.image_width = static_cast<JDIMENSION>(W);
    cinfo.image_height = static_cast<JDIMENSION>(H);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * W * 3;
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    std::vector<unsigned char> bytes(out_buf, out_buf + out_size);
    free(out_buf);
    return bytes;
}

Tensor decode_jpeg(const std::vector<unsigned char>& bytes) {
    check_arg(!bytes.empty(), "decode_jpeg: empty buffer");
    jpeg_decompress_struct cinfo{};
    JpegErrorMgr err{};
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw ArchiveError("decode_jpeg: libjpeg failure");
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, const_cast<unsigned char*>(bytes.data()),
                 static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    const int W = static_cast<int>(cinfo.output_width);
    const int H = static_cast<int>(cinfo.output_height);
    std::vector<unsigned char> rgb(static_cast<std::size_t>(3) * H * W);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * W * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return from_rgb8(rgb, H, W);
}

}  // namespace lw
