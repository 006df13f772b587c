#ifndef NIDRECON_IO_HPP
#define NIDRECON_IO_HPP

#include "number_format.hpp"
#include "radon.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace nidrecon {

namespace detail {

inline std::ofstream open_for_write(const std::filesystem::path& path)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path)
{
    out.flush();
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline std::vector<char> read_all(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

inline void put_u32(std::ostream& os, std::uint32_t v)
{
    for (int k = 0; k < 4; ++k) os.put(static_cast<char>((v >> (8 * k)) & 0xff));
}

inline void put_f64(std::ostream& os, double d)
{
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int k = 0; k < 8; ++k) os.put(static_cast<char>((v >> (8 * k)) & 0xff));
}

inline std::uint32_t get_u32(const std::vector<char>& b, std::size_t at)
{
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + k])) << (8 * k);
    return v;
}

inline double get_f64(const std::vector<char>& b, std::size_t at)
{
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[at + k])) << (8 * k);
    return std::bit_cast<double>(v);
}

// 16-byte header: magic, u32 rows, u32 cols, u32 reserved; then little-endian doubles
inline void write_matrix_binary(const std::filesystem::path& path, const char* magic, std::uint32_t rows,
                                std::uint32_t cols, std::span<const double> values)
{
    auto out = open_for_write(path);
    out.write(magic, 4);
    put_u32(out, rows);
    put_u32(out, cols);
    put_u32(out, 0);
    for (double v : values) put_f64(out, v);
    finish(out, path);
}

inline std::vector<double> read_matrix_binary(const std::filesystem::path& path, const char* magic,
                                              std::uint32_t& rows, std::uint32_t& cols)
{
    const auto b = read_all(path);
    if (b.size() < 16 || std::string(b.data(), 4) != std::string(magic, 4))
        throw IoError("'" + path.string() + "' is not a " + std::string(magic, 4) + " file");
    rows = get_u32(b, 4);
    cols = get_u32(b, 8);
    const std::size_t count = static_cast<std::size_t>(rows) * cols;
    if (b.size() != 16 + 8 * count) throw IoError("'" + path.string() + "' has the wrong size for its header");
    std::vector<double> v(count);
    for (std::size_t k = 0; k < count; ++k) v[k] = get_f64(b, 16 + 8 * k);
    return v;
}

} // namespace detail

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    auto out = detail::open_for_write(path);
    out << text;
    detail::finish(out, path);
}

/// One row per angle, shortest round-trip decimal values.
inline void write_sinogram_csv(const std::filesystem::path& path, const Sinogram& g)
{
    auto out = detail::open_for_write(path);
    const auto& geom = g.geometry();
    for (int j = 0; j < geom.p; ++j) {
        for (int l = 0; l < geom.q; ++l) {
            if (l) out << ',';
            out << format_double(g(j, l));
        }
        out << '\n';
    }
    detail::finish(out, path);
}

inline Sinogram read_sinogram_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<double> values;
    int rows = 0, cols = -1;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        int c = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                values.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw IoError("'" + path.string() + "': bad number '" + cell + "'");
            }
            ++c;
        }
        if (cols >= 0 && c != cols) throw IoError("'" + path.string() + "': ragged rows");
        cols = c;
        ++rows;
    }
    if (rows < 1 || cols < 2) throw IoError("'" + path.string() + "': empty sinogram");
    return Sinogram(SinogramGeometry(rows, cols), std::move(values));
}

/// "SINO", u32 p, u32 q, u32 0, p*q little-endian doubles.
inline void write_sinogram_binary(const std::filesystem::path& path, const Sinogram& g)
{
    detail::write_matrix_binary(path, "SINO", static_cast<std::uint32_t>(g.geometry().p),
                                static_cast<std::uint32_t>(g.geometry().q), g.values());
}

inline Sinogram read_sinogram_binary(const std::filesystem::path& path)
{
    std::uint32_t p = 0, q = 0;
    auto v = detail::read_matrix_binary(path, "SINO", p, q);
    return Sinogram(SinogramGeometry(static_cast<int>(p), static_cast<int>(q)), std::move(v));
}

/// "IMAG", u32 n, u32 n, u32 0, n*n little-endian doubles (row-major).
inline void write_image_binary(const std::filesystem::path& path, const Image& f)
{
    detail::write_matrix_binary(path, "IMAG", static_cast<std::uint32_t>(f.n()), static_cast<std::uint32_t>(f.n()),
                                f.values());
}

inline Image read_image_binary(const std::filesystem::path& path)
{
    std::uint32_t r = 0, c = 0;
    auto v = detail::read_matrix_binary(path, "IMAG", r, c);
    if (r != c) throw IoError("'" + path.string() + "': image is not square");
    return Image(GridSpec(static_cast<int>(r)), std::move(v));
}

struct IntensityWindow {
    double min;
    double max;
};

inline IntensityWindow intensity_window(const Image& f)
{
    const auto [lo, hi] = std::minmax_element(f.data().begin(), f.data().end());
    return {*lo, *hi};
}

namespace detail {

inline std::uint32_t quantize(double v, IntensityWindow w, std::uint32_t top)
{
    if (!(w.max > w.min)) return 0;
    const double u = std::clamp((v - w.min) / (w.max - w.min), 0.0, 1.0);
    return static_cast<std::uint32_t>(std::lround(u * top));
}

} // namespace detail

/// Binary 16-bit PGM (big-endian samples), linear map [min, max] -> [0, 65535].
/// The window goes to a sidecar "<path>.txt" so the values can be recovered.
inline void write_pgm16(const std::filesystem::path& path, const Image& f)
{
    const IntensityWindow w = intensity_window(f);
    {
        auto out = detail::open_for_write(path);
        out << "P5\n" << f.n() << ' ' << f.n() << "\n65535\n";
        for (double v : f.values()) {
            const auto q = detail::quantize(v, w, 65535);
            out.put(static_cast<char>(q >> 8));
            out.put(static_cast<char>(q & 0xff));
        }
        detail::finish(out, path);
    }
    write_text(path.string() + ".txt", "min = " + format_double(w.min) + "\nmax = " + format_double(w.max) +
                                           "\nscale = linear 0..65535\n");
}

namespace detail {

inline void write_png_rows(const std::filesystem::path& path, int width, int height, int color_type,
                           const std::vector<std::uint8_t>& pixels, int channels)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw IoError("cannot open '" + path.string() + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng failed writing '" + path.string() + "'");
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < height; ++r)
        png_write_row(png, const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(r) * width * channels));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fclose(fp) != 0) throw IoError("closing '" + path.string() + "' failed");
}

} // namespace detail

/// 8-bit grayscale PNG with the same linear window as the PGM.
inline void write_png(const std::filesystem::path& path, const Image& f)
{
    const IntensityWindow w = intensity_window(f);
    std::vector<std::uint8_t> px(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) px[k] = static_cast<std::uint8_t>(detail::quantize(f[k], w, 255));
    detail::write_png_rows(path, f.n(), f.n(), PNG_COLOR_TYPE_GRAY, px, 1);
}

/// RGB raster for simple line plots.
class Canvas {
public:
    Canvas(int width, int height) : w_(width), h_(height), px_(static_cast<std::size_t>(width) * height * 3, 255) {}

    int width() const { return w_; }
    int height() const { return h_; }

    void set(int x, int y, std::array<std::uint8_t, 3> c)
    {
        if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
        const std::size_t k = (static_cast<std::size_t>(y) * w_ + x) * 3;
        px_[k] = c[0];
        px_[k + 1] = c[1];
        px_[k + 2] = c[2];
    }

    void line(int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> c)
    {
        const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
        const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    void write_png(const std::filesystem::path& path) const
    {
        detail::write_png_rows(path, w_, h_, PNG_COLOR_TYPE_RGB, px_, 3);
    }

private:
    int w_, h_;
    std::vector<std::uint8_t> px_;
};

struct PlotSeries {
    std::vector<double> x;
    std::vector<double> y;
};

/// Framed line plot of all series on common axes, with a grey zero line.
inline Canvas render_line_plot(const std::vector<PlotSeries>& series, int width = 640, int height = 400)
{
    static const std::array<std::array<std::uint8_t, 3>, 6> palette = {
        {{{31, 119, 180}}, {{214, 39, 40}}, {{44, 160, 44}}, {{148, 103, 189}}, {{255, 127, 14}}, {{23, 190, 207}}}};
    Canvas c(width, height);
    const int margin = 20;
    double xmin = INFINITY, xmax = -INFINITY, ymin = 0.0, ymax = 0.0;
    for (const auto& s : series) {
        for (double x : s.x) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
        }
        for (double y : s.y) {
            if (!std::isfinite(y)) continue;
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (!(xmax > xmin)) {
        xmin = 0.0;
        xmax = 1.0;
    }
    if (!(ymax > ymin)) ymax = ymin + 1.0;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    auto px = [&](double x) { return margin + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (width - 2 * margin - 1))); };
    auto py = [&](double y) {
        return height - margin - 1 - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (height - 2 * margin - 1)));
    };
    const std::array<std::uint8_t, 3> black{0, 0, 0}, grey{170, 170, 170};
    c.line(px(xmin), py(0.0), px(xmax), py(0.0), grey);
    c.line(margin, margin, width - margin - 1, margin, black);
    c.line(margin, height - margin - 1, width - margin - 1, height - margin - 1, black);
    c.line(margin, margin, margin, height - margin - 1, black);
    c.line(width - margin - 1, margin, width - margin - 1, height - margin - 1, black);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        for (std::size_t i = 1; i < s.x.size() && i < s.y.size(); ++i)
            if (std::isfinite(s.y[i - 1]) && std::isfinite(s.y[i]))
                c.line(px(s.x[i - 1]), py(s.y[i - 1]), px(s.x[i]), py(s.y[i]), palette[k % palette.size()]);
    }
    return c;
}

} // namespace nidrecon

#endif
