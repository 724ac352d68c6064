#include "lrr/image.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace lrr {

Image Image::filled(int h, int w, Rgb c) {
    check(h > 0 && w > 0, "Image::filled: bad dims ", h, "x", w);
    Image img;
    img.h = h;
    img.w = w;
    img.data.resize(static_cast<size_t>(3) * h * w);
    img.fill_rect(0, 0, h, w, c);
    return img;
}

void Image::fill_rect(int y0, int x0, int y1, int x1, Rgb c) {
    y0 = std::max(y0, 0);
    x0 = std::max(x0, 0);
    y1 = std::min(y1, h);
    x1 = std::min(x1, w);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            at(0, y, x) = c.r;
            at(1, y, x) = c.g;
            at(2, y, x) = c.b;
        }
    }
}

void Image::fill_circle(int cy, int cx, int radius, Rgb c) {
    for (int y = cy - radius; y <= cy + radius; ++y) {
        for (int x = cx - radius; x <= cx + radius; ++x) {
            const int dy = y - cy;
            const int dx = x - cx;
            if (dy * dy + dx * dx <= radius * radius) set(y, x, c);
        }
    }
}

void Image::fill_triangle(int cy, int cx, int radius, Rgb c) {
    for (int y = cy - radius; y <= cy + radius; ++y) {
        // Width grows linearly from apex to base.
        const float t = static_cast<float>(y - (cy - radius)) / static_cast<float>(2 * radius);
        const int half = static_cast<int>(std::lround(t * radius));
        for (int x = cx - half; x <= cx + half; ++x) set(y, x, c);
    }
}

void save_ppm(const std::string& path, const Image& img) {
    check(img.h > 0 && img.w > 0, "save_ppm: empty image");
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        check(f.good(), "save_ppm: cannot open ", tmp);
        f << "P6\n" << img.w << " " << img.h << "\n255\n";
        std::vector<unsigned char> row(static_cast<size_t>(img.w) * 3);
        for (int y = 0; y < img.h; ++y) {
            for (int x = 0; x < img.w; ++x) {
                for (int c = 0; c < 3; ++c) {
                    const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
                    row[static_cast<size_t>(x * 3 + c)] =
                        static_cast<unsigned char>(std::lround(v * 255.0f));
                }
            }
            f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
        }
        check(f.good(), "save_ppm: write failed for ", tmp);
    }
    check(std::rename(tmp.c_str(), path.c_str()) == 0, "save_ppm: rename to ", path, " failed");
}

Image load_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "load_ppm: cannot open ", path);
    std::string magic;
    f >> magic;
    check(magic == "P6", "load_ppm: ", path, " is not a P6 file");
    auto next_int = [&]() {
        // Skips whitespace and '#' comment lines.
        while (true) {
            const int c = f.peek();
            if (c == '#') {
                std::string line;
                std::getline(f, line);
            } else if (std::isspace(c)) {
                f.get();
            } else {
                break;
            }
        }
        int v = -1;
        f >> v;
        check(f.good() && v >= 0, "load_ppm: bad header in ", path);
        return v;
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    check(maxval == 255, "load_ppm: unsupported maxval ", maxval, " in ", path);
    f.get();  // single whitespace after maxval
    Image img = Image::filled(h, w, {});
    std::vector<unsigned char> buf(static_cast<size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    check(f.gcount() == static_cast<std::streamsize>(buf.size()), "load_ppm: truncated pixel data in ",
          path);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(c, y, x) =
                    static_cast<float>(buf[static_cast<size_t>((y * w + x) * 3 + c)]) / 255.0f;
            }
        }
    }
    return img;
}

}  // namespace lrr
