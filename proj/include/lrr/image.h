// image.h — float RGB raster in CHW layout with P6 PPM persistence and the
// small drawing primitives the task renderers need.
#pragma once

#include <string>
#include <vector>

#include "lrr/common.h"

namespace lrr {

struct Rgb {
    float r = 0, g = 0, b = 0;
};

struct Image {
    int h = 0;
    int w = 0;
    std::vector<float> data;  // 3*h*w, CHW, values in [0,1]

    static Image filled(int h, int w, Rgb c);

    float& at(int c, int y, int x) { return data[static_cast<size_t>((c * h + y) * w + x)]; }
    float at(int c, int y, int x) const { return data[static_cast<size_t>((c * h + y) * w + x)]; }

    void set(int y, int x, Rgb c) {
        if (y < 0 || y >= h || x < 0 || x >= w) return;
        at(0, y, x) = c.r;
        at(1, y, x) = c.g;
        at(2, y, x) = c.b;
    }

    // Half-open pixel rectangles; clipped to the image.
    void fill_rect(int y0, int x0, int y1, int x1, Rgb c);
    void fill_circle(int cy, int cx, int radius, Rgb c);
    // Upward-pointing triangle with apex (cy - radius) and base (cy + radius).
    void fill_triangle(int cy, int cx, int radius, Rgb c);
};

void save_ppm(const std::string& path, const Image& img);
Image load_ppm(const std::string& path);

}  // namespace lrr
