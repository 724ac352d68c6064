// attributes.h — the shared object-attribute vocabulary used by all three
// task families, with canonical name and color tables.
#pragma once

#include <array>
#include <string>

#include "lrr/common.h"
#include "lrr/image.h"
#include "lrr/rng.h"

namespace lrr {

enum class Size { small, medium, large };
enum class Material { rubber, metal };
enum class Shape { cube, sphere, cylinder };

inline constexpr std::array<const char*, 3> kSizeNames = {"small", "medium", "large"};
inline constexpr std::array<const char*, 8> kColorNames = {"gray", "red",    "blue", "green",
                                                           "brown", "purple", "cyan", "yellow"};
inline constexpr std::array<const char*, 2> kMaterialNames = {"rubber", "metal"};
inline constexpr std::array<const char*, 3> kShapeNames = {"cube", "sphere", "cylinder"};

inline const char* size_name(Size s) { return kSizeNames[static_cast<size_t>(s)]; }
inline const char* color_name(int c) {
    check(c >= 0 && c < static_cast<int>(kColorNames.size()), "bad color index ", c);
    return kColorNames[static_cast<size_t>(c)];
}
inline const char* material_name(Material m) { return kMaterialNames[static_cast<size_t>(m)]; }
inline const char* shape_name(Shape s) { return kShapeNames[static_cast<size_t>(s)]; }

inline Rgb color_rgb(int c) {
    static constexpr std::array<Rgb, 8> table = {{{0.53f, 0.53f, 0.53f},
                                                  {0.80f, 0.15f, 0.15f},
                                                  {0.16f, 0.30f, 0.84f},
                                                  {0.16f, 0.65f, 0.25f},
                                                  {0.55f, 0.35f, 0.16f},
                                                  {0.55f, 0.25f, 0.70f},
                                                  {0.20f, 0.75f, 0.78f},
                                                  {0.92f, 0.85f, 0.20f}}};
    check(c >= 0 && c < 8, "bad color index ", c);
    return table[static_cast<size_t>(c)];
}

// Attribute tuple shared by blicket objects and gridworld scene objects.
struct ObjectAttrs {
    Size size = Size::small;
    int color = 0;  // index into kColorNames
    Material material = Material::rubber;
    Shape shape = Shape::cube;

    bool operator==(const ObjectAttrs& o) const {
        return size == o.size && color == o.color && material == o.material && shape == o.shape;
    }
    bool operator!=(const ObjectAttrs& o) const { return !(*this == o); }
};

// "medium gray rubber cylinder"
inline std::string attrs_phrase(const ObjectAttrs& a) {
    return std::string(size_name(a.size)) + " " + color_name(a.color) + " " +
           material_name(a.material) + " " + shape_name(a.shape);
}

inline ObjectAttrs random_attrs(Rng& rng) {
    ObjectAttrs a;
    a.size = static_cast<Size>(rng.uniform_int(0, 2));
    a.color = rng.uniform_int(0, 7);
    a.material = static_cast<Material>(rng.uniform_int(0, 1));
    a.shape = static_cast<Shape>(rng.uniform_int(0, 2));
    return a;
}

// Attribute names as they appear in questions and rationales.
inline constexpr std::array<const char*, 4> kAttributeKeys = {"size", "color", "material",
                                                              "shape"};

inline std::string attr_value(const ObjectAttrs& a, const std::string& key) {
    if (key == "size") return size_name(a.size);
    if (key == "color") return color_name(a.color);
    if (key == "material") return material_name(a.material);
    if (key == "shape") return shape_name(a.shape);
    fail("unknown attribute key '", key, "'");
}

inline bool attr_matches(const ObjectAttrs& a, const std::string& key, const std::string& value) {
    return attr_value(a, key) == value;
}

// Draws one object glyph centered at (cy,cx): shape selects the glyph,
// size the radius, color the fill, metal adds a specular dot.
inline void draw_object(Image& img, const ObjectAttrs& a, int cy, int cx, int base_radius) {
    const int radius = base_radius + 2 * static_cast<int>(a.size);
    const Rgb fill = color_rgb(a.color);
    switch (a.shape) {
        case Shape::cube:
            img.fill_rect(cy - radius, cx - radius, cy + radius + 1, cx + radius + 1, fill);
            break;
        case Shape::sphere:
            img.fill_circle(cy, cx, radius, fill);
            break;
        case Shape::cylinder:
            img.fill_triangle(cy, cx, radius, fill);
            break;
    }
    if (a.material == Material::metal) {
        const int r = radius >= 4 ? 1 : 0;
        img.fill_circle(cy - radius / 3, cx - radius / 3, r, {0.98f, 0.98f, 0.98f});
    }
}

}  // namespace lrr
