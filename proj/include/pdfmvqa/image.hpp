// Tiny RGB image type for page renderings, region crops and composites.
// Placeholder page renderings draw entity boxes as flat category-colored
// rectangles; they stand in for real page rasters in CPU-only runs.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pdfmvqa/docmodel.hpp"

namespace pdfmvqa::image {

struct PageImage {
    int width = 0;
    int height = 0;
    double page_width = 0;   // page units spanned by the pixel buffer
    double page_height = 0;
    std::vector<std::uint8_t> rgb;  // 3 * width * height, row-major

    static PageImage blank(int w, int h, double pw, double ph, std::uint8_t fill = 255) {
        PageImage img;
        img.width = w;
        img.height = h;
        img.page_width = pw;
        img.page_height = ph;
        img.rgb.assign(static_cast<std::size_t>(3) * w * h, fill);
        return img;
    }

    std::uint8_t* pixel(int x, int y) {
        return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    const std::uint8_t* pixel(int x, int y) const {
        return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
};

inline void fill_rect(PageImage& img, int x0, int y0, int x1, int y1, std::uint8_t r,
                      std::uint8_t g, std::uint8_t b) {
    x0 = std::clamp(x0, 0, img.width);
    x1 = std::clamp(x1, 0, img.width);
    y0 = std::clamp(y0, 0, img.height);
    y1 = std::clamp(y1, 0, img.height);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            std::uint8_t* p = img.pixel(x, y);
            p[0] = r;
            p[1] = g;
            p[2] = b;
        }
    }
}

// Deterministic flat-color rendering of a page's entity layout.
inline PageImage render_placeholder_page(const DocPage& page,
                                         const std::vector<const DocEntity*>& entities,
                                         int max_dim = 256) {
    if (page.width <= 0 || page.height <= 0) {
        throw std::invalid_argument("render_placeholder_page: bad page size");
    }
    double scale = max_dim / std::max(page.width, page.height);
    int w = std::max(1, static_cast<int>(std::lround(page.width * scale)));
    int h = std::max(1, static_cast<int>(std::lround(page.height * scale)));
    PageImage img = PageImage::blank(w, h, page.width, page.height);
    for (const DocEntity* e : entities) {
        auto c = static_cast<int>(e->category);
        auto r8 = static_cast<std::uint8_t>(40 + 22 * c);
        auto g8 = static_cast<std::uint8_t>(230 - 18 * c);
        auto b8 = static_cast<std::uint8_t>(90 + 15 * c);
        fill_rect(img, static_cast<int>(e->bbox.x * scale), static_cast<int>(e->bbox.y * scale),
                  static_cast<int>(e->bbox.right() * scale),
                  static_cast<int>(e->bbox.bottom() * scale), r8, g8, b8);
    }
    return img;
}

inline PageImage render_placeholder_page(const DocumentRecord& doc, int page_index,
                                         int max_dim = 256) {
    const DocPage& page = doc.pages.at(static_cast<std::size_t>(page_index));
    std::vector<const DocEntity*> entities;
    for (int id : page.entity_ids) entities.push_back(&doc.entity(id));
    return render_placeholder_page(page, entities, max_dim);
}

// Nearest-neighbour resize.
inline PageImage resize(const PageImage& src, int new_w, int new_h) {
    if (new_w <= 0 || new_h <= 0) throw std::invalid_argument("resize: bad target size");
    PageImage out = PageImage::blank(new_w, new_h, src.page_width, src.page_height);
    for (int y = 0; y < new_h; ++y) {
        int sy = std::min(src.height - 1, y * src.height / new_h);
        for (int x = 0; x < new_w; ++x) {
            int sx = std::min(src.width - 1, x * src.width / new_w);
            const std::uint8_t* p = src.pixel(sx, sy);
            std::uint8_t* q = out.pixel(x, y);
            q[0] = p[0];
            q[1] = p[1];
            q[2] = p[2];
        }
    }
    return out;
}

}  // namespace pdfmvqa::image
