// Per-entity input representation: pooled 768-d text vectors, 2048-d region
// visuals, the learned bbox/label/positional projections and the fused
// entity embedding sequence the retriever consumes. Pretrained backbones sit
// behind the encoder interfaces; the bundled stubs are pure functions of
// their inputs, which keeps featurization deterministic and CPU-only.
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdfmvqa/docmodel.hpp"
#include "pdfmvqa/image.hpp"
#include "pdfmvqa/nn.hpp"

namespace pdfmvqa::featbank {

inline constexpr int kTextDim = 768;
inline constexpr int kVisualDim = 2048;

using Vec = std::vector<nn::Scalar>;

class TextEncoder {
  public:
    virtual ~TextEncoder() = default;
    virtual Vec encode(const std::string& text) = 0;  // pooled, 768-d
    virtual std::vector<Vec> encode_tokens(const std::string& text, int cap) = 0;
    virtual std::string version() const = 0;
};

class VisualEncoder {
  public:
    virtual ~VisualEncoder() = default;
    virtual Vec encode_region(const image::PageImage& page_image, const BBox& bbox) = 0;
    virtual std::string version() const = 0;
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t seed = 1469598103934665603ull) {
    std::uint64_t h = seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline Vec seeded_vector(std::uint64_t seed, int dim) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<nn::Scalar> dist(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    Vec v(static_cast<std::size_t>(dim));
    for (auto& x : v) x = dist(rng);
    return v;
}

inline bool blank(const std::string& s) {
    for (unsigned char c : s) {
        if (!std::isspace(c)) return false;
    }
    return true;
}

}  // namespace detail

// Deterministic hashing stand-in for a pretrained text backbone: every
// distinct string maps to a fixed pseudo-random unit-scale vector; empty
// text maps to a fixed sentinel.
class HashingTextEncoder : public TextEncoder {
  public:
    Vec encode(const std::string& text) override {
        if (detail::blank(text)) {
            Vec v(kTextDim, 0.0);
            v[0] = 1.0;  // empty-text sentinel
            return v;
        }
        return detail::seeded_vector(detail::fnv1a(text), kTextDim);
    }

    std::vector<Vec> encode_tokens(const std::string& text, int cap) override {
        std::vector<Vec> out;
        std::istringstream ss(text);
        std::string tok;
        while (static_cast<int>(out.size()) < cap && ss >> tok) {
            out.push_back(detail::seeded_vector(detail::fnv1a(tok, 0x9e3779b97f4a7c15ull),
                                                kTextDim));
        }
        if (out.empty()) out.push_back(encode(""));
        return out;
    }

    std::string version() const override { return "hashing-text-v1"; }
};

// Region statistics stand-in for an RoI visual backbone: channel means,
// deviations and 16-bin histograms of the crop, plus the page-relative box,
// expanded to 2048 dimensions by a fixed seeded weighting.
class RegionStatsVisualEncoder : public VisualEncoder {
  public:
    Vec encode_region(const image::PageImage& page_image, const BBox& bbox) override {
        if (page_image.page_width <= 0 || page_image.page_height <= 0) {
            throw std::invalid_argument("encode_region: page image lacks page dimensions");
        }
        double sx = page_image.width / page_image.page_width;
        double sy = page_image.height / page_image.page_height;
        int x0 = std::clamp(static_cast<int>(bbox.x * sx), 0, page_image.width);
        int x1 = std::clamp(static_cast<int>(bbox.right() * sx), 0, page_image.width);
        int y0 = std::clamp(static_cast<int>(bbox.y * sy), 0, page_image.height);
        int y1 = std::clamp(static_cast<int>(bbox.bottom() * sy), 0, page_image.height);

        std::vector<double> stats;
        for (int ch = 0; ch < 3; ++ch) {
            double sum = 0, sum2 = 0;
            std::vector<double> hist(16, 0.0);
            long n = 0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    double v = page_image.pixel(x, y)[ch] / 255.0;
                    sum += v;
                    sum2 += v * v;
                    hist[std::min<std::size_t>(15, static_cast<std::size_t>(v * 16))] += 1;
                    ++n;
                }
            }
            double mean = n ? sum / n : 0.0;
            double var = n ? std::max(0.0, sum2 / n - mean * mean) : 0.0;
            stats.push_back(mean);
            stats.push_back(std::sqrt(var));
            for (double hbin : hist) stats.push_back(n ? hbin / n : 0.0);
        }
        stats.push_back(bbox.x / page_image.page_width);
        stats.push_back(bbox.y / page_image.page_height);
        stats.push_back(bbox.w / page_image.page_width);
        stats.push_back(bbox.h / page_image.page_height);

        const Vec& weights = expansion_weights();
        Vec out(kVisualDim);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = stats[i % stats.size()] * weights[i];
        }
        return out;
    }

    std::string version() const override { return "region-stats-v1"; }

  private:
    static const Vec& expansion_weights() {
        static const Vec w = detail::seeded_vector(0x7601dull, kVisualDim);
        return w;
    }
};

// ---------------------------------------------------------------------------
// Learned projections
// ---------------------------------------------------------------------------

struct EntityFeatures {
    Vec text;    // 768-d
    Vec visual;  // 2048-d
    BBox bbox;
    double page_width = 0;
    double page_height = 0;
    EntityCategory category = EntityCategory::Paragraph;
    int position = 0;  // reading-order rank within the presented sequence
};

// Shapes (hidden = 768 reproduces the reference input representation):
//   vt_proj:   (2048 + 768) -> hidden, with bias (the vision-textual projector)
//   bbox_proj: 4 -> hidden, strictly linear over the page-normalized box
//   label_proj: one row per category, the one-hot projection image
//   pos_table: max_entities + 1 learned rows; the last row is the overflow slot
struct ProjectionParams {
    int hidden = 768;
    int max_entities = 200;
    nn::Param vt_w, vt_b;
    nn::Param bbox_w;
    nn::Param label_w;
    nn::Param pos_table;

    void init(nn::ParamStore& store, const std::string& name, int hidden_dim, int max_ents,
              nn::Initializer& ini) {
        hidden = hidden_dim;
        max_entities = max_ents;
        vt_w.name = name + ".vt.w";
        vt_w.value = ini.normal(kVisualDim + kTextDim, hidden);
        vt_b.name = name + ".vt.b";
        vt_b.value = nn::Tensor::zeros(1, hidden);
        bbox_w.name = name + ".bbox.w";
        bbox_w.value = ini.normal(4, hidden);
        label_w.name = name + ".label.w";
        label_w.value = ini.normal(kNumEntityCategories, hidden);
        pos_table.name = name + ".pos";
        pos_table.value = ini.normal(max_ents + 1, hidden);
        store.add(&vt_w);
        store.add(&vt_b);
        store.add(&bbox_w);
        store.add(&label_w);
        store.add(&pos_table);
    }
};

inline Vec encode_entity_text(const DocEntity& entity, TextEncoder& enc) {
    Vec v = enc.encode(entity.text);
    if (static_cast<int>(v.size()) != kTextDim) {
        throw std::runtime_error("text encoder returned wrong dimension");
    }
    return v;
}

// Box normalized to [0,1]^4 by the page size before the linear map, so the
// projection is invariant under uniform page+box scaling.
inline Vec project_bbox(const BBox& bbox, double page_w, double page_h,
                        const ProjectionParams& params) {
    if (page_w <= 0 || page_h <= 0) throw std::invalid_argument("project_bbox: zero page size");
    double n[4] = {bbox.x / page_w, bbox.y / page_h, bbox.w / page_w, bbox.h / page_h};
    Vec out(static_cast<std::size_t>(params.hidden), 0.0);
    for (int k = 0; k < 4; ++k) {
        for (int j = 0; j < params.hidden; ++j) out[static_cast<std::size_t>(j)] += n[k] * params.bbox_w.value.at(k, j);
    }
    return out;
}

// The category's row of the one-hot projection.
inline Vec embed_label(EntityCategory category, const ProjectionParams& params) {
    Vec out(static_cast<std::size_t>(params.hidden));
    auto row = static_cast<int>(category);
    for (int j = 0; j < params.hidden; ++j) out[static_cast<std::size_t>(j)] = params.label_w.value.at(row, j);
    return out;
}

// E = vt_proj(concat(V, T)) + bias.
inline Vec fuse_entity(const Vec& visual, const Vec& text, const ProjectionParams& params) {
    if (static_cast<int>(visual.size()) != kVisualDim ||
        static_cast<int>(text.size()) != kTextDim) {
        throw std::invalid_argument("fuse_entity: wrong input dimensions");
    }
    Vec out(static_cast<std::size_t>(params.hidden));
    for (int j = 0; j < params.hidden; ++j) {
        double s = params.vt_b.value.at(0, j);
        for (int k = 0; k < kVisualDim; ++k) s += visual[static_cast<std::size_t>(k)] * params.vt_w.value.at(k, j);
        for (int k = 0; k < kTextDim; ++k) {
            s += text[static_cast<std::size_t>(k)] * params.vt_w.value.at(kVisualDim + k, j);
        }
        out[static_cast<std::size_t>(j)] = s;
    }
    return out;
}

struct AssembledInput {
    nn::Tensor rows;       // (len, hidden): E_i + P_i + B_i + L_i (+ overflow row)
    bool truncated = false;
    int presented = 0;     // real entities kept (excludes the overflow slot)
};

// Element i = fused_i + pos_table[i] + bbox_proj_i + label_proj_i. Sequences
// longer than max_entities truncate by reading order and append the learned
// overflow embedding as a final slot.
inline AssembledInput assemble_input(const std::vector<EntityFeatures>& entities,
                                     const ProjectionParams& params) {
    AssembledInput out;
    auto n = static_cast<int>(entities.size());
    int keep = std::min(n, params.max_entities);
    out.truncated = n > params.max_entities;
    out.presented = keep;
    out.rows = nn::Tensor::zeros(keep + (out.truncated ? 1 : 0), params.hidden);
    for (int i = 0; i < keep; ++i) {
        const EntityFeatures& e = entities[static_cast<std::size_t>(i)];
        Vec fused = fuse_entity(e.visual, e.text, params);
        Vec b = project_bbox(e.bbox, e.page_width, e.page_height, params);
        Vec l = embed_label(e.category, params);
        for (int j = 0; j < params.hidden; ++j) {
            out.rows.at(i, j) = fused[static_cast<std::size_t>(j)] + params.pos_table.value.at(i, j) +
                                b[static_cast<std::size_t>(j)] + l[static_cast<std::size_t>(j)];
        }
    }
    if (out.truncated) {
        for (int j = 0; j < params.hidden; ++j) {
            out.rows.at(keep, j) = params.pos_table.value.at(params.max_entities, j);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Feature cache file
// ---------------------------------------------------------------------------

struct DocumentFeatures {
    std::string document_id;
    std::string text_version;
    std::string visual_version;
    std::vector<int> object_ids;
    std::vector<EntityFeatures> entities;  // aligned with object_ids
};

namespace detail {

inline void put_string(std::ostream& os, const std::string& s) {
    auto len = static_cast<std::uint32_t>(s.size());
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
    std::uint32_t len = 0;
    is.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw std::runtime_error("feature cache truncated");
    return s;
}

inline void put_vec(std::ostream& os, const Vec& v) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(nn::Scalar)));
}

inline Vec get_vec(std::istream& is, int dim) {
    Vec v(static_cast<std::size_t>(dim));
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(nn::Scalar)));
    if (!is) throw std::runtime_error("feature cache truncated");
    return v;
}

inline constexpr char kFeatureMagic[8] = {'P', 'M', 'V', 'Q', 'F', 'E', 'A', 'T'};

}  // namespace detail

inline void write_feature_cache(const DocumentFeatures& feats, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os.write(detail::kFeatureMagic, sizeof(detail::kFeatureMagic));
    detail::put_string(os, feats.document_id);
    detail::put_string(os, feats.text_version);
    detail::put_string(os, feats.visual_version);
    auto n = static_cast<std::uint32_t>(feats.entities.size());
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (std::size_t i = 0; i < feats.entities.size(); ++i) {
        const EntityFeatures& e = feats.entities[i];
        std::int32_t oid = feats.object_ids[i];
        os.write(reinterpret_cast<const char*>(&oid), sizeof(oid));
        auto cat = static_cast<std::int32_t>(e.category);
        os.write(reinterpret_cast<const char*>(&cat), sizeof(cat));
        double geo[8] = {e.bbox.x, e.bbox.y, e.bbox.w, e.bbox.h,
                         e.page_width, e.page_height, static_cast<double>(e.position), 0.0};
        os.write(reinterpret_cast<const char*>(geo), sizeof(geo));
        detail::put_vec(os, e.text);
        detail::put_vec(os, e.visual);
    }
}

// Returns nothing when the cache belongs to a different document or encoder
// version; the caller then re-featurizes.
inline std::optional<DocumentFeatures> read_feature_cache(const std::filesystem::path& path,
                                                          const std::string& document_id,
                                                          const std::string& text_version,
                                                          const std::string& visual_version) {
    std::ifstream is(path, std::ios::binary);
    if (!is) return std::nullopt;
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, detail::kFeatureMagic, sizeof(magic)) != 0) {
        throw std::runtime_error(path.string() + ": not a feature cache file");
    }
    DocumentFeatures feats;
    feats.document_id = detail::get_string(is);
    feats.text_version = detail::get_string(is);
    feats.visual_version = detail::get_string(is);
    if (feats.document_id != document_id || feats.text_version != text_version ||
        feats.visual_version != visual_version) {
        return std::nullopt;
    }
    std::uint32_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    for (std::uint32_t i = 0; i < n; ++i) {
        std::int32_t oid = 0, cat = 0;
        is.read(reinterpret_cast<char*>(&oid), sizeof(oid));
        is.read(reinterpret_cast<char*>(&cat), sizeof(cat));
        double geo[8];
        is.read(reinterpret_cast<char*>(geo), sizeof(geo));
        EntityFeatures e;
        e.bbox = BBox{geo[0], geo[1], geo[2], geo[3]};
        e.page_width = geo[4];
        e.page_height = geo[5];
        e.position = static_cast<int>(geo[6]);
        e.category = static_cast<EntityCategory>(cat);
        e.text = detail::get_vec(is, kTextDim);
        e.visual = detail::get_vec(is, kVisualDim);
        feats.object_ids.push_back(oid);
        feats.entities.push_back(std::move(e));
    }
    return feats;
}

}  // namespace pdfmvqa::featbank
