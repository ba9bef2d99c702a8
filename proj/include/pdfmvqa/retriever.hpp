// The multimodal multi-page retriever and its variants. A shared
// self-attention encoder contextualizes [question ; (patches) ; entities],
// a cross-attention decoder reads the entity stream against the question,
// and a per-entity binary head decides answer-set membership. Variants bolt
// on an RoI contextualizer over region visuals, an image-patch stream over a
// page composite, or a joint-grained decoder that enriches entity text
// representations with fine-grained token memory.
#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdfmvqa/docmodel.hpp"
#include "pdfmvqa/featbank.hpp"
#include "pdfmvqa/image.hpp"
#include "pdfmvqa/nn.hpp"

namespace pdfmvqa::retriever {

enum class Variant { Base, Roi, Patch, JointGrained };
enum class HostVariant { Base, Roi, Patch };
enum class PageGating { FullDocument, PageRangeWindow };
enum class JgTextSource { ContextThenEntities, ContextOnly, None };

inline const char* to_string(Variant v) {
    switch (v) {
        case Variant::Base: return "base";
        case Variant::Roi: return "roi";
        case Variant::Patch: return "patch";
        case Variant::JointGrained: return "joint_grained";
    }
    return "?";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "base") return Variant::Base;
    if (s == "roi") return Variant::Roi;
    if (s == "patch") return Variant::Patch;
    if (s == "joint_grained" || s == "jg") return Variant::JointGrained;
    throw std::invalid_argument("unknown variant: " + s);
}

struct RetrieverConfig {
    int encoder_layers = 6;
    int decoder_layers = 6;
    int heads = 8;
    int hidden = 768;
    int max_entities = 200;
    int max_question_tokens = 100;
    Variant variant = Variant::Base;
    HostVariant jg_host = HostVariant::Base;
    int fine_grained_cap = 2048;
    PageGating page_gating = PageGating::PageRangeWindow;
    JgTextSource jg_text_source = JgTextSource::ContextThenEntities;
    int ffn_multiplier = 4;
    int roi_layers = 6;
    bool roi_layout_aware = false;
    int jg_layers = 2;
    int patch_grid = 8;
    bool layer_norm = true;  // disabled only by ablation harnesses
    std::uint64_t seed = 0;

    void validate() const {
        if (hidden <= 0 || heads <= 0 || hidden % heads != 0) {
            throw std::invalid_argument("hidden must be a positive multiple of heads");
        }
        if (max_entities <= 0 || max_question_tokens <= 0 || fine_grained_cap <= 0) {
            throw std::invalid_argument("sequence caps must be positive");
        }
        if (encoder_layers <= 0 || decoder_layers <= 0) {
            throw std::invalid_argument("layer counts must be positive");
        }
    }

    bool uses_roi() const {
        return variant == Variant::Roi ||
               (variant == Variant::JointGrained && jg_host == HostVariant::Roi);
    }
    bool uses_patch() const {
        return variant == Variant::Patch ||
               (variant == Variant::JointGrained && jg_host == HostVariant::Patch);
    }
    bool uses_jg() const { return variant == Variant::JointGrained; }
};

inline nlohmann::json to_json(const RetrieverConfig& c) {
    return nlohmann::json{{"encoder_layers", c.encoder_layers},
                          {"decoder_layers", c.decoder_layers},
                          {"heads", c.heads},
                          {"hidden", c.hidden},
                          {"max_entities", c.max_entities},
                          {"max_question_tokens", c.max_question_tokens},
                          {"variant", to_string(c.variant)},
                          {"jg_host", c.jg_host == HostVariant::Base
                                          ? "base"
                                          : (c.jg_host == HostVariant::Roi ? "roi" : "patch")},
                          {"fine_grained_cap", c.fine_grained_cap},
                          {"page_gating", c.page_gating == PageGating::FullDocument
                                              ? "full_document"
                                              : "page_range_window"},
                          {"jg_text_source",
                           c.jg_text_source == JgTextSource::None
                               ? "none"
                               : (c.jg_text_source == JgTextSource::ContextOnly
                                      ? "context"
                                      : "context_then_entities")},
                          {"ffn_multiplier", c.ffn_multiplier},
                          {"roi_layers", c.roi_layers},
                          {"roi_layout_aware", c.roi_layout_aware},
                          {"jg_layers", c.jg_layers},
                          {"patch_grid", c.patch_grid},
                          {"layer_norm", c.layer_norm},
                          {"seed", c.seed}};
}

inline RetrieverConfig config_from_json(const nlohmann::json& j) {
    RetrieverConfig c;
    c.encoder_layers = j.at("encoder_layers").get<int>();
    c.decoder_layers = j.at("decoder_layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.max_entities = j.at("max_entities").get<int>();
    c.max_question_tokens = j.at("max_question_tokens").get<int>();
    c.variant = variant_from_string(j.at("variant").get<std::string>());
    std::string host = j.at("jg_host").get<std::string>();
    c.jg_host = host == "base" ? HostVariant::Base
                               : (host == "roi" ? HostVariant::Roi : HostVariant::Patch);
    c.fine_grained_cap = j.at("fine_grained_cap").get<int>();
    c.page_gating = j.at("page_gating").get<std::string>() == "full_document"
                        ? PageGating::FullDocument
                        : PageGating::PageRangeWindow;
    std::string src = j.at("jg_text_source").get<std::string>();
    c.jg_text_source = src == "none" ? JgTextSource::None
                                     : (src == "context" ? JgTextSource::ContextOnly
                                                         : JgTextSource::ContextThenEntities);
    c.ffn_multiplier = j.at("ffn_multiplier").get<int>();
    c.roi_layers = j.at("roi_layers").get<int>();
    c.roi_layout_aware = j.at("roi_layout_aware").get<bool>();
    c.jg_layers = j.at("jg_layers").get<int>();
    c.patch_grid = j.at("patch_grid").get<int>();
    c.layer_norm = j.at("layer_norm").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Pluggable adapters
// ---------------------------------------------------------------------------

// Frozen adapter interface over region visuals. The trainable in-model
// contextualizer stack is used when no adapter is plugged in.
class RoiContextualizer {
  public:
    virtual ~RoiContextualizer() = default;
    virtual std::vector<featbank::Vec> contextualize(
        const std::vector<featbank::Vec>& question_tokens,
        const std::vector<featbank::Vec>& visuals,
        const std::vector<std::array<double, 4>>* bboxes) = 0;
    virtual std::string name() const = 0;
};

class IdentityRoiContextualizer : public RoiContextualizer {
  public:
    std::vector<featbank::Vec> contextualize(const std::vector<featbank::Vec>&,
                                             const std::vector<featbank::Vec>& visuals,
                                             const std::vector<std::array<double, 4>>*) override {
        return visuals;
    }
    std::string name() const override { return "roi-identity"; }
};

// Deterministic mixing stub: every output blends its input with the visual
// mean and a question-derived offset.
class StubRoiContextualizer : public RoiContextualizer {
  public:
    std::vector<featbank::Vec> contextualize(
        const std::vector<featbank::Vec>& question_tokens,
        const std::vector<featbank::Vec>& visuals,
        const std::vector<std::array<double, 4>>* bboxes) override {
        if (visuals.empty()) throw std::invalid_argument("contextualize: empty visual set");
        featbank::Vec mean(visuals[0].size(), 0.0);
        for (const auto& v : visuals) {
            for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i] / visuals.size();
        }
        double q_offset = 0.0;
        for (const auto& q : question_tokens) {
            for (std::size_t i = 0; i < std::min<std::size_t>(q.size(), 16); ++i) q_offset += q[i];
        }
        q_offset *= 1e-3;
        std::vector<featbank::Vec> out = visuals;
        for (std::size_t n = 0; n < out.size(); ++n) {
            double geo = bboxes ? (*bboxes)[n][0] + (*bboxes)[n][1] : 0.0;
            for (std::size_t i = 0; i < out[n].size(); ++i) {
                out[n][i] = 0.5 * out[n][i] + 0.5 * mean[i] + q_offset + 1e-3 * geo;
            }
        }
        return out;
    }
    std::string name() const override { return "roi-stub"; }
};

struct PatchEmbedding {
    std::vector<featbank::Vec> patches;  // grid_h * grid_w rows, hidden-d
    std::vector<featbank::Vec> question_tokens;
    int grid_h = 0;
    int grid_w = 0;
};

class PatchEmbedder {
  public:
    virtual ~PatchEmbedder() = default;
    virtual PatchEmbedding embed(const image::PageImage& composite,
                                 const std::string& question) = 0;
    virtual std::string name() const = 0;
};

// Grid-average patches plus hashed question tokens, both at the retriever's
// hidden width.
class StubPatchEmbedder : public PatchEmbedder {
  public:
    explicit StubPatchEmbedder(int hidden, int grid = 8, int cell = 8)
        : hidden_(hidden), grid_(grid), cell_(cell) {}

    PatchEmbedding embed(const image::PageImage& composite, const std::string& question) override {
        image::PageImage resized = image::resize(composite, grid_ * cell_, grid_ * cell_);
        PatchEmbedding out;
        out.grid_h = grid_;
        out.grid_w = grid_;
        const featbank::Vec weights =
            featbank::detail::seeded_vector(0x9a7c5ull, hidden_);
        for (int gy = 0; gy < grid_; ++gy) {
            for (int gx = 0; gx < grid_; ++gx) {
                double stats[5] = {0, 0, 0, static_cast<double>(gx) / grid_,
                                   static_cast<double>(gy) / grid_};
                for (int y = gy * cell_; y < (gy + 1) * cell_; ++y) {
                    for (int x = gx * cell_; x < (gx + 1) * cell_; ++x) {
                        const std::uint8_t* p = resized.pixel(x, y);
                        stats[0] += p[0] / 255.0;
                        stats[1] += p[1] / 255.0;
                        stats[2] += p[2] / 255.0;
                    }
                }
                for (int ch = 0; ch < 3; ++ch) stats[ch] /= cell_ * cell_;
                featbank::Vec row(static_cast<std::size_t>(hidden_));
                for (int i = 0; i < hidden_; ++i) {
                    row[static_cast<std::size_t>(i)] =
                        stats[i % 5] * weights[static_cast<std::size_t>(i)];
                }
                out.patches.push_back(std::move(row));
            }
        }
        std::istringstream ss(question);
        std::string tok;
        while (ss >> tok) {
            out.question_tokens.push_back(featbank::detail::seeded_vector(
                featbank::detail::fnv1a(tok, 0x51ffull), hidden_));
        }
        return out;
    }

    std::string name() const override { return "patch-stub-v1"; }

  private:
    int hidden_;
    int grid_;
    int cell_;
};

class LongTextEncoder {
  public:
    virtual ~LongTextEncoder() = default;
    // Token representations, 768-d each, at most `cap` of them. Blank text
    // yields an empty sequence.
    virtual std::vector<featbank::Vec> encode(const std::string& text, int cap) = 0;
    virtual std::string name() const = 0;
};

class HashingLongTextEncoder : public LongTextEncoder {
  public:
    std::vector<featbank::Vec> encode(const std::string& text, int cap) override {
        std::vector<featbank::Vec> out;
        std::istringstream ss(text);
        std::string tok;
        while (static_cast<int>(out.size()) < cap && ss >> tok) {
            out.push_back(featbank::detail::seeded_vector(
                featbank::detail::fnv1a(tok, 0xb16b00b5ull), featbank::kTextDim));
        }
        return out;
    }
    std::string name() const override { return "hashing-long-text-v1"; }
};

// Horizontal concatenation on a white canvas of height max(page heights);
// shorter pages sit top-aligned. Resizing to the embedder's input resolution
// happens inside the patch embedder.
inline image::PageImage composite_pages(const std::vector<image::PageImage>& pages) {
    if (pages.empty()) throw std::invalid_argument("composite_pages: empty page list");
    int total_w = 0, max_h = 0;
    double pw = 0, ph = 0;
    for (const auto& p : pages) {
        total_w += p.width;
        max_h = std::max(max_h, p.height);
        pw += p.page_width;
        ph = std::max(ph, p.page_height);
    }
    image::PageImage out = image::PageImage::blank(total_w, max_h, pw, ph);
    int x0 = 0;
    for (const auto& p : pages) {
        for (int y = 0; y < p.height; ++y) {
            for (int x = 0; x < p.width; ++x) {
                const std::uint8_t* src = p.pixel(x, y);
                std::uint8_t* dst = out.pixel(x0 + x, y);
                dst[0] = src[0];
                dst[1] = src[1];
                dst[2] = src[2];
            }
        }
        x0 += p.width;
    }
    return out;
}

struct EncoderSet {
    featbank::TextEncoder* text = nullptr;
    featbank::VisualEncoder* visual = nullptr;
    LongTextEncoder* long_text = nullptr;   // joint-grained variants
    PatchEmbedder* patch = nullptr;         // patch variants
    RoiContextualizer* roi = nullptr;       // optional frozen adapter
};

// Featurized document: record, placeholder page rasters and per-entity
// text/visual vectors in reading order.
struct DocBundle {
    const DocumentRecord* doc = nullptr;
    std::vector<image::PageImage> page_images;
    featbank::DocumentFeatures features;
    std::map<int, std::size_t> feature_index;  // object_id -> row

    static DocBundle featurize(const DocumentRecord& doc, featbank::TextEncoder& text,
                               featbank::VisualEncoder& visual) {
        DocBundle b;
        b.doc = &doc;
        for (std::size_t p = 0; p < doc.pages.size(); ++p) {
            b.page_images.push_back(image::render_placeholder_page(doc, static_cast<int>(p)));
        }
        b.features.document_id = doc.document_id;
        b.features.text_version = text.version();
        b.features.visual_version = visual.version();
        int position = 0;
        for (const DocPage& page : doc.pages) {
            for (int id : page.entity_ids) {
                const DocEntity& e = doc.entity(id);
                featbank::EntityFeatures f;
                f.text = featbank::encode_entity_text(e, text);
                f.visual = visual.encode_region(
                    b.page_images[static_cast<std::size_t>(e.page_index)], e.bbox);
                f.bbox = e.bbox;
                f.page_width = page.width;
                f.page_height = page.height;
                f.category = e.category;
                f.position = position++;
                b.feature_index[id] = b.features.entities.size();
                b.features.object_ids.push_back(id);
                b.features.entities.push_back(std::move(f));
            }
        }
        return b;
    }
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct ForwardResult {
    PredictionSet prediction;
    nn::Tensor entity_logits;       // (presented, 2), overflow slot removed
    nn::Tensor entity_embeddings;   // decoder output rows for presented entities
    nn::Tensor question_encoded;    // encoder output rows for the question segment
    std::vector<int> presented_ids;
    bool truncated = false;
    bool unscorable = false;        // some gold id fell outside the model input
    bool jg_empty_memory = false;
};

class Retriever {
  public:
    explicit Retriever(RetrieverConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        nn::Initializer ini(cfg_.seed, 0.02);
        build_params(ini);
    }

    const RetrieverConfig& config() const { return cfg_; }
    nn::ParamStore& param_store() { return store_; }
    const featbank::ProjectionParams& projections() const { return proj_; }

    // Eval-mode forward pass for one question.
    ForwardResult predict(const DocBundle& bundle, const QASample& sample,
                          const EncoderSet& encoders) {
        nn::Graph g;
        Build b = build(g, bundle, sample, encoders);
        return finish(g, b, sample);
    }

    // Builds the graph, runs backward from summed entity cross-entropy and
    // accumulates parameter gradients. Returns the summed loss and the
    // number of scored entities via out-params for batch averaging.
    nn::Scalar accumulate_gradients(const DocBundle& bundle, const QASample& sample,
                                    const EncoderSet& encoders, int* scored_entities,
                                    nn::Scalar positive_weight = 1.0) {
        nn::Graph g;
        Build b = build(g, bundle, sample, encoders);
        auto [loss_id, n] = loss_node(g, b, sample, positive_weight);
        if (scored_entities) *scored_entities = n;
        g.backward(loss_id);
        return g.value(loss_id).at(0, 0);
    }

    // Forward-only loss (gradient checks, validation curves).
    nn::Scalar loss_value(const DocBundle& bundle, const QASample& sample,
                          const EncoderSet& encoders, int* scored_entities = nullptr,
                          nn::Scalar positive_weight = 1.0) {
        nn::Graph g;
        Build b = build(g, bundle, sample, encoders);
        auto [loss_id, n] = loss_node(g, b, sample, positive_weight);
        if (scored_entities) *scored_entities = n;
        return g.value(loss_id).at(0, 0);
    }

    // --- standalone stage ops (value level, used directly by tests) ---

    // One shared self-attention encoder over [Q ; P ; E] with segment-type
    // embeddings; returns the per-segment output slices. `entity_pad` marks
    // that many trailing entity rows as masked padding.
    struct EncodedStreams {
        nn::Tensor question;
        nn::Tensor patches;
        nn::Tensor entities;
    };
    EncodedStreams encode_multimodal(const nn::Tensor& q, const nn::Tensor* p,
                                     const nn::Tensor& e, int entity_pad = 0) {
        if (q.rows > cfg_.max_question_tokens) {
            throw std::invalid_argument("encode_multimodal: question exceeds cap");
        }
        if (e.rows > cfg_.max_entities + 1) {
            throw std::invalid_argument("encode_multimodal: entity sequence exceeds cap");
        }
        nn::Graph g;
        nn::Mask mask;
        auto enc = encode_in_graph(g, g.constant(q), p ? std::optional<nn::Graph::Id>(g.constant(*p))
                                                       : std::nullopt,
                                   g.constant(e), entity_pad, &mask);
        EncodedStreams out;
        out.question = g.value(enc.question);
        if (p) out.patches = g.value(*enc.patches);
        out.entities = g.value(enc.entities);
        return out;
    }

    // Cross-attention decoder: entity stream as target, question as memory.
    nn::Tensor decode_entities(const nn::Tensor& entities, const nn::Tensor& question,
                               int entity_pad = 0) {
        if (entities.rows == 0) {
            throw std::invalid_argument("decode_entities: empty entity sequence");
        }
        nn::Graph g;
        nn::Mask self_mask(static_cast<std::size_t>(entities.rows), 1);
        for (int i = 0; i < entity_pad; ++i) {
            self_mask[static_cast<std::size_t>(entities.rows - 1 - i)] = 0;
        }
        auto id = decode_in_graph(g, g.constant(entities), g.constant(question),
                                  entity_pad ? &self_mask : nullptr);
        return g.value(id);
    }

    // Linear head over decoder outputs; argmax picks the predicted set.
    std::pair<PredictionSet, nn::Tensor> recognize(const nn::Tensor& decoded,
                                                   const std::vector<int>& object_ids,
                                                   std::int64_t question_id = 0) {
        nn::Graph g;
        nn::Tensor logits = g.value(head_.apply(g, g.constant(decoded)));
        PredictionSet pred;
        pred.question_id = question_id;
        for (int r = 0; r < logits.rows && r < static_cast<int>(object_ids.size()); ++r) {
            if (logits.at(r, 1) > logits.at(r, 0)) {
                pred.predicted_ids.insert(object_ids[static_cast<std::size_t>(r)]);
            }
        }
        return {pred, logits};
    }

    // V' from a frozen adapter; cardinality is preserved by contract.
    static std::vector<featbank::Vec> roi_contextualize(
        const std::vector<featbank::Vec>& question_tokens,
        const std::vector<featbank::Vec>& visuals,
        const std::vector<std::array<double, 4>>* bboxes, RoiContextualizer& ctx) {
        if (visuals.empty()) throw std::invalid_argument("roi_contextualize: empty visual set");
        auto out = ctx.contextualize(question_tokens, visuals, bboxes);
        if (out.size() != visuals.size()) {
            throw std::runtime_error("roi contextualizer changed the visual-set cardinality");
        }
        return out;
    }

    // Fine-grained enhancement of entity text representations. Source = T
    // rows, memory = long-text tokens; empty memory passes T through
    // unchanged (the caller sees the flag in ForwardResult).
    nn::Tensor joint_grained_enhance(const nn::Tensor& entity_text,
                                     const std::vector<featbank::Vec>& tokens) {
        if (entity_text.rows == 0) {
            throw std::invalid_argument("joint_grained_enhance: empty entity text set");
        }
        if (tokens.empty()) return entity_text;
        nn::Graph g;
        auto id = jg_in_graph(g, g.constant(entity_text), g.constant(vecs_to_tensor(tokens)));
        return g.value(id);
    }

    // --- checkpointing ---

    void save_checkpoint(const std::filesystem::path& path,
                         const std::map<std::string, std::string>& encoder_versions) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
        nlohmann::json header;
        header["format"] = 1;
        header["config"] = to_json(cfg_);
        header["encoders"] = encoder_versions;
        std::string header_text = header.dump();
        os.write(kMagic, sizeof(kMagic));
        auto hlen = static_cast<std::uint64_t>(header_text.size());
        os.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
        os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
        auto n = static_cast<std::uint32_t>(store_.all().size());
        os.write(reinterpret_cast<const char*>(&n), sizeof(n));
        for (const nn::Param* p : store_.all()) {
            auto name_len = static_cast<std::uint32_t>(p->name.size());
            os.write(reinterpret_cast<const char*>(&name_len), sizeof(name_len));
            os.write(p->name.data(), name_len);
            std::uint32_t rows = static_cast<std::uint32_t>(p->value.rows);
            std::uint32_t cols = static_cast<std::uint32_t>(p->value.cols);
            os.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
            os.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
            os.write(reinterpret_cast<const char*>(p->value.data.data()),
                     static_cast<std::streamsize>(p->value.size() * sizeof(nn::Scalar)));
        }
    }

    struct LoadedCheckpoint {
        std::unique_ptr<Retriever> model;
        std::map<std::string, std::string> encoder_versions;
    };

    static LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
        char magic[8];
        is.read(magic, sizeof(magic));
        if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
            throw std::runtime_error(path.string() + ": not a retriever checkpoint");
        }
        std::uint64_t hlen = 0;
        is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
        std::string header_text(hlen, '\0');
        is.read(header_text.data(), static_cast<std::streamsize>(hlen));
        nlohmann::json header = nlohmann::json::parse(header_text);
        LoadedCheckpoint out;
        out.model = std::make_unique<Retriever>(config_from_json(header.at("config")));
        for (const auto& [k, v] : header.at("encoders").items()) {
            out.encoder_versions[k] = v.get<std::string>();
        }
        std::uint32_t n = 0;
        is.read(reinterpret_cast<char*>(&n), sizeof(n));
        if (n != out.model->store_.all().size()) {
            throw std::runtime_error("checkpoint/config mismatch: expected " +
                                     std::to_string(out.model->store_.all().size()) +
                                     " tensors, file has " + std::to_string(n));
        }
        for (std::uint32_t i = 0; i < n; ++i) {
            std::uint32_t name_len = 0;
            is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
            std::string name(name_len, '\0');
            is.read(name.data(), name_len);
            std::uint32_t rows = 0, cols = 0;
            is.read(reinterpret_cast<char*>(&rows), sizeof(rows));
            is.read(reinterpret_cast<char*>(&cols), sizeof(cols));
            nn::Param* p = out.model->store_.find(name);
            if (!p) throw std::runtime_error("checkpoint has unknown tensor " + name);
            if (p->value.rows != static_cast<int>(rows) ||
                p->value.cols != static_cast<int>(cols)) {
                throw std::runtime_error("checkpoint/config mismatch on tensor " + name);
            }
            is.read(reinterpret_cast<char*>(p->value.data.data()),
                    static_cast<std::streamsize>(p->value.size() * sizeof(nn::Scalar)));
            if (!is) throw std::runtime_error("checkpoint truncated at tensor " + name);
        }
        return out;
    }

    // Refuses mismatched encoder versions for the encoders the variant uses.
    static void verify_encoders(const std::map<std::string, std::string>& stored,
                                const EncoderSet& encoders) {
        auto check = [&](const char* key, const std::string& got) {
            auto it = stored.find(key);
            if (it != stored.end() && it->second != got) {
                throw std::runtime_error(std::string("checkpoint encoder mismatch for ") + key +
                                         ": stored " + it->second + ", provided " + got);
            }
        };
        if (encoders.text) check("text", encoders.text->version());
        if (encoders.visual) check("visual", encoders.visual->version());
        if (encoders.long_text) check("long_text", encoders.long_text->name());
        if (encoders.patch) check("patch", encoders.patch->name());
    }

  private:
    struct Build {
        nn::Graph::Id question_emb;              // projected question, pre-encoder
        std::optional<nn::Graph::Id> patch_emb;  // projected patches, pre-encoder
        nn::Graph::Id decoded;                   // decoder output rows
        nn::Graph::Id logits;                    // (n_rows, 2) incl. overflow slot
        nn::Graph::Id question_encoded;          // encoder output, question slice
        std::vector<int> presented_ids;
        bool truncated = false;
        bool jg_empty = false;
    };

    struct EncodedIds {
        nn::Graph::Id question;
        std::optional<nn::Graph::Id> patches;
        nn::Graph::Id entities;
    };

    static constexpr char kMagic[8] = {'P', 'M', 'V', 'Q', 'C', 'K', 'P', 'T'};

    void build_params(nn::Initializer& ini) {
        proj_.init(store_, "proj", cfg_.hidden, cfg_.max_entities, ini);
        q_proj_.init(store_, "q_proj", featbank::kTextDim, cfg_.hidden, ini);
        seg_q_.name = "seg.q";
        seg_q_.value = ini.normal(1, cfg_.hidden);
        seg_p_.name = "seg.p";
        seg_p_.value = ini.normal(1, cfg_.hidden);
        seg_e_.name = "seg.e";
        seg_e_.value = ini.normal(1, cfg_.hidden);
        store_.add(&seg_q_);
        store_.add(&seg_p_);
        store_.add(&seg_e_);
        int ffn = cfg_.ffn_multiplier * cfg_.hidden;
        encoder_.resize(static_cast<std::size_t>(cfg_.encoder_layers));
        for (int i = 0; i < cfg_.encoder_layers; ++i) {
            encoder_[static_cast<std::size_t>(i)].init(store_, "enc." + std::to_string(i),
                                                       cfg_.hidden, cfg_.heads, ffn, ini);
        }
        decoder_.resize(static_cast<std::size_t>(cfg_.decoder_layers));
        for (int i = 0; i < cfg_.decoder_layers; ++i) {
            decoder_[static_cast<std::size_t>(i)].init(store_, "dec." + std::to_string(i),
                                                       cfg_.hidden, cfg_.heads, ffn, ini);
        }
        head_.init(store_, "head", cfg_.hidden, 2, ini);
        if (cfg_.uses_roi()) {
            roi_v_in_.init(store_, "roi.v_in", featbank::kVisualDim, cfg_.hidden, ini);
            roi_q_in_.init(store_, "roi.q_in", featbank::kTextDim, cfg_.hidden, ini);
            if (cfg_.roi_layout_aware) {
                roi_bbox_in_.init(store_, "roi.bbox_in", 4, cfg_.hidden, ini);
            }
            roi_stack_.resize(static_cast<std::size_t>(cfg_.roi_layers));
            for (int i = 0; i < cfg_.roi_layers; ++i) {
                roi_stack_[static_cast<std::size_t>(i)].init(
                    store_, "roi.layer." + std::to_string(i), cfg_.hidden, cfg_.heads, ffn, ini);
            }
            roi_out_.init(store_, "roi.out", cfg_.hidden, featbank::kVisualDim, ini);
        }
        if (cfg_.uses_jg()) {
            jg_in_.init(store_, "jg.in", featbank::kTextDim, cfg_.hidden, ini);
            jg_mem_in_.init(store_, "jg.mem_in", featbank::kTextDim, cfg_.hidden, ini);
            jg_stack_.resize(static_cast<std::size_t>(cfg_.jg_layers));
            for (int i = 0; i < cfg_.jg_layers; ++i) {
                jg_stack_[static_cast<std::size_t>(i)].init(
                    store_, "jg.layer." + std::to_string(i), cfg_.hidden, cfg_.heads, ffn, ini);
            }
            jg_out_.init(store_, "jg.out", cfg_.hidden, featbank::kTextDim, ini);
        }
    }

    static nn::Tensor vecs_to_tensor(const std::vector<featbank::Vec>& rows) {
        if (rows.empty()) return nn::Tensor(0, 0);
        nn::Tensor t(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t c = 0; c < rows[r].size(); ++c) {
                t.at(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
            }
        }
        return t;
    }

    EncodedIds encode_in_graph(nn::Graph& g, nn::Graph::Id q_emb,
                               std::optional<nn::Graph::Id> p_emb, nn::Graph::Id e_emb,
                               int entity_pad, nn::Mask* mask_out) {
        int nq = g.value(q_emb).rows;
        int np = p_emb ? g.value(*p_emb).rows : 0;
        int ne = g.value(e_emb).rows;
        std::vector<nn::Graph::Id> parts;
        parts.push_back(g.add_rowvec(q_emb, g.param(seg_q_)));
        if (p_emb) parts.push_back(g.add_rowvec(*p_emb, g.param(seg_p_)));
        parts.push_back(g.add_rowvec(e_emb, g.param(seg_e_)));
        nn::Graph::Id x = g.concat_rows(parts);

        nn::Mask mask(static_cast<std::size_t>(nq + np + ne), 1);
        for (int i = 0; i < entity_pad; ++i) {
            mask[static_cast<std::size_t>(nq + np + ne - 1 - i)] = 0;
        }
        if (mask_out) *mask_out = mask;
        for (const nn::EncoderLayer& layer : encoder_) {
            x = layer.apply(g, x, &mask, cfg_.layer_norm);
        }
        EncodedIds out;
        out.question = g.slice_rows(x, 0, nq);
        if (p_emb) out.patches = g.slice_rows(x, nq, np);
        out.entities = g.slice_rows(x, nq + np, ne);
        return out;
    }

    nn::Graph::Id decode_in_graph(nn::Graph& g, nn::Graph::Id entities, nn::Graph::Id memory,
                                  const nn::Mask* self_mask) {
        nn::Graph::Id x = entities;
        for (const nn::DecoderLayer& layer : decoder_) {
            x = layer.apply(g, x, memory, self_mask, nullptr, cfg_.layer_norm);
        }
        return x;
    }

    nn::Graph::Id jg_in_graph(nn::Graph& g, nn::Graph::Id entity_text, nn::Graph::Id tokens) {
        nn::Graph::Id x = jg_in_.apply(g, entity_text);
        nn::Graph::Id mem = jg_mem_in_.apply(g, tokens);
        for (const nn::DecoderLayer& layer : jg_stack_) {
            x = layer.apply(g, x, mem, nullptr, nullptr, cfg_.layer_norm);
        }
        return jg_out_.apply(g, x);
    }

    // Window entity selection per the page-gating config.
    std::vector<int> gated_ids(const DocBundle& bundle, const QASample& sample) const {
        const DocumentRecord& doc = *bundle.doc;
        int first = 0, last = static_cast<int>(doc.pages.size()) - 1;
        if (cfg_.page_gating == PageGating::PageRangeWindow) {
            first = std::clamp(sample.page_range.first, 0, last);
            last = std::clamp(sample.page_range.second, first, last);
        }
        std::vector<int> ids;
        for (int p = first; p <= last; ++p) {
            for (int id : doc.pages[static_cast<std::size_t>(p)].entity_ids) ids.push_back(id);
        }
        return ids;
    }

    Build build(nn::Graph& g, const DocBundle& bundle, const QASample& sample,
                const EncoderSet& encoders) {
        if (!encoders.text) throw std::invalid_argument("forward: text encoder required");
        Build out;

        std::vector<int> window = gated_ids(bundle, sample);
        if (window.empty()) throw std::invalid_argument("forward: empty entity window");
        out.truncated = static_cast<int>(window.size()) > cfg_.max_entities;
        int keep = std::min<int>(static_cast<int>(window.size()), cfg_.max_entities);
        out.presented_ids.assign(window.begin(), window.begin() + keep);

        // Per-entity constants.
        std::vector<featbank::Vec> visuals, texts;
        std::vector<std::array<double, 4>> norm_boxes;
        nn::Tensor bbox_mat(keep, 4);
        nn::Tensor onehot(keep, kNumEntityCategories);
        for (int i = 0; i < keep; ++i) {
            const featbank::EntityFeatures& f =
                bundle.features.entities[bundle.feature_index.at(out.presented_ids[static_cast<std::size_t>(i)])];
            visuals.push_back(f.visual);
            texts.push_back(f.text);
            std::array<double, 4> nb = {f.bbox.x / f.page_width, f.bbox.y / f.page_height,
                                        f.bbox.w / f.page_width, f.bbox.h / f.page_height};
            norm_boxes.push_back(nb);
            for (int k = 0; k < 4; ++k) bbox_mat.at(i, k) = nb[static_cast<std::size_t>(k)];
            onehot.at(i, static_cast<int>(f.category)) = 1.0;
        }

        // Question token embeddings (768-d) then projected to hidden.
        std::vector<featbank::Vec> q_tokens =
            encoders.text->encode_tokens(sample.question, cfg_.max_question_tokens);
        nn::Graph::Id q768 = g.constant(vecs_to_tensor(q_tokens));
        out.question_emb = q_proj_.apply(g, q768);

        // Visual stream V (possibly contextualized).
        nn::Graph::Id v_node;
        if (cfg_.uses_roi()) {
            if (encoders.roi) {
                auto v_ctx = roi_contextualize(q_tokens, visuals,
                                               cfg_.roi_layout_aware ? &norm_boxes : nullptr,
                                               *encoders.roi);
                v_node = g.constant(vecs_to_tensor(v_ctx));
            } else {
                // Trainable plain self-attention stack over [question ; visuals].
                nn::Graph::Id qin = roi_q_in_.apply(g, q768);
                nn::Graph::Id vin = roi_v_in_.apply(g, g.constant(vecs_to_tensor(visuals)));
                if (cfg_.roi_layout_aware) {
                    vin = g.add(vin, roi_bbox_in_.apply(g, g.constant(bbox_mat)));
                }
                nn::Graph::Id x = g.concat_rows({qin, vin});
                for (const nn::EncoderLayer& layer : roi_stack_) {
                    x = layer.apply(g, x, nullptr, cfg_.layer_norm);
                }
                v_node = roi_out_.apply(
                    g, g.slice_rows(x, static_cast<int>(q_tokens.size()), keep));
            }
        } else {
            v_node = g.constant(vecs_to_tensor(visuals));
        }

        // Textual stream T (possibly enhanced with fine-grained tokens).
        nn::Graph::Id t_node = g.constant(vecs_to_tensor(texts));
        if (cfg_.uses_jg()) {
            if (!encoders.long_text) {
                throw std::invalid_argument("joint-grained variant needs a long-text encoder");
            }
            std::string source_text;
            if (cfg_.jg_text_source != JgTextSource::None) {
                if (sample.context.has_value()) {
                    source_text = *sample.context;
                } else if (cfg_.jg_text_source == JgTextSource::ContextThenEntities) {
                    for (int id : out.presented_ids) {
                        source_text += bundle.doc->entity(id).text;
                        source_text += ' ';
                    }
                }
            }
            auto tokens = encoders.long_text->encode(source_text, cfg_.fine_grained_cap);
            if (tokens.empty()) {
                out.jg_empty = true;  // pass-through, host variant unchanged
            } else {
                t_node = jg_in_graph(g, t_node, g.constant(vecs_to_tensor(tokens)));
            }
        }

        // Fused entity embedding E = vt(concat(V, T)), then + pos + bbox + label.
        nn::Graph::Id fused = g.add_rowvec(
            g.matmul(g.concat_cols({v_node, t_node}), g.param(proj_.vt_w)), g.param(proj_.vt_b));
        nn::Graph::Id pos = g.slice_rows(g.param(proj_.pos_table), 0, keep);
        nn::Graph::Id bbox_term = g.matmul(g.constant(bbox_mat), g.param(proj_.bbox_w));
        nn::Graph::Id label_term = g.matmul(g.constant(onehot), g.param(proj_.label_w));
        nn::Graph::Id e_emb = g.add(g.add(fused, pos), g.add(bbox_term, label_term));
        if (out.truncated) {
            e_emb = g.concat_rows(
                {e_emb, g.slice_rows(g.param(proj_.pos_table), cfg_.max_entities, 1)});
        }

        // Patch stream over the windowed composite.
        std::optional<nn::Graph::Id> p_emb;
        if (cfg_.uses_patch()) {
            if (!encoders.patch) {
                throw std::invalid_argument("patch variant needs a patch embedder");
            }
            int first = 0, last = static_cast<int>(bundle.page_images.size()) - 1;
            if (cfg_.page_gating == PageGating::PageRangeWindow) {
                first = std::clamp(sample.page_range.first, 0, last);
                last = std::clamp(sample.page_range.second, first, last);
            }
            std::vector<image::PageImage> pages(bundle.page_images.begin() + first,
                                                bundle.page_images.begin() + last + 1);
            PatchEmbedding pe = encoders.patch->embed(composite_pages(pages), sample.question);
            p_emb = g.constant(vecs_to_tensor(pe.patches));
        }

        EncodedIds enc = encode_in_graph(g, out.question_emb, p_emb, e_emb, 0, nullptr);
        out.question_encoded = enc.question;
        // Decoder memory is the question embedding stream, not its encoded form.
        out.decoded = decode_in_graph(g, enc.entities, out.question_emb, nullptr);
        out.logits = head_.apply(g, out.decoded);
        return out;
    }

    std::pair<nn::Graph::Id, int> loss_node(nn::Graph& g, const Build& b, const QASample& sample,
                                            nn::Scalar positive_weight = 1.0) {
        int rows = g.value(b.logits).rows;
        auto n_real = static_cast<int>(b.presented_ids.size());
        std::vector<int> labels(static_cast<std::size_t>(rows), 0);
        nn::Mask mask(static_cast<std::size_t>(rows), 0);
        nn::Mask positives(static_cast<std::size_t>(rows), 0);
        bool any_positive = false;
        for (int i = 0; i < n_real; ++i) {
            mask[static_cast<std::size_t>(i)] = 1;  // overflow slot stays masked
            if (sample.answer_objt_ids.count(b.presented_ids[static_cast<std::size_t>(i)])) {
                labels[static_cast<std::size_t>(i)] = 1;
                positives[static_cast<std::size_t>(i)] = 1;
                any_positive = true;
            }
        }
        nn::Graph::Id loss = g.ce2_sum(b.logits, labels, mask);
        if (positive_weight != 1.0 && any_positive) {
            loss = g.add(loss, g.scale(g.ce2_sum(b.logits, labels, positives),
                                       positive_weight - 1.0));
        }
        return {loss, n_real};
    }

    ForwardResult finish(nn::Graph& g, const Build& b, const QASample& sample) {
        ForwardResult out;
        auto n_real = static_cast<int>(b.presented_ids.size());
        const nn::Tensor& logits = g.value(b.logits);
        out.entity_logits = nn::Tensor(n_real, 2);
        out.prediction.question_id = sample.id;
        for (int i = 0; i < n_real; ++i) {
            out.entity_logits.at(i, 0) = logits.at(i, 0);
            out.entity_logits.at(i, 1) = logits.at(i, 1);
            if (logits.at(i, 1) > logits.at(i, 0)) {
                out.prediction.predicted_ids.insert(b.presented_ids[static_cast<std::size_t>(i)]);
            }
        }
        const nn::Tensor& decoded = g.value(b.decoded);
        out.entity_embeddings = nn::Tensor(n_real, decoded.cols);
        for (int i = 0; i < n_real; ++i) {
            for (int c = 0; c < decoded.cols; ++c) {
                out.entity_embeddings.at(i, c) = decoded.at(i, c);
            }
        }
        out.question_encoded = g.value(b.question_encoded);
        out.presented_ids = b.presented_ids;
        out.truncated = b.truncated;
        out.jg_empty_memory = b.jg_empty;
        std::set<int> presented(b.presented_ids.begin(), b.presented_ids.end());
        for (int id : sample.answer_objt_ids) {
            if (!presented.count(id)) out.unscorable = true;
        }
        return out;
    }

    RetrieverConfig cfg_;
    nn::ParamStore store_;
    featbank::ProjectionParams proj_;
    nn::Linear q_proj_;
    nn::Param seg_q_, seg_p_, seg_e_;
    std::vector<nn::EncoderLayer> encoder_;
    std::vector<nn::DecoderLayer> decoder_;
    nn::Linear head_;
    nn::Linear roi_q_in_, roi_v_in_, roi_bbox_in_, roi_out_;
    std::vector<nn::EncoderLayer> roi_stack_;
    nn::Linear jg_in_, jg_mem_in_, jg_out_;
    std::vector<nn::DecoderLayer> jg_stack_;
};

// Desk-scale geometry for CPU-only runs; the constructor default mirrors the
// full-scale reference setting (6 layers / 8 heads / 768 hidden).
inline RetrieverConfig desk_scale_config(Variant variant = Variant::Base,
                                         std::uint64_t seed = 0) {
    RetrieverConfig cfg;
    cfg.encoder_layers = 2;
    cfg.decoder_layers = 2;
    cfg.heads = 4;
    cfg.hidden = 128;
    cfg.max_entities = 32;
    cfg.max_question_tokens = 24;
    cfg.fine_grained_cap = 256;
    cfg.ffn_multiplier = 2;
    cfg.roi_layers = 2;
    cfg.jg_layers = 1;
    cfg.patch_grid = 4;
    cfg.variant = variant;
    cfg.seed = seed;
    return cfg;
}

}  // namespace pdfmvqa::retriever
