// Question generation: 1-3 content questions per paragraph and one
// caption-summarised question per table/figure, produced through a pluggable
// text-generation client and filtered by quality heuristics. A deterministic
// template client keeps the whole pass offline and byte-reproducible; a
// remote client speaks a chat-completions-style HTTP endpoint.
#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdfmvqa/dataio.hpp"
#include "pdfmvqa/docmodel.hpp"
#include "pdfmvqa/ingest.hpp"

namespace pdfmvqa::qgen {

class GeneratorError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class GeneratorClient {
  public:
    virtual ~GeneratorClient() = default;
    // Returns at most max_items candidate strings for the prompt.
    virtual std::vector<std::string> generate(const std::string& prompt, int max_items) = 0;
    virtual std::string name() const = 0;
};

// Prompts are versioned data, not code, so a generation record can be
// reproduced from its log alone.
struct PromptConfig {
    std::string version = "prompts-v1";
    std::string paragraph_prompt =
        "Write {n} short content questions about the following paragraph.\n\n{text}";
    std::string summary_prompt = "Summarise the following caption in one sentence.\n\n{text}";
    std::string visual_prompt =
        "Write {n} questions asking a reader to locate the {kind} described by the following "
        "summary.\n\n{text}";

    static std::string fill(std::string tpl, const std::string& key, const std::string& value) {
        auto at = tpl.find(key);
        while (at != std::string::npos) {
            tpl.replace(at, key.size(), value);
            at = tpl.find(key, at + value.size());
        }
        return tpl;
    }
};

// ---------------------------------------------------------------------------
// Sentence splitting and quota
// ---------------------------------------------------------------------------

// Terminal-punctuation sentence split: a run of . ! ? followed by whitespace
// or end of text closes a sentence.
inline std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        cur += c;
        if (c == '.' || c == '!' || c == '?') {
            while (i + 1 < text.size() &&
                   (text[i + 1] == '.' || text[i + 1] == '!' || text[i + 1] == '?')) {
                cur += text[++i];
            }
            bool terminal = i + 1 >= text.size() ||
                            std::isspace(static_cast<unsigned char>(text[i + 1]));
            if (terminal) {
                std::string trimmed = ingest::normalize_text(cur);
                if (!trimmed.empty()) out.push_back(cur);
                cur.clear();
            }
        }
    }
    if (!ingest::normalize_text(cur).empty()) out.push_back(cur);
    return out;
}

// Sentence-count buckets: <=3 -> 1, 4..6 -> 2, >=7 -> 3.
inline int question_quota(const std::string& paragraph_text) {
    if (ingest::normalize_text(paragraph_text).empty()) {
        throw std::invalid_argument("question_quota: empty paragraph text");
    }
    auto n = static_cast<int>(split_sentences(paragraph_text).size());
    if (n <= 3) return 1;
    if (n <= 6) return 2;
    return 3;
}

// ---------------------------------------------------------------------------
// Template client
// ---------------------------------------------------------------------------

// Deterministic stand-in for the remote generation service: shapes questions
// from prompt payloads with fixed templates, rotated by the seed.
class TemplateGenerator : public GeneratorClient {
  public:
    explicit TemplateGenerator(std::uint64_t seed = 0) : seed_(seed) {}

    std::vector<std::string> generate(const std::string& prompt, int max_items) override {
        if (max_items <= 0) return {};
        std::string payload = payload_of(prompt);
        if (payload.empty()) return {};
        if (prompt.find("Summarise") != std::string::npos ||
            prompt.find("Summarize") != std::string::npos) {
            auto sentences = split_sentences(payload);
            return {sentences.empty() ? payload : sentences.front()};
        }
        if (prompt.find("locate the table") != std::string::npos) {
            return {"Can you locate the table comparing " + subject_of(payload, 0) + "?"};
        }
        if (prompt.find("locate the figure") != std::string::npos) {
            return {"Can you locate the graphic that depicts " + subject_of(payload, 0) + "?"};
        }
        static const std::vector<std::string> stems = {
            "What is stated about ", "What does the study report on ", "How is "};
        static const std::vector<std::string> tails = {"?", "?", " described?"};
        auto sentences = split_sentences(payload);
        std::vector<std::string> out;
        for (int k = 0; k < max_items; ++k) {
            std::size_t which = (seed_ + static_cast<std::size_t>(k)) % stems.size();
            std::string subj =
                subject_of(sentences.empty() ? payload
                                             : sentences[static_cast<std::size_t>(k) %
                                                         sentences.size()],
                           k);
            out.push_back(stems[which] + subj + tails[which]);
        }
        return out;
    }

    std::string name() const override { return "template"; }

  private:
    static std::string payload_of(const std::string& prompt) {
        auto at = prompt.rfind("\n\n");
        return at == std::string::npos ? prompt : prompt.substr(at + 2);
    }

    // First content words of a sentence, minus leading determiners.
    static std::string subject_of(const std::string& sentence, int salt) {
        static const std::set<std::string> skip = {"a", "an", "the", "in", "on", "we",
                                                   "it", "this", "these", "those"};
        std::istringstream ss(ingest::normalize_text(sentence));
        std::vector<std::string> words;
        std::string w;
        while (ss >> w) {
            while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.back()))) w.pop_back();
            while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.front()))) {
                w.erase(w.begin());
            }
            if (w.empty()) continue;
            if (words.empty() && skip.count(w)) continue;
            words.push_back(w);
        }
        if (words.empty()) return "the content";
        std::size_t take = std::min<std::size_t>(words.size(), 6 + static_cast<std::size_t>(salt % 2));
        std::string out;
        for (std::size_t i = 0; i < take; ++i) {
            if (i) out += ' ';
            out += words[i];
        }
        return out;
    }

    std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Remote client
// ---------------------------------------------------------------------------

struct RemoteConfig {
    std::string base_url = "http://127.0.0.1:8080";
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-3.5-turbo";
    std::string api_key_env = "PDFMVQA_API_KEY";
    int timeout_sec = 30;
    int max_retries = 2;
};

// Declared here, defined in qgen_remote.hpp to keep httplib out of every
// translation unit that only needs the template path.
class RemoteGenerator;

// ---------------------------------------------------------------------------
// Generation operations
// ---------------------------------------------------------------------------

struct QGenRecord {
    std::set<int> source_entity_ids;
    SuperSection super_section = SuperSection::Other;
    std::string prompt;
    std::vector<std::string> raw_questions;
    std::vector<std::string> kept_questions;
};

inline nlohmann::json to_json(const QGenRecord& r) {
    return nlohmann::json{{"source_entity_ids", r.source_entity_ids},
                          {"super_section", to_string(r.super_section)},
                          {"prompt", r.prompt},
                          {"raw_questions", r.raw_questions},
                          {"kept_questions", r.kept_questions}};
}

inline std::vector<std::string> generate_paragraph_questions(const DocEntity& paragraph,
                                                             int quota, GeneratorClient& client,
                                                             const PromptConfig& prompts = {},
                                                             std::string* prompt_out = nullptr) {
    if (paragraph.category != EntityCategory::Paragraph) {
        throw std::invalid_argument("generate_paragraph_questions: entity is not a Paragraph");
    }
    if (quota < 1 || quota > 3) {
        throw std::invalid_argument("generate_paragraph_questions: quota must be 1..3");
    }
    std::string prompt = PromptConfig::fill(prompts.paragraph_prompt, "{n}",
                                            std::to_string(quota));
    prompt = PromptConfig::fill(prompt, "{text}", paragraph.text);
    if (prompt_out) *prompt_out = prompt;
    std::vector<std::string> out = client.generate(prompt, quota);
    if (out.size() > static_cast<std::size_t>(quota)) {
        out.resize(static_cast<std::size_t>(quota));
    }
    return out;
}

// Single summary, never longer than the caption after normalization.
inline std::string summarize_caption(const std::string& caption_text, GeneratorClient& client,
                                     const PromptConfig& prompts = {}) {
    if (ingest::normalize_text(caption_text).empty()) {
        throw std::invalid_argument("summarize_caption: empty caption");
    }
    std::string prompt = PromptConfig::fill(prompts.summary_prompt, "{text}", caption_text);
    std::vector<std::string> out = client.generate(prompt, 1);
    if (out.empty()) throw GeneratorError("summarize_caption: client returned nothing");
    std::string summary = ingest::normalize_text(out.front());
    std::string norm_caption = ingest::normalize_text(caption_text);
    if (summary.size() > norm_caption.size()) summary = norm_caption;
    return summary;
}

inline std::vector<std::string> generate_visual_questions(const std::string& summary,
                                                          const DocEntity& target_entity,
                                                          GeneratorClient& client,
                                                          const PromptConfig& prompts = {},
                                                          std::string* prompt_out = nullptr) {
    if (target_entity.category != EntityCategory::Table &&
        target_entity.category != EntityCategory::Figure) {
        throw std::invalid_argument("generate_visual_questions: entity is not Table/Figure");
    }
    const char* kind = target_entity.category == EntityCategory::Table ? "table" : "figure";
    std::string prompt = PromptConfig::fill(prompts.visual_prompt, "{n}", "1");
    prompt = PromptConfig::fill(prompt, "{kind}", kind);
    prompt = PromptConfig::fill(prompt, "{text}", summary);
    if (prompt_out) *prompt_out = prompt;
    std::vector<std::string> out = client.generate(prompt, 1);
    if (out.size() > 1) out.resize(1);
    return out;
}

// Quality heuristics: drop normalized duplicates, questions under five
// tokens, non-interrogatives and questions leaking positional wording.
inline std::vector<std::string> filter_questions(const std::vector<std::string>& candidates) {
    static const std::set<std::string> interrogative_leads = {
        "what", "who",  "whom", "where", "when", "why",  "how",  "which", "whose",
        "can",  "could", "do",   "does",  "did",  "is",   "are",  "was",   "were",
        "will", "would", "should", "shall"};
    std::set<std::string> seen;
    std::vector<std::string> kept;
    for (const std::string& q : candidates) {
        std::string norm = ingest::normalize_text(q);
        if (norm.empty() || !seen.insert(norm).second) continue;

        std::istringstream ss(norm);
        std::vector<std::string> tokens;
        std::string tok;
        while (ss >> tok) tokens.push_back(tok);
        if (tokens.size() < 5) continue;

        bool interrogative = norm.find('?') != std::string::npos;
        if (!interrogative) {
            std::string lead = tokens.front();
            while (!lead.empty() && std::ispunct(static_cast<unsigned char>(lead.back()))) {
                lead.pop_back();
            }
            interrogative = interrogative_leads.count(lead) > 0;
        }
        if (!interrogative) continue;

        bool leaks = norm.find("this paragraph") != std::string::npos;
        for (const std::string& t : tokens) {
            std::string bare = t;
            while (!bare.empty() && std::ispunct(static_cast<unsigned char>(bare.back()))) {
                bare.pop_back();
            }
            if (bare == "above" || bare == "below") leaks = true;
        }
        if (leaks) continue;
        kept.push_back(q);
    }
    return kept;
}

// ---------------------------------------------------------------------------
// Corpus driver
// ---------------------------------------------------------------------------

struct QGenOptions {
    PromptConfig prompts;
    int max_in_flight = 1;  // concurrent client calls per document
};

struct QGenOutput {
    std::vector<dataio::SplitRow> rows;
    std::vector<QGenRecord> records;
};

namespace detail {

struct ParagraphGroup {
    std::string section;
    std::string text;
    std::vector<int> ids;  // all split-parts, ascending
};

// Split-parts of one paragraph share their section tag and canonical text.
inline std::vector<ParagraphGroup> paragraph_groups(const DocumentRecord& doc) {
    std::vector<ParagraphGroup> groups;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    for (const DocPage& page : doc.pages) {
        for (int id : page.entity_ids) {
            const DocEntity& e = doc.entity(id);
            if (e.category != EntityCategory::Paragraph) continue;
            auto key = std::make_pair(e.section, e.text);
            auto it = index.find(key);
            if (it == index.end()) {
                index[key] = groups.size();
                groups.push_back(ParagraphGroup{e.section, e.text, {id}});
            } else {
                groups[it->second].ids.push_back(id);
            }
        }
    }
    return groups;
}

// Fallback section tag for stores lacking the optional per-object field:
// the most recent Section entity in reading order.
inline std::string effective_section(const DocumentRecord& doc, const DocEntity& e) {
    if (!e.section.empty()) return e.section;
    std::string current;
    for (const DocPage& page : doc.pages) {
        for (int id : page.entity_ids) {
            const DocEntity& other = doc.entity(id);
            if (other.object_id > e.object_id) return ingest::normalize_text(current);
            if (other.category == EntityCategory::Section) current = other.text;
        }
    }
    return ingest::normalize_text(current);
}

inline std::pair<int, int> section_span(const DocumentRecord& doc, const std::string& section,
                                        int fallback_page) {
    int lo = 1 << 30, hi = -1;
    for (const auto& [id, e] : doc.entities) {
        if (!section.empty() && e.section == section) {
            lo = std::min(lo, e.page_index);
            hi = std::max(hi, e.page_index);
        }
    }
    if (hi < 0) return {fallback_page, fallback_page};
    return {lo, hi};
}

inline std::string section_context(const DocumentRecord& doc, const std::string& section) {
    std::string out;
    std::set<std::string> seen;  // split-parts repeat their canonical text
    for (const DocPage& page : doc.pages) {
        for (int id : page.entity_ids) {
            const DocEntity& e = doc.entity(id);
            if (e.section != section || e.category != EntityCategory::Paragraph) continue;
            if (!seen.insert(e.text).second) continue;
            if (!out.empty()) out += ' ';
            out += e.text;
        }
    }
    return out;
}

// Nearest caption of the matching kind on the same page.
inline const DocEntity* caption_for(const DocumentRecord& doc, const DocEntity& visual) {
    EntityCategory want = visual.category == EntityCategory::Table
                              ? EntityCategory::TableCaption
                              : EntityCategory::FigureCaption;
    const DocEntity* best = nullptr;
    double best_d = 1e300;
    for (const auto& [id, e] : doc.entities) {
        if (e.category != want || e.page_index != visual.page_index) continue;
        double dy = std::abs((e.bbox.y + e.bbox.h / 2) - (visual.bbox.y + visual.bbox.h / 2));
        if (dy < best_d) {
            best_d = dy;
            best = &e;
        }
    }
    return best;
}

// Runs tasks with at most `cap` in flight; results keep task order.
template <typename R>
std::vector<R> run_bounded(std::vector<std::function<R()>> tasks, int cap) {
    std::vector<R> results(tasks.size());
    if (cap <= 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) results[i] = tasks[i]();
        return results;
    }
    std::size_t next = 0;
    while (next < tasks.size()) {
        std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cap),
                                                  tasks.size() - next);
        std::vector<std::future<R>> futures;
        futures.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            futures.push_back(std::async(std::launch::async, tasks[next + i]));
        }
        for (std::size_t i = 0; i < batch; ++i) results[next + i] = futures[i].get();
        next += batch;
    }
    return results;
}

}  // namespace detail

// Generates the full question set for one document. Question ids are drawn
// from *next_id in deterministic corpus order.
inline QGenOutput generate_for_document(const DocumentRecord& doc, GeneratorClient& client,
                                        const QGenOptions& options, std::int64_t* next_id) {
    QGenOutput out;
    auto groups = detail::paragraph_groups(doc);

    struct VisualTask {
        const DocEntity* visual;
        const DocEntity* caption;
    };
    std::vector<VisualTask> visuals;
    for (const DocPage& page : doc.pages) {
        for (int id : page.entity_ids) {
            const DocEntity& e = doc.entity(id);
            if (e.category != EntityCategory::Table && e.category != EntityCategory::Figure) {
                continue;
            }
            if (const DocEntity* cap = detail::caption_for(doc, e)) {
                visuals.push_back(VisualTask{&e, cap});
            }
        }
    }

    struct GenResult {
        std::string prompt;
        std::vector<std::string> raw;
    };
    std::vector<std::function<GenResult()>> tasks;
    for (const auto& g : groups) {
        tasks.push_back([&doc, &g, &client, &options]() {
            GenResult r;
            int quota = question_quota(g.text);
            r.raw = generate_paragraph_questions(doc.entity(g.ids.front()), quota, client,
                                                 options.prompts, &r.prompt);
            return r;
        });
    }
    for (const auto& v : visuals) {
        tasks.push_back([&v, &client, &options]() {
            GenResult r;
            std::string summary =
                summarize_caption(v.caption->text, client, options.prompts);
            r.raw = generate_visual_questions(summary, *v.visual, client, options.prompts,
                                              &r.prompt);
            return r;
        });
    }
    std::vector<GenResult> results =
        detail::run_bounded<GenResult>(std::move(tasks), options.max_in_flight);

    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& g = groups[gi];
        const GenResult& res = results[gi];
        QGenRecord rec;
        rec.source_entity_ids.insert(g.ids.begin(), g.ids.end());
        rec.super_section = ingest::map_super_section(g.section);
        rec.prompt = res.prompt;
        rec.raw_questions = res.raw;
        rec.kept_questions = filter_questions(res.raw);
        for (const std::string& q : rec.kept_questions) {
            dataio::SplitRow row;
            row.question = q;
            row.document_id = doc.document_id;
            row.answer_objt_id = g.ids;
            row.super_section = g.section;
            row.id = (*next_id)++;
            row.page_range = detail::section_span(doc, g.section,
                                                  doc.entity(g.ids.front()).page_index);
            row.context = detail::section_context(doc, g.section);
            out.rows.push_back(std::move(row));
        }
        out.records.push_back(std::move(rec));
    }
    for (std::size_t vi = 0; vi < visuals.size(); ++vi) {
        const auto& v = visuals[vi];
        const GenResult& res = results[groups.size() + vi];
        QGenRecord rec;
        rec.source_entity_ids = {v.visual->object_id};
        bool is_table = v.visual->category == EntityCategory::Table;
        rec.super_section = is_table ? SuperSection::Table : SuperSection::Figure;
        rec.prompt = res.prompt;
        rec.raw_questions = res.raw;
        rec.kept_questions = filter_questions(res.raw);
        for (const std::string& q : rec.kept_questions) {
            dataio::SplitRow row;
            row.question = q;
            row.document_id = doc.document_id;
            row.answer_objt_id = {v.visual->object_id};  // always a singleton
            row.super_section = is_table ? "table" : "figure";
            row.id = (*next_id)++;
            std::string sec = v.visual->section.empty() ? v.caption->section : v.visual->section;
            row.page_range = detail::section_span(doc, sec, v.visual->page_index);
            out.rows.push_back(std::move(row));
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

// Raw split-table cell -> typed sample; the super_section cell holds a
// first-level title or the reserved "table"/"figure" tags.
inline QASample sample_from_row(const dataio::SplitRow& row) {
    QASample s;
    s.question = row.question;
    s.document_id = row.document_id;
    s.answer_objt_ids.insert(row.answer_objt_id.begin(), row.answer_objt_id.end());
    s.super_section = ingest::map_super_section(row.super_section);
    s.id = row.id;
    s.page_range = row.page_range;
    s.context = row.context;
    return s;
}

}  // namespace pdfmvqa::qgen
