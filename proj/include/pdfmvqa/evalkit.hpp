// Retrieval metrics (exact match, partial match, multi-label recall),
// split-level aggregation with Super-Section and page-count breakdowns,
// entity-embedding export and question-answer cosine correlation.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdfmvqa/docmodel.hpp"

namespace pdfmvqa::evalkit {

// 1 iff the predicted set equals the ground truth as sets.
inline int exact_match(const std::set<int>& pred, const std::set<int>& gt) {
    if (gt.empty()) throw std::invalid_argument("exact_match: empty ground truth");
    return pred == gt ? 1 : 0;
}

// 1 iff the prediction is a non-empty subset of the ground truth.
inline int partial_match(const std::set<int>& pred, const std::set<int>& gt) {
    if (gt.empty()) throw std::invalid_argument("partial_match: empty ground truth");
    if (pred.empty()) return 0;
    return std::includes(gt.begin(), gt.end(), pred.begin(), pred.end()) ? 1 : 0;
}

// |pred ∩ gt| / |gt|.
inline double multilabel_recall(const std::set<int>& pred, const std::set<int>& gt) {
    if (gt.empty()) throw std::invalid_argument("multilabel_recall: empty ground truth");
    std::size_t tp = 0;
    for (int id : pred) tp += gt.count(id);
    return static_cast<double>(tp) / static_cast<double>(gt.size());
}

// Per-question scoring record. `unscorable` marks questions whose ground
// truth was truncated out of the model input; they are excluded from the
// EM/PM denominators and scored as a full miss (mr = 0) in MR.
struct MetricResult {
    std::int64_t question_id = 0;
    int em = 0;
    int pm = 0;
    double mr = 0.0;
    int tp = 0;
    int fn = 0;
    int fp = 0;
    SuperSection super_section = SuperSection::Other;
    int n_pages = 1;
    bool unscorable = false;
};

inline MetricResult score_question(const PredictionSet& pred, const QASample& gold,
                                   bool unscorable = false) {
    MetricResult r;
    r.question_id = gold.id;
    r.super_section = gold.super_section;
    r.n_pages = gold.page_range.second - gold.page_range.first + 1;
    r.unscorable = unscorable;
    for (int id : pred.predicted_ids) {
        if (gold.answer_objt_ids.count(id)) {
            ++r.tp;
        } else {
            ++r.fp;
        }
    }
    r.fn = static_cast<int>(gold.answer_objt_ids.size()) - r.tp;
    if (unscorable) {
        r.em = 0;
        r.pm = 0;
        r.mr = 0.0;
        return r;
    }
    r.em = exact_match(pred.predicted_ids, gold.answer_objt_ids);
    r.pm = partial_match(pred.predicted_ids, gold.answer_objt_ids);
    r.mr = multilabel_recall(pred.predicted_ids, gold.answer_objt_ids);
    return r;
}

struct BucketStats {
    std::int64_t n = 0;         // all questions in the bucket
    std::int64_t n_scored = 0;  // EM/PM denominator (excludes unscorable)
    std::int64_t em_pos = 0;
    std::int64_t pm_pos = 0;
    double mr_sum = 0.0;  // macro accumulator over all n questions
    std::int64_t tp = 0;
    std::int64_t fn = 0;

    double em() const { return n_scored ? static_cast<double>(em_pos) / n_scored : 0.0; }
    double pm() const { return n_scored ? static_cast<double>(pm_pos) / n_scored : 0.0; }
    double mr_macro() const { return n ? mr_sum / static_cast<double>(n) : 0.0; }
    double mr_micro() const { return (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0; }
};

// Page buckets follow the breakdown plots: widths 1..9, >= 10 folded into 9.
inline int page_bucket(int n_pages) { return std::clamp(n_pages, 1, 9); }

struct MetricReport {
    std::string run_name = "run";
    std::string split_name = "split";
    bool mr_micro = false;  // macro is the default aggregation
    BucketStats overall;
    std::map<SuperSection, BucketStats> by_super_section;
    std::map<int, BucketStats> by_pages;  // bucket 1..9
    std::int64_t unscorable_count = 0;

    double em() const { return overall.em(); }
    double pm() const { return overall.pm(); }
    double mr() const { return mr_micro ? overall.mr_micro() : overall.mr_macro(); }
};

// Folds per-question records into the overall and breakdown tables.
// Duplicate question ids are an error; bucket populations sum to the total.
inline MetricReport aggregate(const std::vector<MetricResult>& records, bool mr_micro = false) {
    MetricReport rep;
    rep.mr_micro = mr_micro;
    std::set<std::int64_t> seen;
    for (const MetricResult& r : records) {
        if (!seen.insert(r.question_id).second) {
            throw std::invalid_argument("aggregate: duplicate question id " +
                                        std::to_string(r.question_id));
        }
        auto fold = [&](BucketStats& b) {
            b.n += 1;
            b.mr_sum += r.mr;
            b.tp += r.tp;
            b.fn += r.fn;
            if (!r.unscorable) {
                b.n_scored += 1;
                b.em_pos += r.em;
                b.pm_pos += r.pm;
            }
        };
        fold(rep.overall);
        fold(rep.by_super_section[r.super_section]);
        fold(rep.by_pages[page_bucket(r.n_pages)]);
        if (r.unscorable) rep.unscorable_count += 1;
    }
    return rep;
}

inline nlohmann::json to_json(const BucketStats& b, bool micro) {
    return nlohmann::json{{"n", b.n},           {"n_scored", b.n_scored},
                          {"em", b.em()},       {"pm", b.pm()},
                          {"mr", micro ? b.mr_micro() : b.mr_macro()}};
}

inline nlohmann::json to_json(const MetricReport& rep) {
    nlohmann::json j;
    j["run_name"] = rep.run_name;
    j["split_name"] = rep.split_name;
    j["mr_aggregation"] = rep.mr_micro ? "micro" : "macro";
    j["unscorable_excluded_from_em_pm"] = rep.unscorable_count;
    j["overall"] = to_json(rep.overall, rep.mr_micro);
    nlohmann::json sec = nlohmann::json::object();
    for (const auto& [k, v] : rep.by_super_section) sec[to_string(k)] = to_json(v, rep.mr_micro);
    j["by_super_section"] = sec;
    nlohmann::json pages = nlohmann::json::object();
    for (const auto& [k, v] : rep.by_pages) pages[std::to_string(k)] = to_json(v, rep.mr_micro);
    j["by_pages"] = pages;
    return j;
}

inline MetricReport report_from_json(const nlohmann::json& j) {
    MetricReport rep;
    rep.run_name = j.at("run_name").get<std::string>();
    rep.split_name = j.at("split_name").get<std::string>();
    rep.mr_micro = j.at("mr_aggregation").get<std::string>() == "micro";
    rep.unscorable_count = j.at("unscorable_excluded_from_em_pm").get<std::int64_t>();
    auto load = [](const nlohmann::json& b) {
        BucketStats s;
        s.n = b.at("n").get<std::int64_t>();
        s.n_scored = b.at("n_scored").get<std::int64_t>();
        // Reconstruct enough state for the rates to reproduce.
        s.em_pos = static_cast<std::int64_t>(std::llround(b.at("em").get<double>() * s.n_scored));
        s.pm_pos = static_cast<std::int64_t>(std::llround(b.at("pm").get<double>() * s.n_scored));
        s.mr_sum = b.at("mr").get<double>() * static_cast<double>(s.n);
        return s;
    };
    rep.overall = load(j.at("overall"));
    for (const auto& [k, v] : j.at("by_super_section").items()) {
        rep.by_super_section[super_section_from_string(k)] = load(v);
    }
    for (const auto& [k, v] : j.at("by_pages").items()) rep.by_pages[std::stoi(k)] = load(v);
    return rep;
}

// Aligned text table over one or more runs, one row per run, EM/PM/MR as
// percentages, plus the per-Super-Section EM breakdown.
inline std::string render_report_table(const std::vector<MetricReport>& reports) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    std::size_t name_w = 5;
    for (const auto& r : reports) name_w = std::max(name_w, r.run_name.size());
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << "Model";
    for (const char* col : {"EM", "PM", "MR"}) os << std::right << std::setw(8) << col;
    for (SuperSection s : all_super_sections()) {
        os << std::right << std::setw(8) << (std::string("EM:") + to_string(s));
    }
    os << "\n";
    for (const auto& r : reports) {
        os << std::left << std::setw(static_cast<int>(name_w) + 2) << r.run_name;
        os << std::right << std::setw(8) << r.em() * 100.0 << std::setw(8) << r.pm() * 100.0
           << std::setw(8) << r.mr() * 100.0;
        for (SuperSection s : all_super_sections()) {
            auto it = r.by_super_section.find(s);
            if (it == r.by_super_section.end()) {
                os << std::right << std::setw(8) << "-";
            } else {
                os << std::right << std::setw(8) << it->second.em() * 100.0;
            }
        }
        os << "\n";
    }
    return os.str();
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::domain_error("cosine: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// One exported decoder-output row per entity, for downstream 2-D projection.
struct EntityEmbeddingRow {
    std::string document_id;
    int object_id = 0;
    EntityCategory category = EntityCategory::Paragraph;
    std::vector<double> embedding;
};

inline std::string render_embedding_table(const std::vector<EntityEmbeddingRow>& rows) {
    std::ostringstream os;
    os << "document_id\tobject_id\tcategory\tembedding\n";
    for (const auto& r : rows) {
        os << r.document_id << '\t' << r.object_id << '\t' << to_string(r.category) << '\t';
        for (std::size_t i = 0; i < r.embedding.size(); ++i) {
            if (i) os << ' ';
            os << r.embedding[i];
        }
        os << '\n';
    }
    return os.str();
}

// Mean cosine between pooled question embeddings and the mean gold-entity
// embedding; zero-norm pairs are skipped and counted.
struct QaCorrelation {
    double mean_cosine = 0.0;
    std::int64_t n_used = 0;
    std::int64_t n_skipped = 0;
};

inline QaCorrelation qa_correlation_from_pairs(
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("qa_correlation: empty split");
    QaCorrelation out;
    double sum = 0.0;
    for (const auto& [q, e] : pairs) {
        try {
            sum += cosine(q, e);
            out.n_used += 1;
        } catch (const std::domain_error&) {
            out.n_skipped += 1;
        }
    }
    out.mean_cosine = out.n_used ? sum / static_cast<double>(out.n_used) : 0.0;
    return out;
}

}  // namespace pdfmvqa::evalkit
