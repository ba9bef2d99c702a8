// Supervised training loop: per-entity cross-entropy, adaptive-moment
// updates, an epoch cap and best-on-validation checkpoint selection. Also
// hosts the model-side evaluation drivers (split scoring, entity-embedding
// export, question-answer correlation) shared by the trainer and the CLI.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdfmvqa/evalkit.hpp"
#include "pdfmvqa/nn.hpp"
#include "pdfmvqa/retriever.hpp"

namespace pdfmvqa::trainer {

class TrainingDiverged : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class SelectionMetric { EM, PM, MR };

inline const char* to_string(SelectionMetric m) {
    switch (m) {
        case SelectionMetric::EM: return "EM";
        case SelectionMetric::PM: return "PM";
        case SelectionMetric::MR: return "MR";
    }
    return "?";
}

inline SelectionMetric selection_metric_from_string(const std::string& s) {
    if (s == "EM" || s == "em") return SelectionMetric::EM;
    if (s == "PM" || s == "pm") return SelectionMetric::PM;
    if (s == "MR" || s == "mr") return SelectionMetric::MR;
    throw std::invalid_argument("unknown selection metric: " + s);
}

struct TrainConfig {
    double learning_rate = 2e-5;
    int max_epochs = 15;
    int batch_size = 0;  // 0 -> variant default (32 roi-family / 16 patch / 8 jg)
    std::uint64_t seed = 0;
    SelectionMetric selection_metric = SelectionMetric::EM;
    double positive_class_weight = 1.0;  // optional imbalance knob, off by default

    void validate() const {
        if (learning_rate <= 0 || max_epochs <= 0 || positive_class_weight <= 0) {
            throw std::invalid_argument("train config values must be positive");
        }
    }
};

inline int default_batch_size(retriever::Variant v) {
    switch (v) {
        case retriever::Variant::Base:
        case retriever::Variant::Roi: return 32;
        case retriever::Variant::Patch: return 16;
        case retriever::Variant::JointGrained: return 8;
    }
    return 32;
}

// One split ready for training/evaluation: samples plus featurized bundles.
struct Corpus {
    std::vector<QASample> samples;
    const std::map<std::string, retriever::DocBundle>* bundles = nullptr;

    const retriever::DocBundle& bundle_for(const QASample& s) const {
        auto it = bundles->find(s.document_id);
        if (it == bundles->end()) {
            throw std::invalid_argument("no featurized document " + s.document_id);
        }
        return it->second;
    }
};

// Mean 2-class cross-entropy over unmasked entities; gold label 1 iff the
// entity belongs to the answer set. Positive rows may be up-weighted.
inline double loss(const nn::Tensor& logits, const std::vector<int>& labels,
                   const nn::Mask& mask, double positive_weight = 1.0) {
    if (logits.cols != 2) throw std::invalid_argument("loss: logits must have 2 columns");
    if (static_cast<int>(labels.size()) != logits.rows ||
        static_cast<int>(mask.size()) != logits.rows) {
        throw std::invalid_argument("loss: label/mask length mismatch");
    }
    double total = 0;
    long counted = 0;
    for (int r = 0; r < logits.rows; ++r) {
        if (!mask[static_cast<std::size_t>(r)]) continue;
        double a = logits.at(r, 0), b = logits.at(r, 1);
        double mx = std::max(a, b);
        double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
        double ce = lse - (labels[static_cast<std::size_t>(r)] == 1 ? b : a);
        total += labels[static_cast<std::size_t>(r)] == 1 ? positive_weight * ce : ce;
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("loss: all entities masked out");
    return total / static_cast<double>(counted);
}

// ---------------------------------------------------------------------------
// Split evaluation
// ---------------------------------------------------------------------------

inline std::vector<evalkit::MetricResult> score_split(retriever::Retriever& model,
                                                      const Corpus& corpus,
                                                      const retriever::EncoderSet& encoders) {
    std::vector<evalkit::MetricResult> records;
    for (const QASample& s : corpus.samples) {
        retriever::ForwardResult fwd = model.predict(corpus.bundle_for(s), s, encoders);
        records.push_back(evalkit::score_question(fwd.prediction, s, fwd.unscorable));
    }
    return records;
}

inline evalkit::MetricReport evaluate(retriever::Retriever& model, const Corpus& corpus,
                                      const retriever::EncoderSet& encoders,
                                      bool mr_micro = false) {
    if (corpus.samples.empty()) throw std::invalid_argument("evaluate: empty split");
    return evalkit::aggregate(score_split(model, corpus, encoders), mr_micro);
}

// One decoder-output row per entity, probed with an empty question over the
// whole document (page gating widened for the probe).
inline std::vector<evalkit::EntityEmbeddingRow> export_entity_embeddings(
    retriever::Retriever& model, const std::map<std::string, retriever::DocBundle>& bundles,
    const retriever::EncoderSet& encoders) {
    std::vector<evalkit::EntityEmbeddingRow> rows;
    for (const auto& [doc_id, bundle] : bundles) {
        QASample probe;
        probe.document_id = doc_id;
        probe.page_range = {0, static_cast<int>(bundle.doc->pages.size()) - 1};
        probe.context = std::nullopt;
        retriever::ForwardResult fwd = model.predict(bundle, probe, encoders);
        for (std::size_t i = 0; i < fwd.presented_ids.size(); ++i) {
            evalkit::EntityEmbeddingRow row;
            row.document_id = doc_id;
            row.object_id = fwd.presented_ids[i];
            row.category = bundle.doc->entity(row.object_id).category;
            row.embedding.assign(fwd.entity_embeddings.data.begin() +
                                     static_cast<std::ptrdiff_t>(i) * fwd.entity_embeddings.cols,
                                 fwd.entity_embeddings.data.begin() +
                                     static_cast<std::ptrdiff_t>(i + 1) *
                                         fwd.entity_embeddings.cols);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

// Mean cosine between the pooled encoded question and the mean gold-entity
// decoder output, per question, averaged over the split.
inline evalkit::QaCorrelation qa_correlation(retriever::Retriever& model, const Corpus& corpus,
                                             const retriever::EncoderSet& encoders) {
    if (corpus.samples.empty()) throw std::invalid_argument("qa_correlation: empty split");
    std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs;
    std::int64_t absent = 0;
    for (const QASample& s : corpus.samples) {
        retriever::ForwardResult fwd = model.predict(corpus.bundle_for(s), s, encoders);
        const nn::Tensor& q = fwd.question_encoded;
        std::vector<double> q_pooled(static_cast<std::size_t>(q.cols), 0.0);
        for (int r = 0; r < q.rows; ++r) {
            for (int c = 0; c < q.cols; ++c) {
                q_pooled[static_cast<std::size_t>(c)] += q.at(r, c) / q.rows;
            }
        }
        std::vector<double> e_mean(static_cast<std::size_t>(fwd.entity_embeddings.cols), 0.0);
        int hits = 0;
        for (std::size_t i = 0; i < fwd.presented_ids.size(); ++i) {
            if (!s.answer_objt_ids.count(fwd.presented_ids[i])) continue;
            ++hits;
            for (int c = 0; c < fwd.entity_embeddings.cols; ++c) {
                e_mean[static_cast<std::size_t>(c)] +=
                    fwd.entity_embeddings.at(static_cast<int>(i), c);
            }
        }
        if (hits == 0) {
            ++absent;  // gold entities truncated away; nothing to correlate
            continue;
        }
        for (auto& v : e_mean) v /= hits;
        pairs.emplace_back(std::move(q_pooled), std::move(e_mean));
    }
    if (pairs.empty()) throw std::invalid_argument("qa_correlation: no scorable questions");
    evalkit::QaCorrelation corr = evalkit::qa_correlation_from_pairs(pairs);
    corr.n_skipped += absent;
    return corr;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0;  // per-entity mean over the epoch
    double val_em = 0;
    double val_pm = 0;
    double val_mr = 0;
};

inline nlohmann::json to_json(const EpochRecord& r) {
    return nlohmann::json{{"epoch", r.epoch},
                          {"train_loss", r.train_loss},
                          {"val_em", r.val_em},
                          {"val_pm", r.val_pm},
                          {"val_mr", r.val_mr}};
}

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = 0;       // 1-based
    double best_metric = 0;   // selection metric at the best epoch
};

// Runs at most max_epochs passes, evaluates the selection metric on the
// validation split after each, and leaves the model holding the
// best-validation parameters. Aborts with TrainingDiverged on non-finite
// loss. Fully deterministic for a fixed seed.
inline TrainResult train(retriever::Retriever& model, const Corpus& train_split,
                         const Corpus& val_split, const TrainConfig& cfg,
                         const retriever::EncoderSet& encoders,
                         std::ostream* history_jsonl = nullptr) {
    cfg.validate();
    if (train_split.samples.empty() || val_split.samples.empty()) {
        throw std::invalid_argument("train: empty split");
    }
    int batch_size = cfg.batch_size > 0 ? cfg.batch_size
                                        : default_batch_size(model.config().variant);

    nn::Adam adam(nn::AdamConfig{cfg.learning_rate});
    TrainResult result;
    std::vector<nn::Tensor> best_params;
    auto snapshot = [&] {
        best_params.clear();
        for (nn::Param* p : model.param_store().all()) best_params.push_back(p->value);
    };
    auto metric_of = [&](const evalkit::MetricReport& rep) {
        switch (cfg.selection_metric) {
            case SelectionMetric::EM: return rep.em();
            case SelectionMetric::PM: return rep.pm();
            case SelectionMetric::MR: return rep.mr();
        }
        return rep.em();
    };

    std::vector<std::size_t> order(train_split.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
        }
        double epoch_loss_sum = 0;
        long epoch_entities = 0;
        std::size_t at = 0;
        while (at < order.size()) {
            std::size_t batch_end = std::min(order.size(), at + static_cast<std::size_t>(batch_size));
            model.param_store().zero_grads();
            double batch_loss_sum = 0;
            long batch_entities = 0;
            for (std::size_t i = at; i < batch_end; ++i) {
                const QASample& s = train_split.samples[order[i]];
                int n = 0;
                batch_loss_sum += model.accumulate_gradients(
                    train_split.bundle_for(s), s, encoders, &n, cfg.positive_class_weight);
                batch_entities += n;
            }
            double batch_loss = batch_loss_sum / static_cast<double>(batch_entities);
            if (!std::isfinite(batch_loss)) {
                throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) +
                                       ", sample offset " + std::to_string(at) +
                                       "; lower the learning rate or check the data");
            }
            // Summed gradients -> per-entity mean before the update.
            for (nn::Param* p : model.param_store().all()) {
                for (auto& gv : p->grad.data) gv /= static_cast<double>(batch_entities);
            }
            adam.step(model.param_store());
            epoch_loss_sum += batch_loss_sum;
            epoch_entities += batch_entities;
            at = batch_end;
        }

        evalkit::MetricReport val = evaluate(model, val_split, encoders);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss_sum / static_cast<double>(epoch_entities);
        rec.val_em = val.em();
        rec.val_pm = val.pm();
        rec.val_mr = val.mr();
        result.history.push_back(rec);
        if (history_jsonl) *history_jsonl << to_json(rec).dump() << "\n";

        double metric = metric_of(val);
        if (result.best_epoch == 0 || metric > result.best_metric) {
            result.best_epoch = epoch;
            result.best_metric = metric;
            snapshot();
        }
    }

    // Leave the model at its best-on-validation parameters.
    const auto& params = model.param_store().all();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
    return result;
}

}  // namespace pdfmvqa::trainer
