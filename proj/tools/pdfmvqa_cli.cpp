// Batch command surface for the pipeline:
//   ingest -> genq -> split -> train -> eval -> report
// Every command writes a run manifest next to its primary outputs. Exit
// codes: 0 success, 1 usage, 2 data error, 3 runtime/divergence.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pdfmvqa/dataio.hpp"
#include "pdfmvqa/docmodel.hpp"
#include "pdfmvqa/evalkit.hpp"
#include "pdfmvqa/featbank.hpp"
#include "pdfmvqa/ingest.hpp"
#include "pdfmvqa/qgen.hpp"
#include "pdfmvqa/qgen_remote.hpp"
#include "pdfmvqa/retriever.hpp"
#include "pdfmvqa/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pdfmvqa;

namespace {

constexpr const char* kToolVersion = "pdfmvqa 0.1.0";

enum ExitCode { kOk = 0, kUsage = 1, kDataError = 2, kRuntimeError = 3 };

std::string timestamp_utc() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

// One manifest per run, written alongside the primary outputs.
void write_manifest(const fs::path& path, const std::string& command, std::uint64_t seed,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    const json& extra = json::object()) {
    json m;
    m["schema_version"] = 1;
    m["command"] = command;
    m["seed"] = seed;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["tool"] = kToolVersion;
    m["timestamp_utc"] = timestamp_utc();
    for (const auto& [k, v] : extra.items()) m[k] = v;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write manifest " + path.string());
    f << m.dump(2) << "\n";
}

std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw dataio::ParseError("cannot open " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Flat key = value configuration file; '#' starts a comment.
std::map<std::string, std::string> parse_config_file(const fs::path& path) {
    std::map<std::string, std::string> out;
    std::ifstream f(path);
    if (!f) throw dataio::ParseError("cannot open config " + path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::string trimmed = ingest::normalize_text(line);
        if (trimmed.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw dataio::ParseError(path.string() + ":" + std::to_string(line_no) +
                                     ": expected key = value");
        }
        std::string key = ingest::normalize_text(line.substr(0, eq));
        std::string value = line.substr(eq + 1);
        // trim surrounding whitespace, preserve inner case (paths!)
        auto b = value.find_first_not_of(" \t");
        auto e = value.find_last_not_of(" \t\r");
        value = b == std::string::npos ? "" : value.substr(b, e - b + 1);
        out[key] = value;
    }
    return out;
}

struct ConfigReader {
    std::map<std::string, std::string> values;
    std::set<std::string> consumed;

    std::optional<std::string> get(const std::string& key) {
        auto it = values.find(key);
        if (it == values.end()) return std::nullopt;
        consumed.insert(key);
        return it->second;
    }
    void get_int(const std::string& key, int& into) {
        if (auto v = get(key)) into = std::stoi(*v);
    }
    void get_u64(const std::string& key, std::uint64_t& into) {
        if (auto v = get(key)) into = std::stoull(*v);
    }
    void get_double(const std::string& key, double& into) {
        if (auto v = get(key)) into = std::stod(*v);
    }
    void get_bool(const std::string& key, bool& into) {
        if (auto v = get(key)) into = (*v == "true" || *v == "1" || *v == "yes");
    }
    void get_string(const std::string& key, std::string& into) {
        if (auto v = get(key)) into = *v;
    }
    void reject_unknown(const fs::path& path) const {
        for (const auto& [k, v] : values) {
            if (!consumed.count(k)) {
                throw dataio::ParseError(path.string() + ": unknown config key '" + k + "'");
            }
        }
    }
};

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestArgs {
    std::string pdf_dir, regions_dir, xml_dir, out;
    double threshold = 0.85;
};

int cmd_ingest(const IngestArgs& args) {
    if (args.pdf_dir.empty() == args.regions_dir.empty()) {
        std::cerr << "ingest: exactly one of --pdf-dir / --regions-dir is required\n";
        return kUsage;
    }
    fs::path src_dir = args.pdf_dir.empty() ? args.regions_dir : args.pdf_dir;
    std::string ext = args.pdf_dir.empty() ? ".json" : ".pdf";

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(src_dir)) {
        if (entry.path().extension() == ext) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        std::cerr << "ingest: no " << ext << " files in " << src_dir << "\n";
        return kDataError;
    }

    dataio::MetadataStore store;
    std::vector<std::string> log_lines;
    int failures = 0;
    for (const fs::path& file : files) {
        std::string doc_id = file.stem().string();
        try {
            std::vector<ingest::PageLayout> layout;
            if (args.pdf_dir.empty()) {
                layout = ingest::read_region_dump(json::parse(read_file(file)));
            } else {
                layout = ingest::extract_layout(read_file(file));
            }
            fs::path xml_path = fs::path(args.xml_dir) / (doc_id + ".xml");
            auto nodes = ingest::xml_nodes_from_string(read_file(xml_path));
            ingest::AlignmentConfig cfg;
            cfg.similarity_threshold = args.threshold;
            std::vector<std::string> drops;
            DocumentRecord doc = ingest::ingest_document(doc_id, layout, nodes, cfg, &drops);
            store.documents[doc_id] = std::move(doc);
            log_lines.push_back(doc_id + ": ok, " +
                                std::to_string(store.documents[doc_id].entities.size()) +
                                " entities, " + std::to_string(drops.size()) +
                                " unmatched regions");
        } catch (const std::exception& ex) {
            ++failures;
            log_lines.push_back(doc_id + ": FAILED " + ex.what());
        }
    }

    fs::path out_path(args.out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    dataio::write_metadata(store, out_path);
    fs::path log_path = out_path;
    log_path += ".log";
    {
        std::ofstream log(log_path, std::ios::binary);
        for (const std::string& line : log_lines) log << line << "\n";
    }
    fs::path manifest_path = out_path;
    manifest_path += ".manifest.json";
    write_manifest(manifest_path, "ingest", 0, {src_dir.string(), args.xml_dir},
                   {out_path.string(), log_path.string()},
                   json{{"documents_ok", files.size() - failures},
                        {"documents_failed", failures}});
    std::cout << "ingested " << files.size() - failures << "/" << files.size()
              << " documents -> " << out_path.string() << "\n";
    return failures == static_cast<int>(files.size()) ? kDataError : kOk;
}

// ---------------------------------------------------------------------------
// genq
// ---------------------------------------------------------------------------

struct GenqArgs {
    std::string metadata, out, records;
    std::string client = "template";
    std::string endpoint = "http://127.0.0.1:8080";
    std::string model = "gpt-3.5-turbo";
    int timeout_sec = 30;
    int max_in_flight = 1;
    std::uint64_t seed = 0;
};

int cmd_genq(const GenqArgs& args) {
    dataio::MetadataStore store = dataio::read_metadata(args.metadata);
    std::unique_ptr<qgen::GeneratorClient> client;
    if (args.client == "template") {
        client = std::make_unique<qgen::TemplateGenerator>(args.seed);
    } else if (args.client == "remote") {
        qgen::RemoteConfig rc;
        rc.base_url = args.endpoint;
        rc.model = args.model;
        rc.timeout_sec = args.timeout_sec;
        client = std::make_unique<qgen::RemoteGenerator>(rc);
    } else {
        std::cerr << "genq: unknown client '" << args.client << "'\n";
        return kUsage;
    }

    qgen::QGenOptions options;
    options.max_in_flight = args.max_in_flight;
    dataio::SplitTable table;
    std::vector<qgen::QGenRecord> records;
    std::int64_t next_id = 0;
    for (const auto& [doc_id, doc] : store.documents) {
        qgen::QGenOutput out = qgen::generate_for_document(doc, *client, options, &next_id);
        table.rows.insert(table.rows.end(), out.rows.begin(), out.rows.end());
        records.insert(records.end(), out.records.begin(), out.records.end());
    }

    fs::path out_path(args.out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    dataio::write_split(table, out_path);
    fs::path records_path = args.records.empty() ? fs::path(args.out + ".records.jsonl")
                                                 : fs::path(args.records);
    {
        std::ofstream rf(records_path, std::ios::binary);
        for (const auto& rec : records) rf << qgen::to_json(rec).dump() << "\n";
    }
    fs::path manifest_path = out_path;
    manifest_path += ".manifest.json";
    write_manifest(manifest_path, "genq", args.seed, {args.metadata},
                   {out_path.string(), records_path.string()},
                   json{{"client", client->name()}, {"questions", table.rows.size()}});
    std::cout << "generated " << table.rows.size() << " questions over "
              << store.documents.size() << " documents -> " << out_path.string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

struct SplitArgs {
    std::string questions, metadata, out_dir;
    std::vector<double> ratios = {0.70216, 0.09981, 0.19803};
    std::uint64_t seed = 0;
};

int cmd_split(const SplitArgs& args) {
    if (args.ratios.size() != 3) {
        std::cerr << "split: --ratios needs exactly three values\n";
        return kUsage;
    }
    dataio::SplitTable table = dataio::read_split(args.questions);
    dataio::MetadataStore store = dataio::read_metadata(args.metadata);

    std::vector<std::string> doc_ids;
    for (const auto& [id, doc] : store.documents) doc_ids.push_back(id);
    dataio::Splits splits = dataio::make_splits(
        doc_ids, dataio::SplitRatios{args.ratios[0], args.ratios[1], args.ratios[2]}, args.seed);

    fs::create_directories(args.out_dir);
    auto emit = [&](const std::string& name, const std::vector<std::string>& ids) {
        std::set<std::string> members(ids.begin(), ids.end());
        dataio::SplitTable part;
        for (const auto& row : table.rows) {
            if (members.count(row.document_id)) part.rows.push_back(row);
        }
        dataio::MetadataStore part_store;
        for (const auto& id : ids) part_store.documents[id] = store.documents.at(id);
        auto violations = dataio::validate_split(part, part_store);
        if (!violations.empty()) {
            throw dataio::ParseError(name + " split inconsistent: " + violations.front());
        }
        fs::path csv = fs::path(args.out_dir) / (name + ".csv");
        fs::path meta = fs::path(args.out_dir) / (name + "_meta.json");
        dataio::write_split(part, csv);
        dataio::write_metadata(part_store, meta);
        return std::make_pair(csv.string(), part.rows.size());
    };
    auto [train_csv, n_train] = emit("train", splits.train);
    auto [val_csv, n_val] = emit("val", splits.val);
    auto [test_csv, n_test] = emit("test", splits.test);

    write_manifest(fs::path(args.out_dir) / "manifest.json", "split", args.seed,
                   {args.questions, args.metadata}, {train_csv, val_csv, test_csv},
                   json{{"documents", {{"train", splits.train.size()},
                                       {"val", splits.val.size()},
                                       {"test", splits.test.size()}}},
                        {"questions",
                         {{"train", n_train}, {"val", n_val}, {"test", n_test}}}});
    std::cout << "split " << doc_ids.size() << " documents into " << splits.train.size() << "/"
              << splits.val.size() << "/" << splits.test.size() << " -> " << args.out_dir
              << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// train / eval shared plumbing
// ---------------------------------------------------------------------------

struct Encoders {
    featbank::HashingTextEncoder text;
    featbank::RegionStatsVisualEncoder visual;
    retriever::HashingLongTextEncoder long_text;
    std::unique_ptr<retriever::StubPatchEmbedder> patch;
    std::unique_ptr<retriever::RoiContextualizer> roi;

    retriever::EncoderSet set(const retriever::RetrieverConfig& cfg,
                              const std::string& roi_adapter) {
        retriever::EncoderSet e;
        e.text = &text;
        e.visual = &visual;
        e.long_text = &long_text;
        if (cfg.uses_patch()) {
            patch = std::make_unique<retriever::StubPatchEmbedder>(cfg.hidden, cfg.patch_grid);
            e.patch = patch.get();
        }
        if (roi_adapter == "identity") {
            roi = std::make_unique<retriever::IdentityRoiContextualizer>();
        } else if (roi_adapter == "stub") {
            roi = std::make_unique<retriever::StubRoiContextualizer>();
        } else if (roi_adapter != "builtin" && !roi_adapter.empty()) {
            throw std::invalid_argument("unknown roi adapter '" + roi_adapter + "'");
        }
        e.roi = roi.get();
        return e;
    }

    std::map<std::string, std::string> versions(const retriever::RetrieverConfig& cfg) const {
        std::map<std::string, std::string> v = {{"text", text.version()},
                                                {"visual", visual.version()}};
        if (cfg.uses_jg()) v["long_text"] = long_text.name();
        if (cfg.uses_patch() && patch) v["patch"] = patch->name();
        return v;
    }
};

// Featurize every document of a metadata store, optionally through a
// per-document binary cache keyed by encoder versions.
std::map<std::string, retriever::DocBundle> featurize_store(
    const dataio::MetadataStore& store, featbank::HashingTextEncoder& text,
    featbank::RegionStatsVisualEncoder& visual, const std::string& cache_dir) {
    std::map<std::string, retriever::DocBundle> bundles;
    for (const auto& [doc_id, doc] : store.documents) {
        retriever::DocBundle bundle;
        fs::path cache_path;
        bool cached = false;
        if (!cache_dir.empty()) {
            fs::create_directories(cache_dir);
            cache_path = fs::path(cache_dir) / (doc_id + ".feat");
            if (auto hit = featbank::read_feature_cache(cache_path, doc_id, text.version(),
                                                        visual.version())) {
                bundle.doc = &doc;
                for (std::size_t p = 0; p < doc.pages.size(); ++p) {
                    bundle.page_images.push_back(
                        image::render_placeholder_page(doc, static_cast<int>(p)));
                }
                bundle.features = std::move(*hit);
                for (std::size_t i = 0; i < bundle.features.object_ids.size(); ++i) {
                    bundle.feature_index[bundle.features.object_ids[i]] = i;
                }
                cached = true;
            }
        }
        if (!cached) {
            bundle = retriever::DocBundle::featurize(doc, text, visual);
            if (!cache_dir.empty()) featbank::write_feature_cache(bundle.features, cache_path);
        }
        bundles.emplace(doc_id, std::move(bundle));
    }
    return bundles;
}

std::vector<QASample> samples_from_csv(const fs::path& path) {
    dataio::SplitTable table = dataio::read_split(path);
    std::vector<QASample> samples;
    for (const auto& row : table.rows) samples.push_back(qgen::sample_from_row(row));
    return samples;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config, out_dir;
    std::string variant;  // overrides config when set
    std::string roi_adapter = "builtin";
    std::string cache_dir;
    std::int64_t seed = -1;
    int epochs = 0;
    double lr = 0;
    int batch_size = 0;
};

int cmd_train(const TrainArgs& args) {
    ConfigReader cfg_file{parse_config_file(args.config), {}};

    retriever::RetrieverConfig mcfg;
    trainer::TrainConfig tcfg;
    std::string variant = "base", jg_host = "base", page_gating, jg_text_source, selection = "EM";
    std::string train_csv, val_csv, metadata;
    cfg_file.get_string("variant", variant);
    cfg_file.get_string("jg_host", jg_host);
    cfg_file.get_int("hidden", mcfg.hidden);
    cfg_file.get_int("heads", mcfg.heads);
    cfg_file.get_int("encoder_layers", mcfg.encoder_layers);
    cfg_file.get_int("decoder_layers", mcfg.decoder_layers);
    cfg_file.get_int("max_entities", mcfg.max_entities);
    cfg_file.get_int("max_question_tokens", mcfg.max_question_tokens);
    cfg_file.get_int("fine_grained_cap", mcfg.fine_grained_cap);
    cfg_file.get_int("ffn_multiplier", mcfg.ffn_multiplier);
    cfg_file.get_int("roi_layers", mcfg.roi_layers);
    cfg_file.get_bool("roi_layout_aware", mcfg.roi_layout_aware);
    cfg_file.get_int("jg_layers", mcfg.jg_layers);
    cfg_file.get_int("patch_grid", mcfg.patch_grid);
    cfg_file.get_string("page_gating", page_gating);
    cfg_file.get_string("jg_text_source", jg_text_source);
    cfg_file.get_double("learning_rate", tcfg.learning_rate);
    cfg_file.get_int("max_epochs", tcfg.max_epochs);
    cfg_file.get_int("batch_size", tcfg.batch_size);
    cfg_file.get_double("positive_class_weight", tcfg.positive_class_weight);
    cfg_file.get_string("selection_metric", selection);
    cfg_file.get_u64("seed", tcfg.seed);
    cfg_file.get_string("train_csv", train_csv);
    cfg_file.get_string("val_csv", val_csv);
    cfg_file.get_string("metadata", metadata);
    cfg_file.reject_unknown(args.config);

    // Flags override file values.
    if (!args.variant.empty()) variant = args.variant;
    if (args.seed >= 0) tcfg.seed = static_cast<std::uint64_t>(args.seed);
    if (args.epochs > 0) tcfg.max_epochs = args.epochs;
    if (args.lr > 0) tcfg.learning_rate = args.lr;
    if (args.batch_size > 0) tcfg.batch_size = args.batch_size;

    mcfg.variant = retriever::variant_from_string(variant);
    mcfg.jg_host = jg_host == "roi" ? retriever::HostVariant::Roi
                                    : (jg_host == "patch" ? retriever::HostVariant::Patch
                                                          : retriever::HostVariant::Base);
    if (!page_gating.empty()) {
        mcfg.page_gating = page_gating == "full_document"
                               ? retriever::PageGating::FullDocument
                               : retriever::PageGating::PageRangeWindow;
    }
    if (!jg_text_source.empty()) {
        mcfg.jg_text_source = jg_text_source == "none"
                                  ? retriever::JgTextSource::None
                                  : (jg_text_source == "context"
                                         ? retriever::JgTextSource::ContextOnly
                                         : retriever::JgTextSource::ContextThenEntities);
    }
    tcfg.selection_metric = trainer::selection_metric_from_string(selection);
    mcfg.seed = tcfg.seed;
    mcfg.validate();
    tcfg.validate();
    if (train_csv.empty() || val_csv.empty() || metadata.empty()) {
        throw dataio::ParseError("config must set train_csv, val_csv and metadata");
    }

    dataio::MetadataStore store = dataio::read_metadata(metadata);
    Encoders encoders;
    auto bundles = featurize_store(store, encoders.text, encoders.visual, args.cache_dir);
    trainer::Corpus train_corpus{samples_from_csv(train_csv), &bundles};
    trainer::Corpus val_corpus{samples_from_csv(val_csv), &bundles};

    retriever::Retriever model(mcfg);
    auto encoder_set = encoders.set(mcfg, args.roi_adapter);

    fs::create_directories(args.out_dir);
    fs::path history_path = fs::path(args.out_dir) / "history.jsonl";
    std::ofstream history(history_path, std::ios::binary);
    trainer::TrainResult result =
        trainer::train(model, train_corpus, val_corpus, tcfg, encoder_set, &history);

    fs::path ckpt_path = fs::path(args.out_dir) / "checkpoint.bin";
    model.save_checkpoint(ckpt_path, encoders.versions(mcfg));
    write_manifest(fs::path(args.out_dir) / "manifest.json", "train", tcfg.seed,
                   {args.config, train_csv, val_csv, metadata},
                   {ckpt_path.string(), history_path.string()},
                   json{{"variant", to_string(mcfg.variant)},
                        {"best_epoch", result.best_epoch},
                        {"best_metric", result.best_metric},
                        {"selection_metric", trainer::to_string(tcfg.selection_metric)}});
    std::cout << "trained " << to_string(mcfg.variant) << " for "
              << result.history.size() << " epochs; best "
              << trainer::to_string(tcfg.selection_metric) << " " << result.best_metric
              << " at epoch " << result.best_epoch << " -> " << ckpt_path.string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// eval / report
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint, split, metadata, report_out;
    std::string table_out, embeddings_out;
    std::string run_name = "run";
    std::string roi_adapter = "builtin";
    std::string cache_dir;
    bool mr_micro = false;
    bool with_qa_correlation = false;
};

int cmd_eval(const EvalArgs& args) {
    auto loaded = retriever::Retriever::load_checkpoint(args.checkpoint);
    retriever::Retriever& model = *loaded.model;

    dataio::MetadataStore store = dataio::read_metadata(args.metadata);
    Encoders encoders;
    auto bundles = featurize_store(store, encoders.text, encoders.visual, args.cache_dir);
    trainer::Corpus corpus{samples_from_csv(args.split), &bundles};
    if (corpus.samples.empty()) throw dataio::ParseError("eval: empty split " + args.split);

    auto encoder_set = encoders.set(model.config(), args.roi_adapter);
    retriever::Retriever::verify_encoders(loaded.encoder_versions, encoder_set);

    evalkit::MetricReport report =
        evalkit::aggregate(trainer::score_split(model, corpus, encoder_set), args.mr_micro);
    report.run_name = args.run_name;
    report.split_name = fs::path(args.split).stem().string();

    json report_json = evalkit::to_json(report);
    if (args.with_qa_correlation) {
        evalkit::QaCorrelation corr = trainer::qa_correlation(model, corpus, encoder_set);
        report_json["qa_correlation"] = {{"mean_cosine", corr.mean_cosine},
                                         {"n_used", corr.n_used},
                                         {"n_skipped", corr.n_skipped}};
    }

    fs::path report_path(args.report_out);
    if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
    {
        std::ofstream f(report_path, std::ios::binary);
        f << report_json.dump(2) << "\n";
    }
    std::vector<std::string> outputs = {report_path.string()};
    if (!args.table_out.empty()) {
        std::ofstream f(args.table_out, std::ios::binary);
        f << evalkit::render_report_table({report});
        outputs.push_back(args.table_out);
    }
    if (!args.embeddings_out.empty()) {
        auto rows = trainer::export_entity_embeddings(model, bundles, encoder_set);
        std::ofstream f(args.embeddings_out, std::ios::binary);
        f << evalkit::render_embedding_table(rows);
        outputs.push_back(args.embeddings_out);
    }
    fs::path manifest_path = report_path;
    manifest_path += ".manifest.json";
    write_manifest(manifest_path, "eval", model.config().seed,
                   {args.checkpoint, args.split, args.metadata}, outputs,
                   json{{"run_name", args.run_name}});
    std::cout << args.run_name << " on " << report.split_name << ": EM " << report.em()
              << " PM " << report.pm() << " MR " << report.mr() << " (" << report.overall.n
              << " questions) -> " << report_path.string() << "\n";
    return kOk;
}

struct ReportArgs {
    std::vector<std::string> reports;
    std::string table_out;
};

int cmd_report(const ReportArgs& args) {
    std::vector<evalkit::MetricReport> reports;
    for (const std::string& path : args.reports) {
        reports.push_back(evalkit::report_from_json(json::parse(read_file(path))));
    }
    std::string table = evalkit::render_report_table(reports);
    if (!args.table_out.empty()) {
        fs::path out(args.table_out);
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        std::ofstream f(out, std::ios::binary);
        f << table;
        fs::path manifest_path = out;
        manifest_path += ".manifest.json";
        write_manifest(manifest_path, "report", 0, args.reports, {out.string()});
    }
    std::cout << table;
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-page document entity retrieval pipeline: ingest, question generation, "
                 "splits, training, evaluation"};
    app.require_subcommand(1);

    IngestArgs ingest_args;
    CLI::App* ingest_cmd = app.add_subcommand("ingest", "build document metadata from PDFs/region dumps + XML");
    ingest_cmd->add_option("--pdf-dir", ingest_args.pdf_dir, "directory of born-digital PDFs");
    ingest_cmd->add_option("--regions-dir", ingest_args.regions_dir,
                           "directory of region-dump JSON files");
    ingest_cmd->add_option("--xml-dir", ingest_args.xml_dir, "directory of article XML files")
        ->required();
    ingest_cmd->add_option("--out", ingest_args.out, "output metadata JSON path")->required();
    ingest_cmd->add_option("--threshold", ingest_args.threshold,
                           "fuzzy alignment similarity threshold");

    GenqArgs genq_args;
    CLI::App* genq_cmd = app.add_subcommand("genq", "generate questions over ingested documents");
    genq_cmd->add_option("--metadata", genq_args.metadata, "metadata JSON")->required();
    genq_cmd->add_option("--out", genq_args.out, "output questions CSV")->required();
    genq_cmd->add_option("--records", genq_args.records, "generation record JSONL path");
    genq_cmd->add_option("--client", genq_args.client, "template | remote");
    genq_cmd->add_option("--endpoint", genq_args.endpoint, "remote endpoint base URL");
    genq_cmd->add_option("--model", genq_args.model, "remote model name");
    genq_cmd->add_option("--timeout", genq_args.timeout_sec, "remote timeout seconds");
    genq_cmd->add_option("--max-in-flight", genq_args.max_in_flight,
                         "concurrent client calls per document");
    genq_cmd->add_option("--seed", genq_args.seed, "template client seed");

    SplitArgs split_args;
    CLI::App* split_cmd = app.add_subcommand("split", "partition questions into train/val/test");
    split_cmd->add_option("--questions", split_args.questions, "questions CSV")->required();
    split_cmd->add_option("--metadata", split_args.metadata, "metadata JSON")->required();
    split_cmd->add_option("--out-dir", split_args.out_dir, "output directory")->required();
    split_cmd->add_option("--ratios", split_args.ratios, "train,val,test ratios")
        ->delimiter(',')
        ->expected(3);
    split_cmd->add_option("--seed", split_args.seed, "shuffle seed");

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "train a retriever variant");
    train_cmd->add_option("--config", train_args.config, "key=value config file")->required();
    train_cmd->add_option("--out", train_args.out_dir, "output directory")->required();
    train_cmd->add_option("--variant", train_args.variant, "base | roi | patch | jg");
    train_cmd->add_option("--roi-adapter", train_args.roi_adapter,
                          "builtin | identity | stub");
    train_cmd->add_option("--cache-dir", train_args.cache_dir, "feature cache directory");
    train_cmd->add_option("--seed", train_args.seed, "override config seed");
    train_cmd->add_option("--epochs", train_args.epochs, "override max epochs");
    train_cmd->add_option("--lr", train_args.lr, "override learning rate");
    train_cmd->add_option("--batch-size", train_args.batch_size, "override batch size");

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--split", eval_args.split, "split CSV")->required();
    eval_cmd->add_option("--metadata", eval_args.metadata, "metadata JSON")->required();
    eval_cmd->add_option("--report-out", eval_args.report_out, "metric report JSON")->required();
    eval_cmd->add_option("--table-out", eval_args.table_out, "aligned text table output");
    eval_cmd->add_option("--embeddings-out", eval_args.embeddings_out,
                         "entity-embedding TSV export");
    eval_cmd->add_option("--run-name", eval_args.run_name, "row label for report tables");
    eval_cmd->add_option("--roi-adapter", eval_args.roi_adapter, "builtin | identity | stub");
    eval_cmd->add_option("--cache-dir", eval_args.cache_dir, "feature cache directory");
    eval_cmd->add_flag("--mr-micro", eval_args.mr_micro, "micro-averaged MR instead of macro");
    eval_cmd->add_flag("--qa-correlation", eval_args.with_qa_correlation,
                       "include question-answer cosine correlation");

    ReportArgs report_args;
    CLI::App* report_cmd = app.add_subcommand("report", "merge metric reports into one table");
    report_cmd->add_option("--reports", report_args.reports, "metric report JSON files")
        ->required()
        ->expected(-1);
    report_cmd->add_option("--table-out", report_args.table_out, "output table path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (ingest_cmd->parsed()) return cmd_ingest(ingest_args);
        if (genq_cmd->parsed()) return cmd_genq(genq_args);
        if (split_cmd->parsed()) return cmd_split(split_args);
        if (train_cmd->parsed()) return cmd_train(train_args);
        if (eval_cmd->parsed()) return cmd_eval(eval_args);
        if (report_cmd->parsed()) return cmd_report(report_args);
    } catch (const trainer::TrainingDiverged& ex) {
        std::cerr << "divergence: " << ex.what() << "\n";
        return kRuntimeError;
    } catch (const dataio::ParseError& ex) {
        std::cerr << "data error: " << ex.what() << "\n";
        return kDataError;
    } catch (const pdf::ParseError& ex) {
        std::cerr << "data error: " << ex.what() << "\n";
        return kDataError;
    } catch (const xml::XmlError& ex) {
        std::cerr << "data error: " << ex.what() << "\n";
        return kDataError;
    } catch (const nlohmann::json::exception& ex) {
        std::cerr << "data error: " << ex.what() << "\n";
        return kDataError;
    } catch (const std::invalid_argument& ex) {
        std::cerr << "data error: " << ex.what() << "\n";
        return kDataError;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kRuntimeError;
    }
    return kUsage;
}
