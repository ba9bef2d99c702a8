#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>
#include <vector>

#include "pdfmvqa/evalkit.hpp"

using namespace pdfmvqa;
using namespace pdfmvqa::evalkit;

namespace {

// Brute-force definitional implementations, kept independent of the library
// path: element-by-element set walks, no reuse of evalkit internals.
int em_oracle(const std::set<int>& pred, const std::set<int>& gt) {
    for (int p : pred) {
        if (gt.find(p) == gt.end()) return 0;
    }
    for (int g : gt) {
        if (pred.find(g) == pred.end()) return 0;
    }
    return 1;
}

int pm_oracle(const std::set<int>& pred, const std::set<int>& gt) {
    if (pred.empty()) return 0;
    for (int p : pred) {
        if (gt.find(p) == gt.end()) return 0;
    }
    return 1;
}

double mr_oracle(const std::set<int>& pred, const std::set<int>& gt) {
    int tp = 0;
    for (int g : gt) {
        if (pred.find(g) != pred.end()) ++tp;
    }
    return static_cast<double>(tp) / static_cast<double>(gt.size());
}

std::set<int> subset_of_universe(int mask, int universe) {
    std::set<int> s;
    for (int i = 0; i < universe; ++i) {
        if (mask & (1 << i)) s.insert(i);
    }
    return s;
}

}  // namespace

TEST_CASE("worked example: half-retrieved paragraph pair") {
    std::set<int> gt = {11, 12};   // E_p1, E_p2
    std::set<int> pred = {11};     // E_p1 only
    CHECK(exact_match(pred, gt) == 0);
    CHECK(partial_match(pred, gt) == 1);
    CHECK(multilabel_recall(pred, gt) == 0.5);
}

TEST_CASE("metric basics") {
    std::set<int> gt = {1, 2};
    CHECK(exact_match({1, 2}, gt) == 1);
    CHECK(exact_match({1, 2, 3}, gt) == 0);  // superset is not exact
    CHECK(partial_match({}, gt) == 0);
    CHECK(partial_match({1, 9}, gt) == 0);
    CHECK(multilabel_recall(gt, gt) == 1.0);
    CHECK(multilabel_recall({7}, gt) == 0.0);
    CHECK_THROWS_AS(exact_match({1}, {}), std::invalid_argument);
    CHECK_THROWS_AS(partial_match({1}, {}), std::invalid_argument);
    CHECK_THROWS_AS(multilabel_recall({1}, {}), std::invalid_argument);
}

TEST_CASE("exhaustive oracle equivalence over a 4-entity universe") {
    for (int pred_mask = 0; pred_mask < 16; ++pred_mask) {
        for (int gt_mask = 1; gt_mask < 16; ++gt_mask) {
            auto pred = subset_of_universe(pred_mask, 4);
            auto gt = subset_of_universe(gt_mask, 4);
            CAPTURE(pred_mask, gt_mask);
            CHECK(exact_match(pred, gt) == em_oracle(pred, gt));
            CHECK(partial_match(pred, gt) == pm_oracle(pred, gt));
            CHECK(multilabel_recall(pred, gt) == mr_oracle(pred, gt));
        }
    }
}

TEST_CASE("per-question ordering: em <= pm and em <= mr") {
    std::mt19937_64 rng(123);
    std::uniform_int_distribution<int> pick(0, 9);
    for (int trial = 0; trial < 1000; ++trial) {
        std::set<int> pred, gt;
        int n_pred = pick(rng) % 5;
        for (int i = 0; i < n_pred; ++i) pred.insert(pick(rng));
        int n_gt = 1 + pick(rng) % 4;
        while (static_cast<int>(gt.size()) < n_gt) gt.insert(pick(rng));
        int em = exact_match(pred, gt);
        int pm = partial_match(pred, gt);
        double mr = multilabel_recall(pred, gt);
        CHECK(em <= pm);
        CHECK(static_cast<double>(em) <= mr);
        CHECK((mr == 0.0) == (pm == 0 && em == 0 && [&] {
                  for (int p : pred) {
                      if (gt.count(p)) return false;
                  }
                  return true;
              }()));
    }
}

TEST_CASE("score_question fills counts and buckets") {
    QASample gold;
    gold.id = 5;
    gold.answer_objt_ids = {3, 4};
    gold.super_section = SuperSection::RD;
    gold.page_range = {2, 6};
    PredictionSet pred;
    pred.question_id = 5;
    pred.predicted_ids = {3, 9};
    MetricResult r = score_question(pred, gold);
    CHECK(r.tp == 1);
    CHECK(r.fn == 1);
    CHECK(r.fp == 1);
    CHECK(r.em == 0);
    CHECK(r.pm == 0);
    CHECK(r.mr == 0.5);
    CHECK(r.n_pages == 5);
    CHECK(page_bucket(r.n_pages) == 5);
}

TEST_CASE("aggregate matches a brute-force one-pass reimplementation") {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> pick(0, 7);
    std::vector<MetricResult> records;
    for (int i = 0; i < 250; ++i) {
        QASample gold;
        gold.id = i;
        int n_gt = 1 + pick(rng) % 3;
        while (static_cast<int>(gold.answer_objt_ids.size()) < n_gt) {
            gold.answer_objt_ids.insert(pick(rng));
        }
        gold.super_section = all_super_sections()[static_cast<std::size_t>(pick(rng)) % 7];
        int a = pick(rng), b = pick(rng);
        gold.page_range = {std::min(a, b), std::max(a, b)};
        PredictionSet pred;
        pred.question_id = i;
        int n_pred = pick(rng) % 4;
        for (int k = 0; k < n_pred; ++k) pred.predicted_ids.insert(pick(rng));
        records.push_back(score_question(pred, gold));
    }
    MetricReport rep = aggregate(records);

    // Independent pass.
    double em_sum = 0, pm_sum = 0, mr_sum = 0;
    for (const auto& r : records) {
        em_sum += r.em;
        pm_sum += r.pm;
        mr_sum += r.mr;
    }
    const auto n = static_cast<double>(records.size());
    CHECK(rep.overall.n == 250);
    CHECK(rep.em() == em_sum / n);
    CHECK(rep.pm() == pm_sum / n);
    CHECK(rep.mr() == mr_sum / n);
    CHECK(rep.em() <= rep.pm());

    // Bucket populations must sum back to the denominator.
    std::int64_t sec_total = 0, page_total = 0;
    for (const auto& [k, v] : rep.by_super_section) sec_total += v.n;
    for (const auto& [k, v] : rep.by_pages) page_total += v.n;
    CHECK(sec_total == rep.overall.n);
    CHECK(page_total == rep.overall.n);
}

TEST_CASE("aggregate rejects duplicate question ids") {
    MetricResult a;
    a.question_id = 1;
    std::vector<MetricResult> recs = {a, a};
    CHECK_THROWS_AS(aggregate(recs), std::invalid_argument);
}

TEST_CASE("unscorable questions leave EM/PM but count as a full MR miss") {
    QASample gold;
    gold.id = 1;
    gold.answer_objt_ids = {0};
    gold.super_section = SuperSection::Intro;
    gold.page_range = {0, 0};
    PredictionSet good;
    good.question_id = 1;
    good.predicted_ids = {0};

    QASample gold2 = gold;
    gold2.id = 2;
    std::vector<MetricResult> recs = {score_question(good, gold),
                                      score_question(PredictionSet{2, {}}, gold2, true)};
    MetricReport rep = aggregate(recs);
    CHECK(rep.overall.n == 2);
    CHECK(rep.overall.n_scored == 1);
    CHECK(rep.em() == 1.0);               // unscorable excluded from denominator
    CHECK(rep.mr() == 0.5);               // but penalized in macro MR
    CHECK(rep.unscorable_count == 1);
}

TEST_CASE("macro and micro MR disagree exactly when question sizes differ") {
    QASample g1;
    g1.id = 1;
    g1.answer_objt_ids = {1, 2, 3, 4};
    g1.page_range = {0, 0};
    QASample g2;
    g2.id = 2;
    g2.answer_objt_ids = {9};
    g2.page_range = {0, 0};
    std::vector<MetricResult> recs = {
        score_question(PredictionSet{1, {1}}, g1),   // mr 0.25, tp 1 fn 3
        score_question(PredictionSet{2, {9}}, g2)};  // mr 1.0, tp 1 fn 0
    CHECK(aggregate(recs, false).mr() == Catch::Approx(0.625));
    CHECK(aggregate(recs, true).mr() == Catch::Approx(2.0 / 5.0));
}

TEST_CASE("report JSON and text table round trip") {
    std::vector<MetricResult> recs;
    QASample g;
    g.id = 0;
    g.answer_objt_ids = {0, 1};
    g.super_section = SuperSection::MM;
    g.page_range = {1, 3};
    recs.push_back(score_question(PredictionSet{0, {0, 1}}, g));
    MetricReport rep = aggregate(recs);
    rep.run_name = "base";
    rep.split_name = "val";
    nlohmann::json j = to_json(rep);
    MetricReport back = report_from_json(j);
    CHECK(back.em() == rep.em());
    CHECK(back.pm() == rep.pm());
    CHECK(back.mr() == rep.mr());
    std::string table = render_report_table({rep, back});
    CHECK(table.find("base") != std::string::npos);
    CHECK(table.find("EM") != std::string::npos);
    // one header + two rows
    CHECK(std::count(table.begin(), table.end(), '\n') == 3);
}

TEST_CASE("cosine and qa correlation") {
    std::vector<double> a = {1, 0, 0};
    std::vector<double> b = {0, 1, 0};
    CHECK(cosine(a, a) == Catch::Approx(1.0));
    CHECK(cosine(a, b) == Catch::Approx(0.0));
    CHECK_THROWS_AS(cosine(a, {0, 0, 0}), std::domain_error);

    // Hand-computed three-question fixture:
    //  q1=(1,0), e1=(1,0)  -> 1
    //  q2=(1,0), e2=(0,1)  -> 0
    //  q3=(3,4), e3=(4,3)  -> 24/25
    std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs = {
        {{1, 0}, {1, 0}}, {{1, 0}, {0, 1}}, {{3, 4}, {4, 3}}};
    auto corr = qa_correlation_from_pairs(pairs);
    CHECK(corr.n_used == 3);
    CHECK(corr.mean_cosine == Catch::Approx((1.0 + 0.0 + 24.0 / 25.0) / 3.0).epsilon(1e-9));

    pairs.push_back({{0, 0}, {1, 0}});
    auto with_skip = qa_correlation_from_pairs(pairs);
    CHECK(with_skip.n_skipped == 1);
    CHECK(with_skip.n_used == 3);
}

TEST_CASE("embedding export table renders one row per entity") {
    std::vector<EntityEmbeddingRow> rows = {
        {"d1", 0, EntityCategory::Paragraph, {0.5, 1.5}},
        {"d1", 1, EntityCategory::Table, {2.0, -1.0}},
    };
    std::string table = render_embedding_table(rows);
    CHECK(std::count(table.begin(), table.end(), '\n') == 3);
    CHECK(table.find("Table") != std::string::npos);
}
