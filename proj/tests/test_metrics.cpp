#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "qtg/metrics.hpp"
#include "qtg/rng.hpp"

using namespace qtg;

namespace {

std::map<int, double> to_map(const std::vector<double>& v) {
    std::map<int, double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<int>(i)] = v[i];
    return out;
}

DatasetManifest fake_manifest(int n_types) {
    DatasetManifest m;
    m.n_types = n_types;
    for (int i = 0; i < n_types; ++i) {
        m.type_names.push_back("type" + std::to_string(i));
        m.semantic_types.push_back(i);
    }
    m.counts["test"] = std::vector<int>(static_cast<std::size_t>(n_types), 0);
    return m;
}

}  // namespace

TEST_CASE("per_type_accuracy counts by hand") {
    std::vector<PredictionRecord> preds;
    preds.push_back({"a", 0, 1, 1});
    preds.push_back({"b", 0, 2, 2});
    preds.push_back({"c", 0, 0, 3});
    preds.push_back({"d", 1, 1, 1});
    const TypeAccuracy t = per_type_accuracy(preds);
    CHECK(t.acc.at(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(t.acc.at(1) == 1.0);
    CHECK(t.freq.at(0) == 0.75);
    CHECK(t.freq.at(1) == 0.25);

    std::vector<PredictionRecord> perfect(5, {"x", 2, 1, 1});
    for (const auto& [qtype, acc] : per_type_accuracy(perfect).acc) CHECK(acc == 1.0);

    std::vector<PredictionRecord> wrong(5, {"x", 2, 0, 1});
    for (const auto& [qtype, acc] : per_type_accuracy(wrong).acc) CHECK(acc == 0.0);

    CHECK_THROWS_AS(per_type_accuracy({}), ContractError);
}

TEST_CASE("ewaa reproduces reference accuracy rows") {
    // Published per-type accuracy rows whose equal-weight means are known.
    CHECK(std::abs(ewaa(to_map({44.7, 44.8, 48.2, 56.8, 41.9, 47.8})) - 47.4) <= 0.05);
    CHECK(std::abs(ewaa(to_map({25.6, 20.1, 34.0, 30.8, 22.8, 28.8})) - 27.0) <= 0.05);
    CHECK(std::abs(ewaa(to_map({39.8, 35.1, 46.6, 45.6, 37.2, 40.5})) - 40.8) <= 0.05);
    CHECK(ewaa(to_map({0.5, 0.5, 0.5})) == 0.5);
}

TEST_CASE("ifwaa formula cases") {
    // Equal frequencies reduce to the unweighted mean exactly.
    const auto acc = to_map({0.31, 0.62, 0.93});
    const auto eq = to_map({0.2, 0.2, 0.2});
    CHECK(ifwaa(acc, eq) == ewaa(acc));

    // Single type.
    CHECK(ifwaa(to_map({0.77}), to_map({1.0})) == 0.77);

    // Direct rational evaluation: accs (0.2, 0.8), freqs (0.9, 0.1) -> 0.74.
    CHECK(std::abs(ifwaa(to_map({0.2, 0.8}), to_map({0.9, 0.1})) - 0.74) <= 0.005);

    CHECK_THROWS_AS(ifwaa(to_map({0.5, 0.5}), to_map({0.5, 0.0})), ContractError);
}

TEST_CASE("ifwaa agrees with a brute-force evaluation on random instances") {
    Rng rng(2024);
    for (int rep = 0; rep < 1000; ++rep) {
        const int n = 2 + static_cast<int>(rng.below(5));
        std::map<int, double> acc, freq;
        double fsum = 0.0;
        for (int q = 0; q < n; ++q) {
            acc[q] = rng.uniform();
            freq[q] = rng.uniform(0.01, 1.0);
            fsum += freq[q];
        }
        for (auto& [q, f] : freq) f /= fsum;

        double num = 0.0, den = 0.0;
        for (int q = 0; q < n; ++q) {
            num += acc[q] / freq[q];
            den += 1.0 / freq[q];
        }
        CHECK(std::abs(ifwaa(acc, freq) - num / den) < 1e-12);

        // Bounds and permutation invariance.
        double lo = 1e300, hi = -1e300;
        for (const auto& [q, a] : acc) {
            lo = std::min(lo, a);
            hi = std::max(hi, a);
        }
        const double v = ifwaa(acc, freq);
        const double e = ewaa(acc);
        CHECK(v >= lo - 1e-12);
        CHECK(v <= hi + 1e-12);
        CHECK(e >= lo - 1e-12);
        CHECK(e <= hi + 1e-12);

        std::map<int, double> acc_p, freq_p;
        for (int q = 0; q < n; ++q) {
            acc_p[(q + 1) % n] = acc[q];
            freq_p[(q + 1) % n] = freq[q];
        }
        CHECK(std::abs(ifwaa(acc_p, freq_p) - v) < 1e-12);
        CHECK(std::abs(ewaa(acc_p) - e) < 1e-12);
    }
}

TEST_CASE("raising a type's frequency pulls IFWAA away from its accuracy") {
    Rng rng(31337);
    for (int rep = 0; rep < 200; ++rep) {
        const double a0 = rng.uniform(), a1 = rng.uniform();
        if (std::abs(a0 - a1) < 1e-3) continue;
        const double f0 = rng.uniform(0.1, 0.8);
        const double bump = rng.uniform(0.01, 1.0 - f0 - 0.05);
        const auto acc = to_map({a0, a1});
        const double before = ifwaa(acc, to_map({f0, 1.0 - f0}));
        const double after = ifwaa(acc, to_map({f0 + bump, 1.0 - f0 - bump}));
        // Type 0 got more frequent, so its inverse weight shrank.
        CHECK(std::abs(after - a0) >= std::abs(before - a0) - 1e-12);
    }
}

TEST_CASE("build_report derived example and internal consistency") {
    std::vector<PredictionRecord> preds;
    preds.push_back({"a", 0, 1, 1});
    preds.push_back({"b", 0, 2, 2});
    preds.push_back({"c", 0, 0, 3});
    preds.push_back({"d", 1, 1, 1});
    const EvalReport r = build_report(preds, fake_manifest(2), "test", 7, "digest");
    CHECK(r.ewaa_value == doctest::Approx(0.8333).epsilon(1e-3));
    CHECK(r.ifwaa_value == doctest::Approx(0.9167).epsilon(1e-3));
    CHECK(r.avg_acc == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(r.item_count == 4);

    // Micro accuracy equals the frequency-weighted accuracy sum.
    double micro = 0.0;
    for (const auto& [q, a] : r.acc) micro += r.freq.at(q) * a;
    CHECK(std::abs(micro - r.avg_acc) < 1e-12);

    // Perfect predictor saturates every metric.
    std::vector<PredictionRecord> perfect;
    for (int i = 0; i < 10; ++i) perfect.push_back({"p", i % 2, 1, 1});
    const EvalReport rp = build_report(perfect, fake_manifest(2), "test", 7, "digest");
    CHECK(rp.avg_acc == 1.0);
    CHECK(rp.ifwaa_value == 1.0);
    CHECK(rp.ewaa_value == 1.0);

    // Unknown type refuses.
    std::vector<PredictionRecord> stray{{"s", 5, 0, 0}};
    CHECK_THROWS_AS(build_report(stray, fake_manifest(2), "test", 7, "digest"), ContractError);
}

TEST_CASE("report serialization is canonical and deterministic") {
    std::vector<PredictionRecord> preds;
    Rng rng(99);
    for (int i = 0; i < 40; ++i) {
        const int q = static_cast<int>(rng.below(3));
        const int ans = static_cast<int>(rng.below(4));
        const int got = rng.uniform() < 0.6 ? ans : static_cast<int>(rng.below(4));
        preds.push_back({"id" + std::to_string(i), q, got, ans});
    }
    const EvalReport r1 = build_report(preds, fake_manifest(3), "val", 3, "abc");
    const EvalReport r2 = build_report(preds, fake_manifest(3), "val", 3, "abc");
    CHECK(report_json(r1) == report_json(r2));
    CHECK(report_table(r1) == report_table(r2));
    CHECK(report_json(r1).find("per_type_accuracy") != std::string::npos);
}

TEST_CASE("random-uniform predictor lands near the binomial expectation") {
    Rng rng(1234);
    std::vector<PredictionRecord> preds;
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
        preds.push_back({"r", 0, static_cast<int>(rng.below(4)), static_cast<int>(rng.below(4))});
    }
    const TypeAccuracy t = per_type_accuracy(preds);
    // Three-sigma band around 0.25 at n = 4000.
    const double sigma = std::sqrt(0.25 * 0.75 / n);
    CHECK(std::abs(t.acc.at(0) - 0.25) < 3.0 * sigma + 1e-12);
}

TEST_CASE("table rounding is half away from zero") {
    CHECK(round1(47.35) == 47.4);
    CHECK(round1(47.34) == 47.3);
    CHECK(round1(-1.25) == -1.3);
}
