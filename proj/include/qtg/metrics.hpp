#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qtg/data_synth.hpp"

namespace qtg {

struct PredictionRecord {
    std::string id;
    int qtype = 0;
    int predicted_idx = 0;
    int answer_idx = 0;
};

struct TypeAccuracy {
    std::map<int, double> acc;   // per-type accuracy
    std::map<int, double> freq;  // per-type share of the evaluated items
    std::map<int, int> correct;
    std::map<int, int> count;
    int total = 0;
};

TypeAccuracy per_type_accuracy(const std::vector<PredictionRecord>& predictions);

/// Equal Weight Average Accuracy: plain mean of the per-type accuracies.
double ewaa(const std::map<int, double>& acc);

/// Inverse Frequency-Weighted Average Accuracy:
/// (sum acc_i / f_i) / (sum 1 / f_i). Equal frequencies reduce to the
/// unweighted mean exactly.
double ifwaa(const std::map<int, double>& acc, const std::map<int, double>& freq);

enum class FreqSource {
    kEvalSplit,  // frequencies of the split being scored
    kManifest,   // frequencies across every split in the manifest
};

struct EvalReport {
    std::string split;
    std::uint64_t seed = 0;
    std::string config_digest;
    int item_count = 0;
    std::vector<std::string> type_names;
    std::map<int, double> acc;
    std::map<int, double> freq;
    double avg_acc = 0.0;  // micro accuracy over all items
    double ifwaa_value = 0.0;
    double ewaa_value = 0.0;
};

EvalReport build_report(const std::vector<PredictionRecord>& predictions,
                        const DatasetManifest& manifest, const std::string& split,
                        std::uint64_t seed, const std::string& config_digest,
                        FreqSource freq_source = FreqSource::kEvalSplit);

/// Canonical JSON (sorted keys, full float precision); byte-stable across runs.
std::string report_json(const EvalReport& report);

/// One-screen aligned table with percentages rounded half away from zero.
std::string report_table(const EvalReport& report);

/// Half-away-from-zero rounding to one decimal, as shown in tables.
double round1(double percent);

}  // namespace qtg
