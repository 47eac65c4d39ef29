#include "qtg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace qtg {

TypeAccuracy per_type_accuracy(const std::vector<PredictionRecord>& predictions) {
    if (predictions.empty()) throw ContractError("per_type_accuracy: no predictions");
    TypeAccuracy out;
    for (const PredictionRecord& p : predictions) {
        if (p.qtype < 0) throw ContractError("per_type_accuracy: negative question type");
        ++out.count[p.qtype];
        if (p.predicted_idx == p.answer_idx) ++out.correct[p.qtype];
        ++out.total;
    }
    for (const auto& [qtype, n] : out.count) {
        out.acc[qtype] =
            static_cast<double>(out.correct[qtype]) / static_cast<double>(n);
        out.freq[qtype] = static_cast<double>(n) / static_cast<double>(out.total);
    }
    return out;
}

double ewaa(const std::map<int, double>& acc) {
    if (acc.empty()) throw ContractError("ewaa: no per-type accuracies");
    double sum = 0.0;
    for (const auto& [qtype, a] : acc) sum += a;
    return sum / static_cast<double>(acc.size());
}

double ifwaa(const std::map<int, double>& acc, const std::map<int, double>& freq) {
    if (acc.empty()) throw ContractError("ifwaa: no per-type accuracies");
    bool all_equal = true;
    double first = 0.0;
    bool have_first = false;
    for (const auto& [qtype, a] : acc) {
        const auto it = freq.find(qtype);
        if (it == freq.end() || !(it->second > 0.0)) {
            throw ContractError("ifwaa: a type with no examples has no accuracy");
        }
        if (!have_first) {
            first = it->second;
            have_first = true;
        } else if (it->second != first) {
            all_equal = false;
        }
        (void)a;
    }
    // Equal frequencies cancel exactly; evaluating the ratio would reintroduce
    // rounding, so reduce to the unweighted mean directly.
    if (all_equal) return ewaa(acc);
    double num = 0.0, den = 0.0;
    for (const auto& [qtype, a] : acc) {
        const double inv = 1.0 / freq.at(qtype);
        num += a * inv;
        den += inv;
    }
    return num / den;
}

EvalReport build_report(const std::vector<PredictionRecord>& predictions,
                        const DatasetManifest& manifest, const std::string& split,
                        std::uint64_t seed, const std::string& config_digest,
                        FreqSource freq_source) {
    const TypeAccuracy stats = per_type_accuracy(predictions);
    for (const auto& [qtype, n] : stats.count) {
        if (qtype >= manifest.n_types) {
            throw ContractError("build_report: prediction type " + std::to_string(qtype) +
                                " is not in the manifest");
        }
        (void)n;
    }

    EvalReport report;
    report.split = split;
    report.seed = seed;
    report.config_digest = config_digest;
    report.item_count = stats.total;
    report.type_names = manifest.type_names;
    report.acc = stats.acc;
    if (freq_source == FreqSource::kEvalSplit) {
        report.freq = stats.freq;
    } else {
        std::map<int, double> freq;
        double grand = 0.0;
        std::map<int, double> totals;
        for (const auto& [sp, counts] : manifest.counts) {
            for (std::size_t q = 0; q < counts.size(); ++q) {
                totals[static_cast<int>(q)] += counts[q];
                grand += counts[q];
            }
            (void)sp;
        }
        for (const auto& [qtype, a] : stats.acc) {
            freq[qtype] = totals[qtype] / grand;
            (void)a;
        }
        report.freq = freq;
    }

    int correct = 0;
    for (const auto& [qtype, n] : stats.correct) {
        correct += n;
        (void)qtype;
    }
    report.avg_acc = static_cast<double>(correct) / static_cast<double>(stats.total);
    report.ewaa_value = ewaa(report.acc);
    report.ifwaa_value = ifwaa(report.acc, report.freq);
    return report;
}

std::string report_json(const EvalReport& report) {
    nlohmann::json j;
    j["split"] = report.split;
    j["seed"] = report.seed;
    j["config_digest"] = report.config_digest;
    j["item_count"] = report.item_count;
    nlohmann::json acc = nlohmann::json::object();
    nlohmann::json freq = nlohmann::json::object();
    for (const auto& [qtype, a] : report.acc) {
        const std::string name = (qtype < static_cast<int>(report.type_names.size()))
                                     ? report.type_names[static_cast<std::size_t>(qtype)]
                                     : std::to_string(qtype);
        acc[name] = a;
        freq[name] = report.freq.at(qtype);
    }
    j["per_type_accuracy"] = acc;
    j["per_type_frequency"] = freq;
    j["avg_acc"] = report.avg_acc;
    j["ifwaa"] = report.ifwaa_value;
    j["ewaa"] = report.ewaa_value;
    return j.dump(2) + "\n";
}

double round1(double percent) {
    return std::round(percent * 10.0) / 10.0;
}

std::string report_table(const EvalReport& report) {
    std::ostringstream os;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "eval report  split=%s  items=%d\n", report.split.c_str(),
                  report.item_count);
    os << buf;
    os << "  type                 acc%   freq%\n";
    for (const auto& [qtype, a] : report.acc) {
        const std::string name = (qtype < static_cast<int>(report.type_names.size()))
                                     ? report.type_names[static_cast<std::size_t>(qtype)]
                                     : std::to_string(qtype);
        std::snprintf(buf, sizeof(buf), "  %-18s %6.1f  %6.1f\n", name.c_str(),
                      round1(100.0 * a), round1(100.0 * report.freq.at(qtype)));
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "  %-18s %6.1f\n", "Avg-acc", round1(100.0 * report.avg_acc));
    os << buf;
    std::snprintf(buf, sizeof(buf), "  %-18s %6.1f\n", "IFWAA", round1(100.0 * report.ifwaa_value));
    os << buf;
    std::snprintf(buf, sizeof(buf), "  %-18s %6.1f\n", "EWAA", round1(100.0 * report.ewaa_value));
    os << buf;
    return os.str();
}

}  // namespace qtg
