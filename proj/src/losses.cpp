#include "qtg/losses.hpp"

namespace qtg {

Var hinge_loss(Tape& tape, Var scores, int answer_idx, double margin) {
    const Tensor& s = scores.val();
    if (!s.is_matrix() || s.rows() != 1 || s.cols() < 2) {
        throw ContractError("hinge_loss: need a [1, n>=2] score row");
    }
    if (answer_idx < 0 || static_cast<std::size_t>(answer_idx) >= s.cols()) {
        throw ContractError("hinge_loss: answer index out of range");
    }
    if (!(margin > 0.0)) throw ContractError("hinge_loss: margin must be positive");

    std::size_t wrong = (answer_idx == 0) ? 1 : 0;
    for (std::size_t i = 0; i < s.cols(); ++i) {
        if (static_cast<int>(i) == answer_idx) continue;
        if (s.data[i] > s.data[wrong]) wrong = i;
    }
    Var s_c = slice_cols(scores, static_cast<std::size_t>(answer_idx), 1);
    Var s_w = slice_cols(scores, wrong, 1);
    Var gap = sub(s_c, s_w);
    return relu(sub(tape.constant(Tensor::scalar(margin)), gap));
}

Var recon_mse(Tape& tape, Var predicted, const Tensor& actual) {
    if (!predicted.val().is_matrix() || !actual.is_matrix() ||
        !predicted.val().same_shape(actual)) {
        throw ShapeError("recon_mse: predicted and actual shapes disagree");
    }
    const double inv_rows = 1.0 / static_cast<double>(actual.rows());
    Var diff = sub(predicted, tape.constant(actual));
    return scale(sum_all(mul(diff, diff)), inv_rows);
}

TypeLossTerms type_losses(const std::map<int, double>& per_type,
                          const std::map<int, double>& freqs, FreqWeightMode mode) {
    if (per_type.empty()) throw ContractError("type_losses: no per-type losses given");
    double weight_sum = 0.0;
    for (const auto& [qtype, loss] : per_type) {
        const auto it = freqs.find(qtype);
        if (it == freqs.end() || !(it->second > 0.0)) {
            throw ContractError("type_losses: every present type needs a positive frequency");
        }
        weight_sum += (mode == FreqWeightMode::kFrequency) ? it->second : 1.0 / it->second;
        (void)loss;
    }
    TypeLossTerms out;
    for (const auto& [qtype, loss] : per_type) {
        const double f = freqs.at(qtype);
        const double w = ((mode == FreqWeightMode::kFrequency) ? f : 1.0 / f) / weight_sum;
        out.avg_type += loss / static_cast<double>(per_type.size());
        out.freq_weighted += w * loss;
    }
    return out;
}

LossBreakdown total_loss(double hinge, double mse, const std::map<int, double>& per_type,
                         const std::map<int, double>& freqs, FreqWeightMode mode,
                         const LossCoefficients& coefs) {
    LossBreakdown out;
    out.hinge = hinge;
    out.mse = mse;
    out.per_type = per_type;
    if (!per_type.empty()) {
        const TypeLossTerms terms = type_losses(per_type, freqs, mode);
        out.avg_type = terms.avg_type;
        out.freq_weighted = terms.freq_weighted;
    }
    out.total = coefs.hinge * out.hinge + coefs.mse * out.mse + coefs.avg_type * out.avg_type +
                coefs.freq_weighted * out.freq_weighted;
    return out;
}

}  // namespace qtg
