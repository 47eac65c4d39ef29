#include "qtg/awmtl.hpp"

#include "qtg/tensor.hpp"

namespace qtg {

TypeState::TypeState(int n_types, AwmtlOptions options) : options_(options) {
    if (n_types < 1) throw ContractError("TypeState: need at least one type");
    per_type_.resize(static_cast<std::size_t>(n_types));
    refresh();
}

std::size_t TypeState::check(int q) const {
    if (q < 0 || static_cast<std::size_t>(q) >= per_type_.size()) {
        throw ContractError("TypeState: unknown question type " + std::to_string(q));
    }
    return static_cast<std::size_t>(q);
}

void TypeState::update_stats(int qtype, double batch_loss, double batch_acc) {
    PerType& s = per_type_[check(qtype)];
    if (!(batch_loss >= 0.0)) throw ContractError("update_stats: loss must be non-negative");
    if (!(batch_acc >= 0.0 && batch_acc <= 1.0)) {
        throw ContractError("update_stats: accuracy must lie in [0, 1]");
    }
    const double beta = options_.ema_decay;
    s.running_loss = beta * s.running_loss + (1.0 - beta) * batch_loss;
    s.running_acc = beta * s.running_acc + (1.0 - beta) * batch_acc;
    s.observed = true;
}

std::vector<double> compute_difficulty(const TypeState& state) {
    const double alpha = state.options().alpha;
    std::vector<double> p(state.per_type_.size(), 0.0);
    double observed_sum = 0.0;
    std::size_t observed_n = 0;
    for (std::size_t q = 0; q < state.per_type_.size(); ++q) {
        const auto& s = state.per_type_[q];
        if (!s.observed) continue;
        p[q] = alpha * s.running_loss + (1.0 - alpha) * (1.0 - s.running_acc);
        observed_sum += p[q];
        ++observed_n;
    }
    const double cold = (observed_n > 0) ? observed_sum / static_cast<double>(observed_n) : 0.0;
    for (std::size_t q = 0; q < state.per_type_.size(); ++q) {
        if (!state.per_type_[q].observed) p[q] = cold;
    }
    return p;
}

std::vector<double> compute_weights(const TypeState& state) {
    std::vector<double> p = compute_difficulty(state);
    if (!state.options().flipped_sign) {
        for (double& v : p) v = -v;
    }
    return stable_softmax(p);
}

std::vector<double> adapt_lr(const TypeState& state) {
    std::vector<double> w = compute_weights(state);
    const double eta = state.options().base_lr;
    const double factor =
        state.options().normalize_by_n ? eta * static_cast<double>(w.size()) : eta;
    for (double& v : w) v *= factor;
    return w;
}

void TypeState::refresh() {
    const std::vector<double> p = compute_difficulty(*this);
    const std::vector<double> w = compute_weights(*this);
    const std::vector<double> lr = adapt_lr(*this);
    for (std::size_t q = 0; q < per_type_.size(); ++q) {
        per_type_[q].difficulty = p[q];
        per_type_[q].weight = w[q];
        per_type_[q].lr = lr[q];
    }
}

}  // namespace qtg
