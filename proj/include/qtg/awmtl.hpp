#pragma once

#include <vector>

#include "qtg/errors.hpp"

namespace qtg {

struct AwmtlOptions {
    double alpha = 0.5;      // balance between loss and (1 - accuracy)
    double ema_decay = 0.9;  // beta of the per-type running statistics
    double base_lr = 3e-4;
    bool flipped_sign = false;    // softmax(+P) instead of softmax(-P)
    bool normalize_by_n = false;  // lr_q = base_lr * N * w_q
};

/// Per-type running statistics plus the derived difficulty, attention weight
/// and adapted learning rate of the feedback loop.
class TypeState {
  public:
    TypeState(int n_types, AwmtlOptions options);

    /// EMA update of the touched type: running <- beta*running + (1-beta)*batch.
    void update_stats(int qtype, double batch_loss, double batch_acc);

    /// Recomputes difficulty, weights and learning rates from the stats.
    void refresh();

    int n_types() const { return static_cast<int>(per_type_.size()); }
    const AwmtlOptions& options() const { return options_; }

    bool observed(int q) const { return per_type_.at(check(q)).observed; }
    double running_loss(int q) const { return per_type_.at(check(q)).running_loss; }
    double running_acc(int q) const { return per_type_.at(check(q)).running_acc; }
    double difficulty(int q) const { return per_type_.at(check(q)).difficulty; }
    double weight(int q) const { return per_type_.at(check(q)).weight; }
    double lr(int q) const { return per_type_.at(check(q)).lr; }

  private:
    struct PerType {
        double running_loss = 0.0;
        double running_acc = 0.0;
        bool observed = false;
        double difficulty = 0.0;
        double weight = 0.0;
        double lr = 0.0;
    };
    std::size_t check(int q) const;

    std::vector<PerType> per_type_;
    AwmtlOptions options_;

    friend std::vector<double> compute_difficulty(const TypeState& state);
};

/// P_q = alpha * Loss_q + (1 - alpha) * (1 - Acc_q). Types without any
/// observation yet take the mean of the observed difficulties (uniform when
/// none are observed), which keeps the first softmax flat.
std::vector<double> compute_difficulty(const TypeState& state);

/// w = softmax(-P) (or softmax(+P) when flipped), max-subtracted.
std::vector<double> compute_weights(const TypeState& state);

/// lr_q = base_lr * w_q, or base_lr * N * w_q with normalize_by_n.
std::vector<double> adapt_lr(const TypeState& state);

}  // namespace qtg
