#pragma once

#include <map>

#include "qtg/tensor.hpp"

namespace qtg {

/// Margin loss max(0, margin - (s_correct - s_best_wrong)). Graph-valued so
/// gradients reach the scorer; the best wrong candidate is fixed from the
/// forward values, which is the usual subgradient of the max.
Var hinge_loss(Tape& tape, Var scores, int answer_idx, double margin);

/// Mean over evaluated rows of the squared L2 distance between predicted and
/// actual frames.
Var recon_mse(Tape& tape, Var predicted, const Tensor& actual);

enum class FreqWeightMode {
    kFrequency,  // weight by normalized raw frequency
    kInverse,    // weight by normalized inverse frequency
};

struct TypeLossTerms {
    double avg_type = 0.0;
    double freq_weighted = 0.0;
};

/// Per-type mean and frequency-weighted aggregate of per-type losses. Types
/// absent from `per_type` contribute nothing; weights are normalized over the
/// types present.
TypeLossTerms type_losses(const std::map<int, double>& per_type,
                          const std::map<int, double>& freqs,
                          FreqWeightMode mode = FreqWeightMode::kFrequency);

struct LossCoefficients {
    double hinge = 1.0;
    double mse = 1.0;
    double avg_type = 1.0;
    double freq_weighted = 1.0;
};

struct LossBreakdown {
    double hinge = 0.0;
    double mse = 0.0;
    double avg_type = 0.0;
    double freq_weighted = 0.0;
    double total = 0.0;
    std::map<int, double> per_type;  // per-type base losses of the batch
};

LossBreakdown total_loss(double hinge, double mse, const std::map<int, double>& per_type,
                         const std::map<int, double>& freqs,
                         FreqWeightMode mode = FreqWeightMode::kFrequency,
                         const LossCoefficients& coefs = {});

}  // namespace qtg
